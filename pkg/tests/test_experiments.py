import json
import math

import numpy as np
import pytest

from cbelab import experiments as ex, specfun
from cbelab.errors import DomainError, HypothesisError
from cbelab.experiments import ExperimentRecord
from cbelab.oracle import brute_force_joint_moment, cue_toeplitz_moment


# --- torus oracle -----------------------------------------------------------

@pytest.mark.parametrize("beta, N, expected", [(2.0, 2, 3.0), (2.0, 1, 2.0)])
def test_oracle_examples(beta, N, expected):
    assert brute_force_joint_moment(beta, N, [0.0], [1.0]) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_oracle_zero_exponents(N):
    assert brute_force_joint_moment(1.5, N, [0.0, 1.0], [0.0, 0.0]) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("N", [1, 2, 3])
@pytest.mark.parametrize("thetas, ms", [([0.0], [1]), ([0.0, 1.0], [1, 1]), ([0.5, 2.0], [2, 1])])
def test_toeplitz_oracle_matches_quadrature(N, thetas, ms):
    quad = brute_force_joint_moment(2.0, N, thetas, [float(m) for m in ms])
    assert cue_toeplitz_moment(N, thetas, ms) == pytest.approx(quad, rel=1e-9)


@pytest.mark.parametrize("N", [8, 100, 512])
def test_toeplitz_oracle_fourth_moment_closed_form(N):
    assert cue_toeplitz_moment(N, [0.0], [2]) == pytest.approx((N + 1) * (N + 2) ** 2 * (N + 3) / 12, rel=1e-8)


def test_toeplitz_oracle_domain():
    with pytest.raises(DomainError):
        cue_toeplitz_moment(4, [0.0], [0.5])
    with pytest.raises(DomainError):
        cue_toeplitz_moment(0, [0.0], [1])


def test_oracle_rejects_large_n():
    with pytest.raises(DomainError):
        brute_force_joint_moment(2.0, 5, [0.0], [1.0])


@pytest.mark.parametrize("beta, N, s", [(1.0, 3, 0.5), (4.0, 2, 1.0), (1.0, 3, 1.5), (2.0, 4, 1.0)])
def test_oracle_matches_morris(beta, N, s):
    val = brute_force_joint_moment(beta, N, [0.0], [s])
    assert val == pytest.approx(math.exp(specfun.morris_moment(beta, N, s)), rel=1e-6)


def test_oracle_two_point_matches_monte_carlo():
    from cbelab import opuc
    beta, N, th = 2.0, 3, 1.0
    exact = brute_force_joint_moment(beta, N, [0.0, th], [1.0, 1.0])
    batch = opuc.sample_chains(beta, N, 100_000, np.random.default_rng(17))
    la = opuc.log_abs_batch(batch.coeffs, np.array([0.0, th]))
    v = np.exp(2 * la.sum(axis=1))
    assert abs(v.mean() - exact) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_oracle_triangle_small():
    t = ex.oracle_triangle(2.0, 2, 1.0, replicas=20_000, seed=3)
    assert t["quad_rel_err"] < 1e-6
    assert abs(t["mc_z"]) < 3


# --- moments of moments -----------------------------------------------------

@pytest.mark.parametrize("proposal", ["tilted", "cbe"])
def test_mom_direct_n1(proposal):
    e = ex.mom_direct(2.0, 1.0, 1.0, 1, replicas=300, seed=1, proposal=proposal)
    assert e.mean == pytest.approx(2.0, rel=1e-10)
    e = ex.mom_direct(2.0, 2.0, 1.0, 1, replicas=300, seed=1, proposal=proposal)
    assert e.mean == pytest.approx(4.0, rel=1e-10)
    s, k = 0.7, 1.5
    inner = math.exp(math.lgamma(1 + 2 * s) - 2 * math.lgamma(1 + s))
    e = ex.mom_direct(1.0, k, s, 1, replicas=300, seed=1, proposal=proposal)
    assert e.mean == pytest.approx(inner ** k, rel=1e-8)


@pytest.mark.parametrize("beta, s, N", [(2.0, 1.0, 16), (1.0, 0.5, 32), (4.0, 1.5, 8)])
def test_mom_direct_k1_is_morris(beta, s, N):
    target = math.exp(specfun.morris_moment(beta, N, s))
    e = ex.mom_direct(beta, 1.0, s, N, replicas=2000, seed=2, proposal="cbe")
    assert abs(e.mean - target) <= 3 * e.stderr
    t = ex.mom_direct(beta, 1.0, s, N, replicas=50, seed=2)
    assert t.mean == pytest.approx(target, rel=1e-9)


def test_mom_direct_proposals_agree():
    a = ex.mom_direct(2.0, 2.0, 1.0, 8, replicas=4000, seed=3, proposal="tilted")
    b = ex.mom_direct(2.0, 2.0, 1.0, 8, replicas=20_000, seed=3, proposal="cbe")
    # β=2, k=2, s=1: M_N is the number of 3-element multisets of N+... here checked only against each other
    assert abs(a.mean - b.mean) <= 3 * math.hypot(a.stderr, b.stderr)
    assert a.ok


def test_mom_direct_quad_nodes_default():
    e = ex.mom_direct(2.0, 2.0, 1.0, 100, replicas=20, seed=1, ess_floor=0)
    assert e.params["quad_nodes"] == 800
    assert ex.default_quad_nodes(10) == 512


def test_momrep_identity():
    N = 16
    d = ex.mom_direct(2.0, 2.0, 1.0, N, replicas=3000, seed=4)
    cj = ex.momrep_cj_side(2.0, 2.0, 1.0, N, replicas=3000, seed=5)
    scale = math.exp(specfun.morris_moment(2.0, N, 2.0))
    assert abs(d.mean - scale * cj.mean) <= 2 * math.hypot(d.stderr, scale * cj.stderr)


def test_mom_scaling_k1_small():
    r = ex.mom_scaling(2.0, 1.0, 1.2, [16, 32, 64], replicas=200, seed=6)
    assert r.predicted == pytest.approx(1.44)
    # k=1 is exact under the tilted proposal, so the slope is the Morris slope
    morris = np.polyfit(np.log([16, 32, 64]), [specfun.morris_moment(2.0, n, 1.2) for n in (16, 32, 64)], 1)[0]
    assert r.slope == pytest.approx(morris, abs=1e-8)


def test_mom_scaling_rejects_subcritical():
    with pytest.raises(HypothesisError):
        ex.mom_scaling(2.0, 1.0, 0.5, [8, 16], replicas=10, seed=1)


def test_mom_limit_rejects_hypothesis_violation():
    with pytest.raises(HypothesisError):
        ex.mom_limit_compare(2.0, 2.0, 0.6, 64, R=10.0, replicas=10, seed=1)


def test_wls_slope_recovers_line():
    x = np.log([8.0, 16.0, 32.0, 64.0])
    y = 1.0 + 2.5 * x
    slope, se, _ = ex._wls_slope(x, y, np.eye(4) * 1e-4)
    assert slope == pytest.approx(2.5)
    assert se > 0


# --- correlations, bound, comparison identity --------------------------------

def test_sine_kernel_correlation():
    assert ex.sine_kernel_correlation([0.0]) == pytest.approx(1 / (2 * math.pi))
    assert ex.sine_kernel_correlation([0.0, 2 * math.pi]) == pytest.approx(1 / (4 * math.pi ** 2))


def test_corr_compare_m1():
    r = ex.corr_compare(2.0, 1, [0.0], {"paths": 1500, "window": 20.0}, seed=7)
    assert r.route_b.mean == pytest.approx(1 / (2 * math.pi), abs=1e-6)
    assert r.route_a.mean == pytest.approx(1 / (2 * math.pi), rel=0.02)


def test_corr_compare_rejects_bad_input():
    with pytest.raises(DomainError):
        ex.corr_compare(2.0, 2, [1.0, 1.0])
    with pytest.raises(DomainError):
        ex.corr_compare(2.0, 2, [1.0])


def test_small_x_pair_correlation_coefficient():
    # route B at small separation: ρ2/x^β → c_const(β, 2), since E|ξ|^β → 1 as x → 0
    x = 0.05
    e = ex.corr_compare(2.0, 2, [0.0, x], {"paths": 1}, replicas=400, seed=8, N=128).route_b
    assert e.mean / x ** 2 == pytest.approx(specfun.c_const(2.0, 2), rel=0.2)


def test_bound_shape_conventions():
    # zero exponents give 0^0 = 1 in every factor, so the shape is the constant 1/8
    assert ex.bound_shape(1.0, [0.0, 0.0], [0.0, 5.0], 2.0) == 0.125
    assert ex.bound_shape(1.0, [1.0], [0.0], 2.0) == 1.0
    # Σr = 2δ kills the one-point factors (each 1/2); the pair factor is 1/(1 + 4^{1/2})
    assert ex.bound_shape(1.0, [1.0, 1.0], [0.0, 4.0], 2.0) == pytest.approx(1 / 12)
    assert ex.bound_shape(2.0, [1.0], [9.0], 2.0) == pytest.approx(1 / (1 + 9 ** 1.5))


def test_bound_verify_trivial_and_hypothesis():
    r = ex.bound_verify(2.0, 1.0, [0.0, 0.0], [[0.0, 3.0]], [16, 32], replicas=100, seed=1)
    assert all(c["estimate"] == pytest.approx(1.0) for c in r.cells)
    assert r.spread == pytest.approx(1.0) and r.passed
    with pytest.raises(HypothesisError):
        ex.bound_verify(2.0, 0.5, [1.0, 1.0], [[0.0, 1.0]], [16], replicas=10, seed=1)


def test_bound_verify_single_point_at_origin():
    r = ex.bound_verify(2.0, 1.0, [1.0], [[0.0]], [16, 64], replicas=100, seed=1)
    assert all(c["estimate"] == pytest.approx(1.0) for c in r.cells)


def test_qu_valko_coefficients():
    c = ex.qu_valko_coefficients(2.0, 5)
    assert c[0] == pytest.approx(-0.5)
    assert np.all(c[1:] == 0.0)
    c4 = ex.qu_valko_coefficients(4.0, 4)
    assert c4[0] == pytest.approx(-2 / 3) and c4[1] == pytest.approx(-2 / 3 * -1 / 4)
    assert np.all(c4[2:] == 0.0)
    assert ex._qv_remainder(2.0, 1) == 0.0
    assert ex._qv_remainder(3.0, 10) > 0.0


def test_qu_valko_beta2_small():
    r = ex.qu_valko_check(2.0, 2.0, replicas=3000, seed=9, N=256, cj_replicas=3000)
    assert r.kmax == 1 and r.remainder == 0.0
    assert abs(r.lhs.mean - r.exact) <= 3 * r.lhs.stderr
    assert abs(r.rhs.mean - r.exact) <= 3 * r.rhs.stderr


def test_phase_tail_small():
    r = ex.phase_tail_check(2.0, 16, 16, 0.0, replicas=2000, seed=3)
    assert r.passed
    assert all(0 <= f <= 1 for f in r.freq)


# --- registry and replay ----------------------------------------------------

def test_record_is_json_roundtrippable():
    rec = ex.run_experiment("mom-direct", {"beta": 2.0, "k": 2.0, "s": 1.0, "n": 8, "replicas": 300}, seed=11)
    d = json.loads(json.dumps(rec.to_dict(), default=ex._json_default))
    assert d["params"]["n"] == 8 and d["seed"] == 11
    back = ExperimentRecord.from_dict(d)
    new, same = ex.replay(back, threads=2)
    assert same


def test_unknown_experiment():
    with pytest.raises(DomainError):
        ex.run_experiment("nope", {})


def test_seed_generated_when_missing():
    rec = ex.run_experiment("mom-direct", {"beta": 2.0, "k": 1.0, "s": 1.0, "n": 4, "replicas": 50})
    assert isinstance(rec.seed, int)


@pytest.mark.parametrize("name, params", [
    ("constants", {"beta": 2.0, "m": 2}),
    ("oracle", {"beta": 1.0, "n": 2, "s": [0.5]}),
    ("bound-verify", {"beta": 2.0, "delta": 1.0, "rs": [1.0, 1.0], "x_configs": [[0.0, 1.0]], "ns": [16, 32],
                      "replicas": 200}),
    ("sine-sim", {"beta": 2.0, "replicas": 40, "window": 8.0, "emit_points": True}),
    ("zeta-eval", {"beta": 2.0, "delta": 1.0, "replicas": 40, "R": 16.0, "zs": [1.0, 2.0]}),
    ("phase-tail", {"beta": 2.0, "replicas": 300, "j": 8, "ell": 8}),
])
def test_every_runner_replays(name, params):
    rec = ex.run_experiment(name, params, seed=12)
    new, same = ex.replay(rec.to_dict(), threads=3)
    assert same
    assert params.items() <= rec.params.items()
