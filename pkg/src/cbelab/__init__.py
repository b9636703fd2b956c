"""Monte Carlo and exact oracles for circular beta ensembles, Sine_beta and the stochastic zeta function."""
from __future__ import annotations

__version__ = "0.1.0"
