"""Evolutionary boundary attack for hard-label black-box classifiers."""
from .attack import AttackConfig, run
from .baseline import BaConfig, run_ba
from .oracle import BudgetExhausted, HighFreqOracle, LinearOracle, SphereOracle, minimal_adversarial_l2
from .trace import AttackTrace

__all__ = [
    "AttackConfig", "AttackTrace", "BaConfig", "BudgetExhausted", "HighFreqOracle",
    "LinearOracle", "SphereOracle", "minimal_adversarial_l2", "run", "run_ba",
]
__version__ = "0.1.0"
