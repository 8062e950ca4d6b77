"""PPO surrogate objectives, policy families, and the bandit failure-mode lab."""

__version__ = "0.1.0"
