"""Online reinforcement learning with ReLU networks over geometric input transforms."""

__version__ = "0.1.0"
