"""Context-aware constrained RL power scheduling for XR downlinks."""

__version__ = "0.1.0"
