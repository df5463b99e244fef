"""Multi-UAV simulation: potential-flow obstacle avoidance with virtual-rigid-body formations."""

__version__ = "0.1.0"
