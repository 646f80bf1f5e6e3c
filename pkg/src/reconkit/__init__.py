"""Metric-scale multi-view point-map reconstruction geometry, losses,
metrics, PnP, forward kinematics, and a procedural scene oracle."""

__version__ = "0.1.0"
