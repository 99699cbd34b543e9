"""Parametric-depth feature lifting, occupancy aggregation and visibility in BEV."""

__version__ = "0.1.0"
