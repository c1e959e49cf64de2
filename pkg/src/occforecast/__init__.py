"""Occupancy-level forecasting for bike-sharing stations."""

__version__ = "0.1.0"
