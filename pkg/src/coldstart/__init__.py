"""Forecast-driven cold-start mitigation for FaaS invocation traces."""

__version__ = "0.1.0"
