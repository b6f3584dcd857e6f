"""Bayesian uncertainty quantification for WiFi CSI motion sensing."""

__version__ = "0.1.0"
