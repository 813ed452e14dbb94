"""Automated portfolio construction and per-setting selection of negotiation strategies."""

__version__ = "0.1.0"
