"""Honeynet attack lab: simulated Sebek-style monitor, honeywall, and the NoSEBrEaK toolkit."""

__version__ = "0.1.0"
