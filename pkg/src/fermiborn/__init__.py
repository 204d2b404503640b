"""Trainable fermionic Born machines with exact Z-string expectation values."""

__version__ = "0.1.0"
