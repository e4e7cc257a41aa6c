"""Tensor-based channel estimation and closed-form reflection design for
RIS-aided mmWave MIMO links."""

__version__ = "0.1.0"
