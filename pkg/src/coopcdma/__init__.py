"""Link-level simulator for the uplink of a cooperative DS-CDMA network."""

from .kernels import BACKEND

__version__ = "0.1.0"
