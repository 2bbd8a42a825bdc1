"""Field derivatives of FDTD simulations from equivalent sources."""

__version__ = "0.1.0"
