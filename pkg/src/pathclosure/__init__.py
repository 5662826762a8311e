"""Optimal-closure reduced dynamics on exponential-family trial manifolds."""
__version__ = "0.1.0"
