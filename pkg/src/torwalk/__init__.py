"""Random-length random walks, SAW and Ising worm dynamics on d-dimensional
tori, with exact dynamic-programming cross-checks and finite-size-scaling
analysis tools."""

__version__ = "0.1.0"
