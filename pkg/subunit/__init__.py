"""Sub-unitarity measures and benchmarking simulations for bipartite channels."""

__version__ = "0.1.0"
