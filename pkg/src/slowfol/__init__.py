"""Random slow manifolds and slow-foliation fibers of slow-fast stochastic systems."""

__version__ = "0.1.0"
