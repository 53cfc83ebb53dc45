"""U-voter and U-Ising dynamics with frozen vertices: classification, geometry, simulation, analysis."""

__version__ = "0.1.0"
