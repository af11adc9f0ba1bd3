"""Monte Carlo laboratory for near-critical percolation interfaces."""

__version__ = "0.1.0"

from .hexlattice import (DegenerateDomain, DomainSpec, HexDomain, build_domain,
                         hex_center, neighbors)
from .sampler import (Configuration, CouplingField, NearCriticalParam, OutOfRange,
                      calibrate_alpha4_unit, probability_open, realize,
                      sample_configuration, sample_coupling)

__all__ = [
    "DegenerateDomain", "DomainSpec", "HexDomain", "build_domain", "hex_center",
    "neighbors", "Configuration", "CouplingField", "NearCriticalParam",
    "OutOfRange", "calibrate_alpha4_unit", "probability_open", "realize",
    "sample_configuration", "sample_coupling", "__version__",
]
