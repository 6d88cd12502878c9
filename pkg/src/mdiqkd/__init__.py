"""Key-rate simulator for phase-encoded MDI-QKD with imperfect sources and

ensemble-based quantum memories.  Rates are obtained from exact density-matrix
evolution on truncated Fock spaces and cross-validated by an independent
unitary-dilation oracle and Monte Carlo click sampling."""

__version__ = "0.1.0"
