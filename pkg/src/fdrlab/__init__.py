"""Numerical laboratory for noisy circuits and the fluctuation-dissipation relation.

Modules: ``randpath`` (reproducible Wiener paths), ``stochint`` (alpha-rule
integrals and SDE schemes), ``circuit`` (physical and restarted energy paths),
``bsde`` (backward Langevin pairs), ``mc`` (ensembles and checks) and ``cli``.
"""

__version__ = "0.1.0"
