"""Simulation and analysis laboratory for crowd-sourced reputation mechanisms.

The package is organized in layers; each layer only imports from the ones
below it:

- :mod:`replab.numerics` -- special functions, root finding, quadrature
- :mod:`replab.core` -- agents, environments, messages, outcomes, utilities
- :mod:`replab.mechanisms` -- reputation/tax rules mapping messages to outcomes
- :mod:`replab.strategies` -- best responses and equilibrium self-reports
- :mod:`replab.analysis` -- closed-form accuracy and participation results
- :mod:`replab.simulator` -- seeded Monte Carlo scenario runner
- :mod:`replab.cli` -- the ``replab`` command line front end
"""

__version__ = "0.1.0"
