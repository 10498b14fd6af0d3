"""phylocomb: random binary phylogenies, exactly and by simulation.

Subpackage map:

* :mod:`phylocomb.trees`: binary tree values, enumeration, Newick.
* :mod:`phylocomb.exact`: rational counts and uniform-model masses.
* :mod:`phylocomb.splitting`: Markov branching models, beta family.
* :mod:`phylocomb.generators`: Yule, Kingman, Galton-Watson samplers.
* :mod:`phylocomb.chrono`: chronological trees and contour paths.
* :mod:`phylocomb.combs`: comb codings of ultrametric spaces.
* :mod:`phylocomb.coalescent`: scale functions, coalescent point
  processes, diversity loss, likelihoods.
* :mod:`phylocomb.cli`: the ``phylocomb`` command line tool.

Monte Carlo hot loops run on a compiled backend when the extension is
available; ``phylocomb._backend.BACKEND`` says which one is active and
the environment variable ``PHYLOCOMB_BACKEND=pure`` forces the
fallback.
"""

from . import trees, exact  # noqa: F401

__version__ = "0.1.0"
__all__ = ["trees", "exact", "__version__"]
