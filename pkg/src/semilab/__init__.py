from ._default import ARTIFACT_VERSION
from .density import GridDensity, Grid1D, PiecewisePoly, ProductDensity, l1_distance
from .errors import ModelError, NumericalError, SemilabError
from .numerics import RandomStream

__version__ = ARTIFACT_VERSION
