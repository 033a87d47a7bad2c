"""Three-stage virtual try-on: clothing warping, parsing estimation and texture fusion."""

from ._core import *  # noqa: F401,F403
from ._core import InvalidInput, TrainingFault  # noqa: F401
