from ._meshcorr import *  # noqa: F401,F403
from ._meshcorr import __doc__  # noqa: F401
