"""Python surface over the C++ core.

Everything heavy lives in the compiled ``_dkroot`` module; this package just
re-exports it under a flat namespace.
"""

from ._dkroot import *  # noqa: F401,F403
from ._dkroot import __doc__  # noqa: F401
