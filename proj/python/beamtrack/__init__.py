"""mmWave beam tracking: scene simulation, sequence prediction, evaluation.

Thin Python facade over the C++ core. Everything public lives in the
compiled ``_beamtrack`` extension; this package just re-exports it.
"""

from ._beamtrack import *  # noqa: F401,F403
from ._beamtrack import __version__  # noqa: F401
