"""Python bindings for the ARCap engine: kinematics, retargeting, feedback
checks, session recording and analysis."""

import os as _os

_models = _os.path.join(_os.path.dirname(__file__), "models")
if _os.path.isdir(_models):
    _os.environ.setdefault("ARCAP_MODEL_DIR", _models)

from ._core import *  # noqa: E402,F401,F403
from ._core import __doc__  # noqa: E402,F401
