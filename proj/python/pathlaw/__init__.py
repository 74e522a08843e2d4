"""Law-on-paths reconstruction from snapshot series.

Thin wrapper around the compiled extension; see the project README for the
full pipeline (simulate, fit, baselines, path sampling, evaluation).
"""

from ._pathlaw import *  # noqa: F401,F403
from ._pathlaw import __doc__ as _core_doc

__all__ = [n for n in dir() if not n.startswith("_")]
