"""Mutex-masked self-supervised pre-training for periodic crystals."""

try:
    from ._core import *  # noqa: F401,F403  installed layout: mmpt/_core*.so
    from ._core import __doc__ as _doc
except ImportError:  # build-tree layout: _core*.so sits directly on sys.path
    from _core import *  # noqa: F401,F403
    from _core import __doc__ as _doc

__doc__ = _doc
