"""Kernel backend selection.

Tries the compiled extension first and falls back to the numpy versions.
``SCM_BACKEND`` forces a choice (``auto``, ``cython``, or ``python``);
``use()`` switches at runtime, which the benchmark and parity tests rely on.
"""

import os

from scmsel import _kernels_py
from scmsel.errors import ConfigError

try:
    from scmsel import _core
except ImportError:
    _core = None

_IMPLS = {"python": _kernels_py}
if _core is not None:
    _IMPLS["cython"] = _core

active = _kernels_py
name = "python"


def available() -> list[str]:
    return sorted(_IMPLS)


def use(which: str) -> None:
    """Switch the active kernel implementation."""
    global active, name
    if which == "auto":
        which = "cython" if _core is not None else "python"
    if which not in _IMPLS:
        raise ConfigError(
            f"kernel backend '{which}' not available (have: {available()})"
        )
    active = _IMPLS[which]
    name = which


use(os.environ.get("SCM_BACKEND", "auto"))
