"""Numba acceleration switch.

Hot numeric kernels ship in two flavours: numba-jitted loops and a pure
numpy fallback.  The active flavour is chosen once at import time:

  * ``CHORDSEG_NUMBA=0`` (or ``false``/``no``) forces the numpy path,
  * otherwise the jitted path is used whenever numba imports cleanly.

``CHORDSEG_THREADS`` caps the number of threads numba may use; kernels are
compiled without ``parallel=True`` unless explicitly requested, so the
default path is single threaded and bit-reproducible.
"""

from __future__ import annotations

import os


def _env_flag(name: str, default: bool) -> bool:
    raw = os.environ.get(name)
    if raw is None:
        return default
    return raw.strip().lower() not in ("0", "false", "no", "off", "")


def _have_numba() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


HAVE_NUMBA = _have_numba()
NUMBA_ENABLED = HAVE_NUMBA and _env_flag("CHORDSEG_NUMBA", True)


def thread_cap() -> int:
    """Worker limit from CHORDSEG_THREADS (>= 1); 1 when unset."""
    raw = os.environ.get("CHORDSEG_THREADS")
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover - exercised only on numba-free installs

    def njit(*args, **kwargs):
        """Identity decorator standing in for numba.njit."""

        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap
