"""Backend switch for the compiled kernels.

Set ``SLICEWATCH_DISABLE_NUMBA=1`` before import to force the pure-numpy
path. Numba is also skipped silently when it cannot be imported.
"""

import os

_FALSY = {"", "0", "false", "no", "off"}


def _env_disabled() -> bool:
    return os.environ.get("SLICEWATCH_DISABLE_NUMBA", "").strip().lower() not in _FALSY


try:
    if _env_disabled():
        raise ImportError("numba disabled by SLICEWATCH_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


BACKEND = "numba" if HAVE_NUMBA else "numpy"
