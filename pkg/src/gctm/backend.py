"""Kernel backend selection.

Imports the compiled extension when it is built and importable, otherwise
the pure-numpy twin. ``GCTM_KERNELS=numpy`` (or ``compiled``) forces the
choice; forcing ``compiled`` raises if the extension is missing.
"""

import os

from . import _npkern

_forced = os.environ.get("GCTM_KERNELS", "").strip().lower()

if _forced == "numpy":
    kern = _npkern
    BACKEND = "numpy"
elif _forced == "compiled":
    from . import _ckern as kern  # noqa: F401

    BACKEND = "compiled"
else:
    try:
        from . import _ckern as kern  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        kern = _npkern
        BACKEND = "numpy"
