"""Kernel backend selection.

``impl`` points at the compiled Cython module when it imported cleanly,
else at the pure-Python twin.  Both expose the same functions and
consume the PCG64 uniform stream in the same order, so results are
bit-identical for a given seed; set ``PHYLOCOMB_BACKEND=pure`` to force
the fallback (anything else prefers the extension).
"""

import os

from . import pure

BACKEND = "pure"
impl = pure

if os.environ.get("PHYLOCOMB_BACKEND", "").lower() != "pure":
    try:
        from . import _speed as impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        pass

__all__ = ["impl", "pure", "BACKEND"]
