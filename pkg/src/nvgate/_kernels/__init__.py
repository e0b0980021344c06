"""Random-draw kernels behind the fault schedules.

The compiled extension is used when it was built; otherwise the pure-Python
module with identical output is imported. Set ``NVGATE_PURE_PYTHON=1`` to
force the fallback.
"""

from __future__ import annotations

import hashlib
import os

from . import _pykernels as py

if os.environ.get("NVGATE_PURE_PYTHON"):
    _impl = py
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = py

BACKEND: str = _impl.BACKEND
mix64 = _impl.mix64
uniform = _impl.uniform
uniform_block = _impl.uniform_block
draw_modes = _impl.draw_modes


def derive_key(seed: int, *labels: object) -> int:
    """64-bit stream key from an integer seed and any number of labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed).to_bytes(16, "little", signed=True))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest(), "little")


__all__ = [
    "BACKEND",
    "derive_key",
    "draw_modes",
    "mix64",
    "py",
    "uniform",
    "uniform_block",
]
