"""Heap hygiene for long-running loops.

CPU training and sampling allocate large transient buffers whose shapes
change from batch to batch. glibc's allocator keeps the freed chunks in its
arenas, so resident memory grows without bound even though no object is
retained. Handing the free pages back to the kernel between steps keeps the
process at its true working-set size for a few milliseconds per call.
"""

from __future__ import annotations

import ctypes

try:
    _libc = ctypes.CDLL("libc.so.6")
    _libc.malloc_trim.restype = ctypes.c_int
    _libc.malloc_trim.argtypes = (ctypes.c_size_t,)
except (OSError, AttributeError):  # non-glibc platform
    _libc = None


def release_heap() -> bool:
    """Return freed allocator pages to the OS; no-op where unsupported."""
    if _libc is None:
        return False
    return bool(_libc.malloc_trim(0))
