"""Backend selection for the pulse kernel.

The compiled extension is preferred; the numpy implementation is used when
it has not been built. ``BACKEND`` records which one was loaded.
"""

from ._kernel_py import TAG_CROSSTALK, TAG_DARK, TAG_SIGNAL, TAG_SIGNAL_FLIPPED
from . import _kernel_py

try:
    from ._kernel import process_block
    BACKEND = "cython"
except ImportError:  # extension not compiled
    process_block = _kernel_py.process_block
    BACKEND = "python"

__all__ = [
    "BACKEND",
    "TAG_CROSSTALK",
    "TAG_DARK",
    "TAG_SIGNAL",
    "TAG_SIGNAL_FLIPPED",
    "process_block",
]
