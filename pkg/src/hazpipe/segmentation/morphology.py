"""Binary erosion, dilation and opening with a square structuring element.

Cells outside the mask count as background for both operations.
"""

from __future__ import annotations

import numpy as np

from ..geometry import BinaryMask


def _sliding(arr: np.ndarray, radius: int, axis: int, reduce) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(arr, pad, constant_values=0)
    n = arr.shape[axis]
    out = None
    for off in range(2 * radius + 1):
        window = np.take(padded, np.arange(off, off + n), axis=axis)
        out = window if out is None else reduce(out, window)
    return out


def erode(mask: BinaryMask, radius: int) -> BinaryMask:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask
    data = _sliding(mask.data, radius, 0, np.minimum)
    return BinaryMask(_sliding(data, radius, 1, np.minimum))


def dilate(mask: BinaryMask, radius: int) -> BinaryMask:
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask
    data = _sliding(mask.data, radius, 0, np.maximum)
    return BinaryMask(_sliding(data, radius, 1, np.maximum))


def morph_open(mask: BinaryMask, radius: int) -> BinaryMask:
    """Erosion followed by dilation with a ``(2r+1) x (2r+1)`` square."""
    return dilate(erode(mask, radius), radius)


def morph_close(mask: BinaryMask, radius: int) -> BinaryMask:
    return erode(dilate(mask, radius), radius)
