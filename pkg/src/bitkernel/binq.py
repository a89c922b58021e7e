"""Sign quantization with exact affine dequantization.

A weight vector w is reduced to one bit per entry by centering it at its
mean, rescaling by the root of the per-entry variance, and taking signs:

    bits_k = +1  if w_k - mean(w) >= 0  else -1
    mean   = (1/d) * sum_k w_k
    scale  = sqrt((1/d) * ||w - mean * 1||^2)

The statistics make the binary inner product exactly invertible up to a
known error vector: for any x,

    scale * <bits, x> + mean * sum(x)  ==  <w, x> + <u(w), x>

with u(w) = scale * bits + mean * 1 - w. The binary inner product itself
needs only sign-selected additions and subtractions of the entries of x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError

WORD_BITS = 64


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-D vector, got ndim={arr.ndim}")
    if arr.size == 0:
        raise InvalidInputError(f"{name} must have at least one entry")
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class BinaryVector:
    """+-1 symbols packed 64 per word, little-endian bit order within a word.

    Bit 1 encodes +1 and bit 0 encodes -1.  Padding bits past `length` are
    forced to zero and ignored by every operation.
    """

    words: np.ndarray
    length: int

    @classmethod
    def pack(cls, signs) -> "BinaryVector":
        """Pack a +-1 vector (or boolean mask, True == +1) into words."""
        arr = np.asarray(signs)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInputError("signs must be a non-empty 1-D vector")
        if arr.dtype == np.bool_:
            mask = arr
        else:
            if not np.isin(arr, (-1, 1)).all():
                raise InvalidInputError("signs must contain only -1 and +1")
            mask = arr > 0
        return cls._from_mask(mask)

    @classmethod
    def _from_mask(cls, mask: np.ndarray) -> "BinaryVector":
        d = mask.size
        n_words = (d + WORD_BITS - 1) // WORD_BITS
        packed = np.packbits(mask, bitorder="little")
        buf = np.zeros(n_words * 8, dtype=np.uint8)
        buf[: packed.size] = packed
        words = buf.view(np.uint64)
        words.flags.writeable = False
        return cls(words=words, length=d)

    def as_bool(self) -> np.ndarray:
        """Boolean mask, True where the symbol is +1."""
        bits = np.unpackbits(self.words.view(np.uint8), bitorder="little",
                             count=self.length)
        return bits.astype(bool)

    def unpack(self) -> np.ndarray:
        """The +-1 symbol vector as int8."""
        mask = self.as_bool()
        return np.where(mask, np.int8(1), np.int8(-1))


@dataclass(frozen=True)
class QuantScale:
    """Per-vector dequantization statistics: mean offset and sign scale."""

    mean: float
    scale: float

    def __post_init__(self):
        if self.scale < 0.0:
            raise InvalidInputError("scale must be nonnegative")


@dataclass(frozen=True, eq=False)
class QuantizedVector:
    bits: BinaryVector
    stats: QuantScale
    dim: int


def _quantize_core(arr: np.ndarray) -> tuple[np.ndarray, float, float]:
    """(bool mask, mean, scale) of a validated vector.

    np.add.reduce is the reduction np.mean wraps, so these statistics match
    the batched column statistics in `net` bit for bit.
    """
    d = arr.size
    if np.all(arr == arr[0]):
        # constant vector: normalization degenerates; the mean alone carries
        # the exact reconstruction (u(w) = 0)
        return np.ones(d, dtype=bool), float(arr[0]), 0.0
    mean = float(np.add.reduce(arr)) / d
    centered = arr - mean
    scale = math.sqrt(float(np.add.reduce(centered * centered)) / d)
    return centered >= 0.0, mean, scale


def quantize(w) -> QuantizedVector:
    """Quantize a weight vector to signs plus (mean, scale) statistics.

    Entries tied with the mean map to +1.  A constant vector has zero
    variance and degenerate normalization; it quantizes to all +1 bits with
    scale 0, which keeps the reconstruction identity exact (u(w) = 0).
    """
    arr = _as_vector(w, "w")
    mask, mean, scale = _quantize_core(arr)
    return QuantizedVector(bits=BinaryVector._from_mask(mask),
                           stats=QuantScale(mean, scale), dim=arr.size)


def _signed_sum(mask: np.ndarray, xv: np.ndarray) -> float:
    # sign-selected add/subtract only: entries of x are never multiplied by
    # the symbols (code-review property, not a runtime assertion)
    return float(np.where(mask, xv, -xv).sum())


def binary_dot(bits: BinaryVector, x) -> float:
    """Signed sum  sum_k s_k * x_k  for s in {-1,+1}^d."""
    xv = _as_vector(x, "x")
    if xv.size != bits.length:
        raise DimensionError(
            f"bits length {bits.length} != vector length {xv.size}")
    return _signed_sum(bits.as_bool(), xv)


def dequantize_dot(qv: QuantizedVector, x) -> float:
    """Recover <w, x> + <u(w), x> from the binary inner product."""
    xv = _as_vector(x, "x")
    if xv.size != qv.dim:
        raise DimensionError(f"quantized dim {qv.dim} != vector length {xv.size}")
    signed = _signed_sum(qv.bits.as_bool(), xv)
    return qv.stats.scale * signed + qv.stats.mean * float(xv.sum())


def quant_error_vector(w) -> np.ndarray:
    """The exact quantization residual u(w) = scale * bits + mean * 1 - w."""
    arr = _as_vector(w, "w")
    mask, mean, scale = _quantize_core(arr)
    signs = np.where(mask, 1.0, -1.0)
    return scale * signs + mean - arr
