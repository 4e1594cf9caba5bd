"""Temporal stripe pattern generation and the Gray/plain binary codecs.

A scan projects, in order: a solid white frame, a solid black frame, then for
each column bit (most significant first) the stripe pattern and its inverse,
then the same for row bits. Decoding a pixel's bit string through the active
codec recovers the projector column and row that illuminated it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidResolutionError

LO = 0
HI = 255

SCHEMES = ("gray", "binary")


def pattern_counts(res_x: int, res_y: int) -> tuple[int, int]:
    """Number of column and row bit patterns needed for a projector resolution.

    A dimension of 1 needs no bits; anything below 1 is rejected.
    """
    if res_x < 1 or res_y < 1:
        raise InvalidResolutionError(f"resolution must be >= 1, got {res_x}x{res_y}")
    n_cols = math.ceil(math.log2(res_x)) if res_x > 1 else 0
    n_rows = math.ceil(math.log2(res_y)) if res_y > 1 else 0
    return n_cols, n_rows


@dataclass(frozen=True)
class CodeWord:
    """A fixed-width bit string, most significant bit first."""

    value: int
    width: int

    def __post_init__(self):
        if self.width < 1:
            raise InvalidArgumentError(f"width must be >= 1, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise InvalidArgumentError(
                f"value {self.value} does not fit in {self.width} bits"
            )

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.value >> (self.width - 1 - i)) & 1 for i in range(self.width))

    @classmethod
    def from_bits(cls, bits) -> CodeWord:
        value = 0
        for b in bits:
            value = (value << 1) | (1 if b else 0)
        return cls(value, len(bits))


def binary_to_gray(word: CodeWord) -> CodeWord:
    """Reflected binary encoding: each output bit is b[i] xor b[i-1]."""
    return CodeWord(word.value ^ (word.value >> 1), word.width)


def gray_to_binary(word: CodeWord) -> CodeWord:
    """Inverse of binary_to_gray: the top bit carries over, every later binary
    bit is the previous binary bit xor the current Gray bit."""
    bits = word.bits
    out = [bits[0]]
    for b in bits[1:]:
        out.append(out[-1] ^ b)
    return CodeWord.from_bits(out)


def gray_encode(values: np.ndarray) -> np.ndarray:
    """Vectorized binary -> Gray on unsigned integer arrays."""
    v = np.asarray(values)
    return v ^ (v >> 1)


def gray_decode(values: np.ndarray) -> np.ndarray:
    """Vectorized Gray -> binary via prefix xor (doubling shifts)."""
    v = np.asarray(values).copy()
    shift = 1
    while shift < v.dtype.itemsize * 8:
        v ^= v >> np.uint8(shift)
        shift *= 2
    return v


@dataclass(frozen=True)
class PatternRole:
    """What one projected frame encodes."""

    kind: str  # "white" | "black" | "column" | "row"
    bit: int | None = None  # bit position, 0 = most significant
    inverse: bool = False

    @property
    def name(self) -> str:
        if self.kind in ("white", "black"):
            return self.kind
        stem = {"column": "col", "row": "row"}[self.kind] + f"{self.bit:02d}"
        return stem + "_inv" if self.inverse else stem


@dataclass(frozen=True)
class SequenceSpec:
    """Frame layout of a pattern sequence, independent of pixel data."""

    res_x: int
    res_y: int
    scheme: str
    n_cols: int
    n_rows: int

    @property
    def total_frames(self) -> int:
        return 2 + 2 * self.n_cols + 2 * self.n_rows

    def col_direct_index(self, bit: int) -> int:
        return 2 + 2 * bit

    def col_inverse_index(self, bit: int) -> int:
        return 3 + 2 * bit

    def row_direct_index(self, bit: int) -> int:
        return 2 + 2 * self.n_cols + 2 * bit

    def row_inverse_index(self, bit: int) -> int:
        return 3 + 2 * self.n_cols + 2 * bit

    def roles(self) -> list[PatternRole]:
        out = [PatternRole("white"), PatternRole("black")]
        for bit in range(self.n_cols):
            out.append(PatternRole("column", bit))
            out.append(PatternRole("column", bit, inverse=True))
        for bit in range(self.n_rows):
            out.append(PatternRole("row", bit))
            out.append(PatternRole("row", bit, inverse=True))
        return out


@dataclass(frozen=True)
class PatternFrame:
    role: PatternRole
    pixels: np.ndarray  # (res_y, res_x) uint8, values LO or HI

    def __post_init__(self):
        if self.pixels.dtype != np.uint8:
            raise InvalidArgumentError("pattern pixels must be uint8")


@dataclass(frozen=True)
class PatternSequence:
    spec: SequenceSpec
    frames: list[PatternFrame] = field(repr=False)

    def __len__(self) -> int:
        return len(self.frames)

    def stack(self) -> np.ndarray:
        """Frames as one (F, H, W) uint8 array in projection order."""
        return np.stack([f.pixels for f in self.frames])


def encode_axis(indices: np.ndarray, scheme: str) -> np.ndarray:
    """Per-index code words for one projector axis."""
    if scheme == "gray":
        return gray_encode(indices)
    if scheme == "binary":
        return np.asarray(indices).copy()
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


def decode_axis(codes: np.ndarray, scheme: str) -> np.ndarray:
    """Inverse of encode_axis."""
    if scheme == "gray":
        return gray_decode(codes)
    if scheme == "binary":
        return np.asarray(codes).copy()
    raise InvalidArgumentError(f"unknown scheme {scheme!r}")


def generate_sequence(res_x: int, res_y: int, scheme: str = "gray") -> PatternSequence:
    """Build the full projection sequence for a projector resolution.

    Frames come in projection order: white, black, column bits (most
    significant first, each followed by its inverse), then row bits likewise.
    Indices that are not an exact power-of-two span still encode their raw
    position; out-of-range codes are rejected at decode time instead.
    """
    if scheme not in SCHEMES:
        raise InvalidArgumentError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    if res_x < 2 or res_y < 2:
        raise InvalidResolutionError(
            f"need at least one encodable bit per axis, got {res_x}x{res_y}"
        )
    n_cols, n_rows = pattern_counts(res_x, res_y)
    spec = SequenceSpec(res_x, res_y, scheme, n_cols, n_rows)

    col_codes = encode_axis(np.arange(res_x, dtype=np.uint32), scheme)
    row_codes = encode_axis(np.arange(res_y, dtype=np.uint32), scheme)

    frames = [
        PatternFrame(PatternRole("white"), np.full((res_y, res_x), HI, dtype=np.uint8)),
        PatternFrame(PatternRole("black"), np.full((res_y, res_x), LO, dtype=np.uint8)),
    ]
    for bit in range(n_cols):
        line = ((col_codes >> np.uint32(n_cols - 1 - bit)) & 1).astype(np.uint8) * HI
        direct = np.broadcast_to(line, (res_y, res_x)).copy()
        frames.append(PatternFrame(PatternRole("column", bit), direct))
        frames.append(PatternFrame(PatternRole("column", bit, inverse=True), HI - direct))
    for bit in range(n_rows):
        line = ((row_codes >> np.uint32(n_rows - 1 - bit)) & 1).astype(np.uint8) * HI
        direct = np.broadcast_to(line[:, None], (res_y, res_x)).copy()
        frames.append(PatternFrame(PatternRole("row", bit), direct))
        frames.append(PatternFrame(PatternRole("row", bit, inverse=True), HI - direct))

    assert len(frames) == spec.total_frames
    return PatternSequence(spec, frames)
