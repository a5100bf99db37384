"""Spreading codes, block interleaving, constellation mapping and the ECC abstraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .daft import DimensionError

# primitive polynomial masks, bit j holds the coefficient of x^j (x^degree implied)
PRIMITIVE_TAPS = {
    2: 0b11,
    3: 0b11,
    4: 0b11,
    5: 0b101,
    6: 0b11,
    7: 0b11,
    8: 0b11101,
    9: 0b10001,
    10: 0b1001,
    11: 0b101,
    12: 0b1010011,
    13: 0b11011,
    14: 0b10001000011,
    15: 0b11,
    16: 0b1000000001011,
}


class ConfigError(ValueError):
    """Inconsistent or unsupported configuration."""


@dataclass(frozen=True)
class SpreadingSequence:
    """Chip sequence of +-1 values."""

    chips: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.chips, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("chips must be a non-empty vector")
        if not np.all(np.abs(c) == 1):
            raise ValueError("chips must be +1 or -1")
        object.__setattr__(self, "chips", c)

    @property
    def Nd(self) -> int:
        return self.chips.size


def _lfsr_bits(degree: int, taps: int, state: int, length: int) -> tuple[np.ndarray, int]:
    """Fibonacci LFSR output and the first step at which the state repeats."""
    mask = (1 << degree) - 1
    start = state
    out = np.empty(length, dtype=np.int8)
    period = 0
    for n in range(length):
        out[n] = state & 1
        fb = bin(state & taps).count("1") & 1
        state = (state >> 1) | (fb << (degree - 1))
        state &= mask
        if not period and state == start:
            period = n + 1
    return out, period


def gen_mseq(degree: int, taps: int | None = None, seed_state: int = 1) -> SpreadingSequence:
    """Maximal-length sequence of period 2^degree - 1, bits mapped 0 -> +1, 1 -> -1.

    Args:
        degree: register length in [2, 16].
        taps: feedback mask; bit j is the coefficient of x^j in the
            characteristic polynomial. Defaults to a tabulated primitive one.
        seed_state: non-zero initial register contents.

    Raises:
        ValueError: zero seed state or degree out of range.
        ConfigError: taps that do not yield the maximal period.
    """
    if not 2 <= degree <= 16:
        raise ValueError("degree must lie in [2, 16]")
    taps = PRIMITIVE_TAPS[degree] if taps is None else taps
    seed_state &= (1 << degree) - 1
    if seed_state == 0:
        raise ValueError("seed state must be non-zero")
    if not taps & 1:
        raise ConfigError("taps must include the constant term")
    L = (1 << degree) - 1
    bits, period = _lfsr_bits(degree, taps, seed_state, L)
    if period != L:
        raise ConfigError(f"taps {taps:#b} give period {period}, not {L}")
    return SpreadingSequence(1.0 - 2.0 * bits)


def gold(degree: int, taps1: int, taps2: int, shift: int = 0, seed_state: int = 1) -> SpreadingSequence:
    """XOR of two m-sequences of the same degree, the second cyclically shifted."""
    a = gen_mseq(degree, taps1, seed_state).chips
    b = np.roll(gen_mseq(degree, taps2, seed_state).chips, -shift)
    return SpreadingSequence(a * b)


def spreading_sequence(Nd: int) -> SpreadingSequence:
    """Default code of length Nd.

    A full m-sequence when Nd = 2^r - 1, otherwise the first Nd chips of the
    shortest m-sequence that is at least Nd long.
    """
    if Nd < 1:
        raise ValueError("Nd must be positive")
    if Nd == 1:
        return SpreadingSequence(np.ones(1))
    degree = max(2, int(math.ceil(math.log2(Nd + 1))))
    if degree > 16:
        raise ValueError("Nd too large for the tabulated generators")
    return SpreadingSequence(gen_mseq(degree).chips[:Nd])


def autocorrelation(seq: SpreadingSequence, k: int) -> float:
    """Periodic autocorrelation sum_n d[n] d[<n - k>]."""
    if not 0 <= k < seq.Nd:
        raise ValueError("k must satisfy 0 <= k < Nd")
    return float(np.dot(seq.chips, np.roll(seq.chips, k)))


def spread(symbols: np.ndarray, seq: SpreadingSequence) -> np.ndarray:
    """Each symbol occupies Nd consecutive bins, multiplied by the chips."""
    s = np.asarray(symbols, dtype=complex)
    return (s[..., :, None] * seq.chips).reshape(s.shape[:-1] + (-1,))


def despread(chips: np.ndarray, seq: SpreadingSequence) -> np.ndarray:
    """Correlate consecutive blocks of Nd bins with the code (no normalization)."""
    c = np.asarray(chips, dtype=complex)
    if c.shape[-1] % seq.Nd:
        raise DimensionError(f"length {c.shape[-1]} is not a multiple of Nd = {seq.Nd}")
    blocks = c.reshape(c.shape[:-1] + (-1, seq.Nd))
    return blocks @ seq.chips


# ---------------------------------------------------------------------------
# interleaving


def interleave(bits: np.ndarray, rows: int) -> np.ndarray:
    """Write row by row into a rows x C block and read column by column."""
    b = np.asarray(bits)
    if rows < 1 or b.shape[-1] % rows:
        raise DimensionError(f"length {b.shape[-1]} is not a multiple of depth {rows}")
    return b.reshape(b.shape[:-1] + (rows, -1)).swapaxes(-1, -2).reshape(b.shape)


def deinterleave(bits: np.ndarray, rows: int) -> np.ndarray:
    b = np.asarray(bits)
    if rows < 1 or b.shape[-1] % rows:
        raise DimensionError(f"length {b.shape[-1]} is not a multiple of depth {rows}")
    return b.reshape(b.shape[:-1] + (-1, rows)).swapaxes(-1, -2).reshape(b.shape)


# ---------------------------------------------------------------------------
# bounded-distance code model


@dataclass(frozen=True)
class EccParams:
    """Ni input bits and No output bits per codeword, Ne correctable bit errors."""

    Ni: int
    No: int
    Ne: int

    def __post_init__(self) -> None:
        if not 0 < self.Ni <= self.No:
            raise ConfigError("need 0 < Ni <= No")
        if not 0 <= self.Ne < self.No:
            raise ConfigError("need 0 <= Ne < No")


def _parity_fill(n_codewords: int, width: int) -> np.ndarray:
    # fixed stream so the fill never depends on the data
    return np.random.default_rng(0x5EED).integers(0, 2, (n_codewords, width), dtype=np.int8)


def ecc_encode(info_bits: np.ndarray, ecc: EccParams) -> np.ndarray:
    """Systematic grouping: Ni data bits followed by No - Ni fill bits per codeword."""
    b = np.asarray(info_bits, dtype=np.int8)
    if b.shape[-1] % ecc.Ni:
        raise DimensionError(f"{b.shape[-1]} info bits is not a multiple of Ni = {ecc.Ni}")
    groups = b.reshape(b.shape[:-1] + (-1, ecc.Ni))
    fill = np.broadcast_to(_parity_fill(groups.shape[-2], ecc.No - ecc.Ni), groups.shape[:-1] + (ecc.No - ecc.Ni,))
    return np.concatenate([groups, fill], axis=-1).reshape(b.shape[:-1] + (-1,))


def ecc_decode(coded_bits: np.ndarray, reference_bits: np.ndarray, ecc: EccParams) -> np.ndarray:
    """Per-codeword success: at most Ne of the No bits differ from the reference."""
    c = np.asarray(coded_bits, dtype=np.int8)
    r = np.asarray(reference_bits, dtype=np.int8)
    if c.shape != r.shape:
        raise DimensionError("received and reference lengths differ")
    if c.shape[-1] % ecc.No:
        raise DimensionError(f"{c.shape[-1]} coded bits is not a multiple of No = {ecc.No}")
    errs = (c != r).reshape(c.shape[:-1] + (-1, ecc.No)).sum(axis=-1)
    return errs <= ecc.Ne


def ecc_info_bits(coded_bits: np.ndarray, ecc: EccParams) -> np.ndarray:
    """Systematic part of each codeword."""
    c = np.asarray(coded_bits, dtype=np.int8)
    return c.reshape(c.shape[:-1] + (-1, ecc.No))[..., : ecc.Ni].reshape(c.shape[:-1] + (-1,))


# ---------------------------------------------------------------------------
# constellation


def _check_nm(Nm: int) -> int:
    if Nm not in (2, 4):
        raise ConfigError(f"unsupported modulation order {Nm}")
    return int(math.log2(Nm))


def map_constellation(bits: np.ndarray, Nm: int) -> np.ndarray:
    """Unit-power Gray mapping. BPSK: 0 -> +1; QPSK: 00 -> (1+j)/sqrt(2)."""
    m = _check_nm(Nm)
    b = np.asarray(bits, dtype=float)
    if b.shape[-1] % m:
        raise DimensionError(f"bit length {b.shape[-1]} is not a multiple of {m}")
    if m == 1:
        return (1.0 - 2.0 * b).astype(complex)
    pairs = b.reshape(b.shape[:-1] + (-1, 2))
    return ((1.0 - 2.0 * pairs[..., 0]) + 1j * (1.0 - 2.0 * pairs[..., 1])) / math.sqrt(2)


def demap(symbols: np.ndarray, Nm: int) -> np.ndarray:
    """Nearest-point Gray demapping (sign decisions)."""
    m = _check_nm(Nm)
    s = np.asarray(symbols, dtype=complex)
    if m == 1:
        return (s.real < 0).astype(np.int8)
    out = np.stack([s.real < 0, s.imag < 0], axis=-1).astype(np.int8)
    return out.reshape(s.shape[:-1] + (-1,))


# ---------------------------------------------------------------------------
# frame layout


@dataclass(frozen=True)
class FrameConfig:
    """Packet and frame dimensions.

    Attributes:
        N: DAFT bins per frame.
        Np: information bits per packet.
        Nm: constellation order (2 or 4).
        Nd: chips per symbol.
        interleave_rows: interleaver depth, a multiple of the bits per frame.
    """

    N: int
    Np: int
    Nm: int
    Nd: int
    interleave_rows: int = 0

    def __post_init__(self) -> None:
        m = _check_nm(self.Nm)
        if self.Nd < 1 or (self.N * m) % self.Nd:
            raise ConfigError(f"N*log2(Nm) = {self.N * m} is not divisible by Nd = {self.Nd}")
        if not self.interleave_rows:
            object.__setattr__(self, "interleave_rows", self.bits_per_frame)
        if self.interleave_rows % self.bits_per_frame:
            raise ConfigError("interleaver depth must be a multiple of the bits per frame")

    @property
    def bits_per_frame(self) -> int:
        return self.N * int(math.log2(self.Nm)) // self.Nd


def feasible_nd(N: int, Nm: int, upper: int | None = None) -> np.ndarray:
    """Spreading lengths that fill whole frames: divisors of N*log2(Nm)."""
    M = N * _check_nm(Nm)
    d = np.array([v for v in range(1, M + 1) if M % v == 0], dtype=int)
    return d if upper is None else d[d <= upper]
