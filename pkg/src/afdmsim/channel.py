"""Doubly selective multipath channel.

A realization is a list of paths, each with a complex gain, an integer plus
fractional delay and a Doppler shift. It can be applied in the time domain to a
prefixed frame, or expressed as a banded matrix acting on DAFT-domain symbols.
The two views are checked against each other in the tests.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .daft import DaftParams, DimensionError, daft, strip_cpp

# length of the Kaiser-windowed sinc used by the "sinc" fractional-delay mode
SINC_TAPS = 16
SINC_BETA = 8.0


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def split_doppler(k: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
    """Split k into integer part alpha and fractional part a in (-1/2, 1/2]."""
    k = np.asarray(k, dtype=float)
    alpha = np.ceil(k - 0.5)
    return alpha.astype(int), k - alpha


@dataclass(frozen=True)
class PathSpec:
    gain: complex
    delay_int: int
    delay_frac: float = 0.0
    doppler_norm: float = 0.0

    def __post_init__(self) -> None:
        if self.delay_int < 0:
            raise ValueError("delay_int must be non-negative")
        if not -0.5 < self.delay_frac <= 0.5:
            raise ValueError("delay_frac must lie in (-1/2, 1/2]")

    @property
    def delay(self) -> float:
        return self.delay_int + self.delay_frac

    def k(self, N: int) -> float:
        """Doppler in units of subcarrier spacing."""
        return N * self.doppler_norm

    def alpha(self, N: int) -> int:
        return int(split_doppler(self.k(N))[0])

    def a(self, N: int) -> float:
        return float(split_doppler(self.k(N))[1])

    def loc(self, p: DaftParams) -> int:
        """Column offset of the main diagonal of this path's DAFT-domain band."""
        return int((round(p.chirp_index * self.delay) - self.alpha(p.N)) % p.N)


@dataclass(frozen=True)
class ChannelRealization:
    paths: tuple[PathSpec, ...]
    rng_seed: int | None = None

    def __post_init__(self) -> None:
        if len(self.paths) < 1:
            raise ValueError("a channel needs at least one path")

    @property
    def L(self) -> int:
        return len(self.paths)

    @property
    def gains(self) -> np.ndarray:
        return np.array([pt.gain for pt in self.paths], dtype=complex)

    def to_json(self) -> str:
        rec = {
            "rng_seed": self.rng_seed,
            "paths": [
                {
                    "re": float(np.real(pt.gain)),
                    "im": float(np.imag(pt.gain)),
                    "delay_int": int(pt.delay_int),
                    "delay_frac": float(pt.delay_frac),
                    "doppler_norm": float(pt.doppler_norm),
                }
                for pt in self.paths
            ],
        }
        return json.dumps(rec)

    @classmethod
    def from_json(cls, text: str) -> "ChannelRealization":
        rec = json.loads(text)
        paths = tuple(
            PathSpec(
                gain=complex(d["re"], d["im"]),
                delay_int=int(d["delay_int"]),
                delay_frac=float(d["delay_frac"]),
                doppler_norm=float(d["doppler_norm"]),
            )
            for d in rec["paths"]
        )
        return cls(paths=paths, rng_seed=rec.get("rng_seed"))


def sample_random_channel(
    L: int,
    delays: Sequence[int],
    doppler_max_norm: float,
    fractional: bool,
    seed: int,
    N: int | None = None,
    doppler_bins: Sequence[float] | None = None,
) -> ChannelRealization:
    """Draw gains CN(0, 1/L) and Dopplers uniform in [-vmax, vmax].

    With ``fractional=False`` the Doppler in bins (N * v) is rounded, which needs N.
    ``doppler_bins`` pins the Doppler of each path (in bins) instead of drawing it.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if len(delays) != L:
        raise ValueError("delays must have length L")
    if doppler_max_norm < 0:
        raise ValueError("doppler_max_norm must be non-negative")
    rng = np.random.default_rng(seed)
    gains = (rng.standard_normal(L) + 1j * rng.standard_normal(L)) * math.sqrt(0.5 / L)
    if doppler_bins is not None:
        if N is None:
            raise ValueError("N is required with doppler_bins")
        nu = np.asarray(doppler_bins, dtype=float) / N
    else:
        nu = rng.uniform(-doppler_max_norm, doppler_max_norm, L)
    if not fractional:
        if N is None:
            raise ValueError("integer Doppler mode needs N")
        nu = np.round(nu * N) / N
    paths = tuple(
        PathSpec(gain=complex(g), delay_int=int(d), delay_frac=0.0, doppler_norm=float(v))
        for g, d, v in zip(gains, delays, nu)
    )
    return ChannelRealization(paths=paths, rng_seed=seed)


def add_awgn(x: np.ndarray, Pn: float, seed=None) -> np.ndarray:
    """Add circular complex Gaussian noise of variance Pn per sample."""
    if Pn < 0:
        raise ValueError("noise power must be non-negative")
    x = np.asarray(x, dtype=complex)
    if Pn == 0:
        return x.copy()
    rng = _as_rng(seed)
    w = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + w * math.sqrt(Pn / 2)


# ---------------------------------------------------------------------------
# fractional-delay phase correction


def wrap_count(t: np.ndarray, delay: float, q: int, p: DaftParams) -> np.ndarray:
    """Indicator sum eps(n, l) for subcarrier q evaluated at sample times t.

    Counts how many times the discrete chirp of subcarrier q has wrapped around
    the band at read position <t - l>_N. The intervals are used as closed real
    intervals with integer endpoints.
    """
    Q = p.chirp_index
    t = np.asarray(t, dtype=float)
    if Q == 0:
        return np.zeros_like(t)
    v = np.mod(t - delay, p.N)
    out = np.zeros_like(t)
    for x in range(1, Q + 1):
        lo = (x * p.N - q) // Q + 1
        hi = ((x + 1) * p.N - q) // Q
        if lo > hi:
            continue
        out += x * ((v >= lo) & (v <= hi))
    return out


def empty_wrap_intervals(p: DaftParams) -> list[tuple[int, int]]:
    """(q, x) pairs whose indicator interval is empty."""
    Q = p.chirp_index
    if Q == 0:
        return []
    bad = []
    for q in range(p.N):
        for x in range(Q + 1):
            if ((x + 1) * p.N - q) // Q < (x * p.N - q) // Q + 1:
                bad.append((q, x))
    return bad


# ---------------------------------------------------------------------------
# time-domain application


def _subcarrier_waveforms(t: np.ndarray, delay: float, p: DaftParams) -> np.ndarray:
    """Delayed band-limited subcarrier waveforms, shape (len(t), N).

    Column q is the IDAFT basis function of subcarrier q read at time t - delay,
    including the wrap-count phase of the fractional part of the delay.
    """
    N = p.N
    iota = delay - round(delay)
    q = np.arange(N)
    tau = (t - delay)[:, None]
    phase = p.c1 * tau**2 + np.mod(p.c2 * q**2, 1.0)[None, :] + q[None, :] * tau / N
    basis = np.exp(2j * np.pi * np.mod(phase, 1.0)) / math.sqrt(N)
    if iota != 0:
        eps = np.stack([wrap_count(t, delay, int(qq), p) for qq in q], axis=1)
        basis = basis * np.exp(2j * np.pi * iota * eps)
    return basis


def _chirp_periodic(x: np.ndarray, t: np.ndarray, p: DaftParams) -> np.ndarray:
    """Samples of the chirp-periodic extension of an unprefixed frame at integer times t."""
    N = p.N
    r = np.floor_divide(t, N)
    b = t - r * N
    ph = np.mod(p.c1 * ((b + r * N).astype(float) ** 2 - b.astype(float) ** 2), 1.0)
    return x[..., b] * np.exp(2j * np.pi * ph)


def _sinc_delay(x: np.ndarray, t_read: np.ndarray, p: DaftParams) -> np.ndarray:
    """Kaiser-windowed interpolation at times t_read for a signal occupying [0, 1) cycles/sample.

    The kernel is sinc(d) exp(j pi d), the interpolator of that one-sided band,
    and samples outside the frame come from its chirp-periodic extension.
    """
    win = np.kaiser(SINC_TAPS, SINC_BETA)
    base = np.floor(t_read).astype(int)
    taps = np.arange(-SINC_TAPS // 2 + 1, SINC_TAPS // 2 + 1)
    idx = base[:, None] + taps[None, :]
    d = t_read[:, None] - idx
    w = np.sinc(d) * np.exp(1j * np.pi * d) * win[None, :]
    return np.sum(_chirp_periodic(x, idx, p) * w, axis=-1)


def apply_time_domain(
    x: np.ndarray,
    ch: ChannelRealization,
    p: DaftParams,
    interpolation: str = "chirp",
) -> np.ndarray:
    """Pass a prefixed frame through the channel.

    y[t] = sum_i h_i exp(j2pi v_i t) x(t - l_i) for t = -Ncp .. N-1, where t = 0
    is the first sample after the prefix. Integer delays are exact shifts.
    Fractional delays are evaluated either by re-synthesising every subcarrier's
    chirp at the delayed instant ("chirp", consistent with the DAFT-domain
    matrix) or by a length-16 Kaiser-windowed sinc ("sinc"). The sinc route
    treats the frame as a band-limited signal, which matches the matrix model
    only when c1 = 0.
    Samples that would need data from before the frame are taken as zero; they
    only affect the prefix region when Ncp covers the largest delay.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] != p.N + p.Ncp:
        raise DimensionError(f"expected a prefixed frame of length {p.N + p.Ncp}")
    need = max(math.ceil(pt.delay) for pt in ch.paths)
    if need > p.Ncp:
        raise ValueError(f"prefix of {p.Ncp} samples is shorter than the largest delay {need}")
    if interpolation not in ("chirp", "sinc"):
        raise ValueError(f"unknown interpolation {interpolation!r}")
    t = np.arange(-p.Ncp, p.N)
    y = np.zeros_like(x)
    X = None
    for pt in ch.paths:
        ramp = np.exp(2j * np.pi * np.mod(pt.doppler_norm * t, 1.0))
        if pt.delay_frac == 0:
            d = pt.delay_int
            shifted = np.zeros_like(x)
            shifted[..., d:] = x[..., : x.shape[-1] - d]
        elif interpolation == "chirp":
            if X is None:
                X = daft(strip_cpp(x, p), p)
            shifted = X @ _subcarrier_waveforms(t.astype(float), pt.delay, p).T
        else:
            shifted = _sinc_delay(strip_cpp(x, p), t - pt.delay, p)
        y = y + pt.gain * ramp * shifted
    return y


# ---------------------------------------------------------------------------
# DAFT-domain representation


def _ratio_kernel(u: np.ndarray, N: int) -> np.ndarray:
    """(1 - e^{-j2pi u}) / (1 - e^{-j2pi u/N}) with the removable singularity set to N."""
    u = np.asarray(u, dtype=float)
    den = 1 - np.exp(-2j * np.pi * u / N)
    num = 1 - np.exp(-2j * np.pi * u)
    r = np.mod(u, N)
    sing = np.minimum(r, N - r) < 1e-12
    safe = np.where(sing, 1.0, den)
    return np.where(sing, N + 0j, num / safe)


def _path_phase(p_idx: np.ndarray, q_idx: np.ndarray, delay: float, prm: DaftParams) -> np.ndarray:
    N = prm.N
    ph = (
        N * prm.c1 * delay**2
        - q_idx * delay
        + N * prm.c2 * (q_idx.astype(float) ** 2 - p_idx.astype(float) ** 2)
    ) / N
    return np.exp(2j * np.pi * np.mod(ph, 1.0))


def path_matrix(path: PathSpec, p: DaftParams) -> np.ndarray:
    """Full N x N DAFT-domain matrix of one path by direct summation over n.

    Without a fractional delay the sum is evaluated in its geometric-series
    closed form; with one, term by term including the wrap-count phase.
    """
    N = p.N
    pp = np.arange(N)[:, None]
    qq = np.arange(N)[None, :]
    phase = _path_phase(pp, qq, path.delay, p)
    k = path.k(N)
    Q = p.chirp_index
    if path.delay_frac == 0:
        F = _ratio_kernel(pp - qq - k + Q * path.delay, N)
    else:
        n = np.arange(N, dtype=float)
        iota = path.delay_frac
        # G[n, q] = exp(j2pi (q - Q l + k) n / N) exp(j2pi iota eps(n, l; q))
        eps = np.stack([wrap_count(n, path.delay, q, p) for q in range(N)], axis=1)
        G = np.exp(2j * np.pi * np.mod((qq - Q * path.delay + k) * n[:, None] / N + iota * eps, 1.0))
        E = np.exp(-2j * np.pi * np.mod(np.outer(np.arange(N), n) / N, 1.0))
        F = E @ G
    return phase * F / N


def channel_matrix(ch: ChannelRealization, p: DaftParams) -> np.ndarray:
    """Dense sum_i h_i H_i."""
    return sum(pt.gain * path_matrix(pt, p) for pt in ch.paths)


@dataclass
class EffectiveChannel:
    """Banded DAFT-domain channel, stored per path.

    ``values[..., i, k + kv, p]`` is H_i[p, <p + loc_i + k>_N]. Leading axes, when
    present, index independent frames that share N and kv.
    """

    gains: np.ndarray
    locs: np.ndarray
    values: np.ndarray
    kv: int
    delays: np.ndarray
    dopplers: np.ndarray
    N: int = field(default=0)

    def __post_init__(self) -> None:
        if not self.N:
            self.N = self.values.shape[-1]

    @property
    def L(self) -> int:
        return self.gains.shape[-1]

    def columns(self) -> np.ndarray:
        """Column index of every stored entry, same shape as ``values``."""
        offs = np.arange(-self.kv, self.kv + 1)
        pidx = np.arange(self.N)
        return np.mod(
            pidx + self.locs[..., :, None, None] + offs[:, None], self.N
        )

    def apply(self, x: np.ndarray) -> np.ndarray:
        """y = sum_i h_i H_i x using only the stored bands."""
        x = np.asarray(x, dtype=complex)
        cols = self.columns()
        xs = np.take_along_axis(
            np.broadcast_to(x[..., None, None, :], cols.shape), cols, axis=-1
        )
        return np.einsum("...i,...ikn,...ikn->...n", self.gains, self.values, xs)

    def dense(self) -> np.ndarray:
        """Materialize sum_i h_i H_i as an N x N matrix (single frame only)."""
        if self.gains.ndim != 1:
            raise ValueError("dense() needs a single-frame channel")
        H = np.zeros((self.N, self.N), dtype=complex)
        cols = self.columns()
        rows = np.broadcast_to(np.arange(self.N), cols.shape)
        np.add.at(H, (rows, cols), self.gains[:, None, None] * self.values)
        return H

    def path_dense(self, i: int) -> np.ndarray:
        H = np.zeros((self.N, self.N), dtype=complex)
        cols = self.columns()[i]
        rows = np.broadcast_to(np.arange(self.N), cols.shape)
        np.add.at(H, (rows, cols), self.values[i])
        return H


def band_values(
    delays: np.ndarray, dopplers_bins: np.ndarray, p: DaftParams, kv: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized band entries for integer-delay paths.

    ``delays`` and ``dopplers_bins`` share a shape (..., L). Returns (locs, values)
    with values of shape (..., L, 2kv+1, N).
    """
    N = p.N
    delays = np.asarray(delays, dtype=float)
    k = np.asarray(dopplers_bins, dtype=float)
    alpha, _ = split_doppler(k)
    locs = np.mod(np.round(p.chirp_index * delays).astype(int) - alpha, N)
    # frames usually repeat a handful of (delay, Doppler) pairs; evaluate each once
    ud, uk, inv = unique_pairs(delays, k)
    offs = np.arange(-kv, kv + 1)
    pidx = np.arange(N)
    uloc = np.mod(np.round(p.chirp_index * ud).astype(int) - split_doppler(uk)[0], N)
    shift = uloc[:, None, None] + offs[:, None]
    q = np.mod(pidx + shift, N)
    d = ud[:, None, None]
    ph = (N * p.c1 * d**2 - q * d + N * p.c2 * (q.astype(float) ** 2 - pidx.astype(float) ** 2)) / N
    # the kernel argument p - q - k + Q l is the same for every row of a band
    F = _ratio_kernel(-shift - uk[:, None, None] + p.chirp_index * d, N)
    vals = np.exp(2j * np.pi * np.mod(ph, 1.0)) * F / N
    return locs, vals[inv].reshape(delays.shape + vals.shape[1:])


def unique_pairs(delays: np.ndarray, dopplers: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct (delay, Doppler) pairs and the flat inverse index."""
    pairs = np.stack([np.ravel(delays), np.ravel(dopplers)], axis=1)
    u, inv = np.unique(pairs, axis=0, return_inverse=True)
    return u[:, 0], u[:, 1], np.ravel(inv)


def build_daft_matrix(ch: ChannelRealization, p: DaftParams, kv: int = 7) -> EffectiveChannel:
    """Banded DAFT-domain representation with Doppler-spread radius kv."""
    if kv < 0:
        raise ValueError("kv must be non-negative")
    N = p.N
    if 2 * kv + 1 > N:
        raise ValueError("band wider than the frame")
    if kv == 0 and any(abs(pt.a(N)) > 1e-12 for pt in ch.paths):
        raise ValueError("kv = 0 requires integer Doppler on every path")
    offs = np.arange(-kv, kv + 1)
    locs = np.array([pt.loc(p) for pt in ch.paths])
    values = np.zeros((ch.L, 2 * kv + 1, N), dtype=complex)
    pidx = np.arange(N)
    for i, pt in enumerate(ch.paths):
        cols = np.mod(pidx[None, :] + locs[i] + offs[:, None], N)
        if pt.delay_frac == 0:
            values[i] = path_matrix_entries(pt, p, np.broadcast_to(pidx, cols.shape), cols)
        else:
            full = path_matrix(pt, p)
            values[i] = full[np.broadcast_to(pidx, cols.shape), cols]
            row_energy = np.sum(np.abs(full) ** 2, axis=1)
        if pt.delay_frac == 0:
            row_energy = 1.0
        captured = np.min(np.sum(np.abs(values[i]) ** 2, axis=0) / row_energy)
        if captured < 0.99:
            warnings.warn(
                f"path {i}: band of radius {kv} keeps only {captured:.3f} of the row energy",
                stacklevel=2,
            )
    return EffectiveChannel(
        gains=ch.gains,
        locs=locs,
        values=values,
        kv=kv,
        delays=np.array([pt.delay for pt in ch.paths]),
        dopplers=np.array([pt.k(N) for pt in ch.paths]),
        N=N,
    )


def path_matrix_entries(path: PathSpec, p: DaftParams, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Selected entries of an integer-delay path matrix (closed-form kernel)."""
    if path.delay_frac != 0:
        raise ValueError("closed form only covers integer delays")
    phase = _path_phase(rows, cols, path.delay, p)
    F = _ratio_kernel(rows - cols - path.k(p.N) + p.chirp_index * path.delay, p.N)
    return phase * F / p.N
