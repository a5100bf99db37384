"""Correlation-based DAFT-domain detection and a dense MMSE reference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import EffectiveChannel, _ratio_kernel, unique_pairs
from .daft import DaftParams, DimensionError
from .spreading import SpreadingSequence, demap, despread


@dataclass(frozen=True)
class CddConfig:
    kv: int = 0

    def __post_init__(self) -> None:
        if self.kv < 0:
            raise ValueError("kv must be non-negative")


def _unique_phases(ch: EffectiveChannel, p: DaftParams, kv: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weights for each distinct (delay, Doppler) pair.

    Returns (weights (U, 2kv+1, N), shifts (U, 2kv+1), flat inverse index).
    """
    N = p.N
    Q = p.chirp_index
    offs = np.arange(-kv, kv + 1)
    pidx = np.arange(N, dtype=float)
    ud, uk, inv = unique_pairs(np.asarray(ch.delays, dtype=float), np.asarray(ch.dopplers, dtype=float))
    alpha = np.ceil(uk - 0.5)
    loc = np.mod(np.round(Q * ud) - alpha, N)[:, None, None]
    d = ud[:, None, None]
    shift = loc + offs[:, None]
    q = np.mod(pidx + shift, N)
    # constant kernel per (i, k): p - q - k_i + Q l reduced by the known shift
    kern = _ratio_kernel(-shift - uk[:, None, None] + Q * d, N)
    ph = (N * p.c1 * d**2 - q * d + N * p.c2 * (q**2 - pidx**2)) / N
    out = np.exp(-2j * np.pi * np.mod(ph, 1.0)) * np.conj(kern)
    return out, shift[..., 0].astype(np.int64), inv


def phase_vectors(ch: EffectiveChannel, p: DaftParams, kv: int) -> np.ndarray:
    """Per-path, per-offset weights pi_{i,k}[p], shape (..., L, 2kv+1, N).

    pi_{i,k}[p] = conj of N * H_i[p, <p + loc_i + k>_N] for integer-delay paths.
    The ratio kernel depends only on (i, k), so the per-bin work is one chirp
    phase per entry.
    """
    out, _, inv = _unique_phases(ch, p, kv)
    return out[inv].reshape(np.shape(ch.delays) + out.shape[1:])


def _rotate_rows(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Row copies of x with bin q holding x[<q - s>_N].

    x is (N,) with any shape of shifts, or (B, N) with shifts of shape (B,) or (B, J).
    """
    N = x.shape[-1]
    xx = np.concatenate([x, x], axis=-1)
    win = np.lib.stride_tricks.sliding_window_view(xx, N, axis=-1)
    start = np.mod(-s, N)
    if x.ndim == 1:
        return win[start]
    rows = np.arange(x.shape[0]).reshape((-1,) + (1,) * (start.ndim - 1))
    return win[rows, start]


def cdd_equalize(y: np.ndarray, ch: EffectiveChannel, p: DaftParams, cfg: CddConfig) -> np.ndarray:
    """Per-path matched filtering in the DAFT domain, no matrix inversion.

    x_hat = sum_i (h_i^* / N) sum_{k=-kv}^{kv} Pi^{(loc_i + k)} (pi_{i,k} * y),
    where Pi^s moves bin p to bin <p + s>_N. Leading axes of ``y`` and of the
    channel arrays are treated as independent frames.

    Every step is a row copy or an elementwise product over (frames, paths,
    offsets, bins), so the cost is linear in N.

    Raises:
        ValueError: the channel band is narrower than ``cfg.kv``, or a path has
            a non-integer delay (the closed-form weights need integer delays).
    """
    if ch.kv < cfg.kv:
        raise ValueError(f"channel band radius {ch.kv} is smaller than the detector radius {cfg.kv}")
    y = np.asarray(y, dtype=complex)
    N = p.N
    if y.shape[-1] != N:
        raise DimensionError(f"expected {N} bins, got {y.shape[-1]}")
    if np.any(np.asarray(ch.delays) != np.round(ch.delays)):
        raise ValueError("cdd_equalize needs integer path delays")
    K = 2 * cfg.kv + 1
    gains = np.asarray(ch.gains)
    L = gains.shape[-1]
    lead = np.broadcast_shapes(y.shape[:-1], gains.shape[:-1])
    B = int(np.prod(lead))
    yf = np.broadcast_to(y, lead + (N,)).reshape(B, N)
    w = np.broadcast_to(np.conj(gains) / N, lead + (L,)).reshape(B, L)
    pu, su, inv = _unique_phases(ch, p, cfg.kv)
    inv = np.broadcast_to(inv.reshape(np.shape(ch.delays)), lead + (L,)).reshape(B, L)
    # weights moved to output bins once per distinct pair: bin q uses input bin q - shift
    pr = _rotate_rows(pu.reshape(-1, N), su.reshape(-1)).reshape(pu.shape)
    ys = _rotate_rows(yf, su[inv].reshape(B, L * K)).reshape(B, L, K, N)
    ys *= pr[inv]
    out = np.einsum("bi,bikn->bn", w, ys)
    return out.reshape(lead + (N,))


def cdd_despread(x_hat: np.ndarray, seq: SpreadingSequence) -> np.ndarray:
    """Correlate the equalized bins with the spreading code, block by block."""
    return despread(x_hat, seq)


def mmse_detect(y: np.ndarray, ch: EffectiveChannel, Pn: float, seq: SpreadingSequence | None = None) -> np.ndarray:
    """Linear MMSE estimate H^H (H H^H + Pn I)^-1 y on the dense band matrix.

    Works on a single frame. With ``seq`` the estimate is despread as well.

    Raises:
        ValueError: negative Pn.
        numpy.linalg.LinAlgError: singular system (e.g. Pn = 0 and rank-deficient H).
    """
    if Pn < 0:
        raise ValueError("Pn must be non-negative")
    H = ch.dense()
    A = H @ H.conj().T
    A[np.diag_indices_from(A)] += Pn
    x = H.conj().T @ np.linalg.solve(A, np.asarray(y, dtype=complex))
    return x if seq is None else despread(x, seq)


def hard_decision(symbols: np.ndarray, Nm: int) -> np.ndarray:
    """Nearest-point Gray decisions; invariant to positive real scaling."""
    return demap(symbols, Nm)
