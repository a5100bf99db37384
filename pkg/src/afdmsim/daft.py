"""Discrete affine Fourier transform, chirp-periodic prefix and the quadratic sum.

Signals are plain complex numpy arrays. Every transform acts on the last axis,
so a stack of frames with shape ``(..., N)`` is processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when a signal length does not match the transform size."""


@dataclass(frozen=True)
class DaftParams:
    """Chirp-transform configuration.

    Attributes:
        N: number of subcarriers (transform length).
        c1: first chirp rate. ``2*N*c1`` must be a non-negative integer.
        c2: second chirp rate.
        Ncp: chirp-periodic prefix length in samples.
    """

    N: int
    c1: float = 0.0
    c2: float = 0.0
    Ncp: int = 0

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"N must be an integer >= 2, got {self.N}")
        if int(self.Ncp) != self.Ncp or not 0 <= self.Ncp < self.N:
            raise ValueError(f"Ncp must satisfy 0 <= Ncp < N, got {self.Ncp}")
        q = 2 * self.N * self.c1
        if q < -1e-9 or abs(q - round(q)) > 1e-9:
            raise ValueError(f"2*N*c1 must be a non-negative integer, got {q}")

    @property
    def chirp_index(self) -> int:
        """The integer ``2*N*c1``."""
        return int(round(2 * self.N * self.c1))

    @classmethod
    def for_doppler(cls, N: int, max_doppler_bins: float, Ncp: int = 0) -> "DaftParams":
        """Default chirp rates that keep paths with |k| <= max_doppler_bins apart.

        c1 = (2*ceil(kmax) + 1) / (2N) and c2 = 1 / (2N^2).
        """
        q = 2 * int(np.ceil(max_doppler_bins - 1e-12)) + 1
        return cls(N=N, c1=q / (2 * N), c2=1.0 / (2 * N * N), Ncp=Ncp)

    @classmethod
    def ofdm(cls, N: int, Ncp: int = 0) -> "DaftParams":
        return cls(N=N, c1=0.0, c2=0.0, Ncp=Ncp)


def _check_len(x: np.ndarray, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim == 0 or x.shape[-1] != n:
        raise DimensionError(f"{what}: expected last axis of length {n}, got shape {x.shape}")
    return x


def _chirps(p: DaftParams) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(p.N)
    # reduce the quadratic phases modulo one before exponentiating to keep precision
    c1_phase = np.mod(p.c1 * n.astype(float) ** 2, 1.0)
    c2_phase = np.mod(p.c2 * n.astype(float) ** 2, 1.0)
    return np.exp(-2j * np.pi * c1_phase), np.exp(-2j * np.pi * c2_phase)


def daft(x: np.ndarray, p: DaftParams) -> np.ndarray:
    """Forward transform: chirp, unitary FFT, chirp."""
    x = _check_len(x, p.N, "daft")
    chirp1, chirp2 = _chirps(p)
    return chirp2 * np.fft.fft(x * chirp1, axis=-1, norm="ortho")


def idaft(X: np.ndarray, p: DaftParams) -> np.ndarray:
    """Inverse transform, the exact algebraic inverse of :func:`daft`."""
    X = _check_len(X, p.N, "idaft")
    chirp1, chirp2 = _chirps(p)
    return np.conj(chirp1) * np.fft.ifft(X * np.conj(chirp2), axis=-1, norm="ortho")


def daft_direct(x: np.ndarray, p: DaftParams) -> np.ndarray:
    """O(N^2) summation of the forward transform, kept as a test oracle."""
    x = _check_len(x, p.N, "daft_direct")
    return x @ daft_matrix(p).T


def daft_matrix(p: DaftParams) -> np.ndarray:
    """Dense unitary matrix A with ``daft(x) == A @ x``."""
    n = np.arange(p.N, dtype=float)
    m = n[:, None]
    phase = np.mod(m * n[None, :] / p.N + p.c1 * n[None, :] ** 2 + p.c2 * m**2, 1.0)
    return np.exp(-2j * np.pi * phase) / np.sqrt(p.N)


def append_cpp(x: np.ndarray, p: DaftParams) -> np.ndarray:
    """Prepend the chirp-periodic prefix.

    Prefix sample n (0 <= n < Ncp) is x[N-Ncp+n] * exp(-j2pi c1 (N^2 + 2N(n-Ncp))).
    """
    x = _check_len(x, p.N, "append_cpp")
    if p.Ncp == 0:
        return x.copy()
    n = np.arange(p.Ncp)
    rot = np.exp(-2j * np.pi * np.mod(p.c1 * (p.N**2 + 2 * p.N * (n - p.Ncp)), 1.0))
    return np.concatenate([x[..., p.N - p.Ncp:] * rot, x], axis=-1)


def strip_cpp(x: np.ndarray, p: DaftParams) -> np.ndarray:
    """Drop the prefix and return the trailing N samples."""
    x = _check_len(x, p.N + p.Ncp, "strip_cpp")
    return x[..., p.Ncp:].copy()


def quadratic_sum_L(n: int, m: int, N: int) -> complex:
    """Quadratic exponential sum sum_{k=0}^{|n|-1} exp(j pi (N k + m)^2 / (N n)).

    The magnitude equals sqrt(|n|) when gcd(n, N) = 1 and N*n is even; outside
    that set the sum can vanish or exceed sqrt(|n|).
    """
    if n == 0:
        raise ValueError("quadratic_sum_L is undefined for n = 0")
    if N <= 0:
        raise ValueError("N must be positive")
    k = np.arange(abs(n), dtype=np.int64)
    # exact integer numerator reduced modulo 2*N*n keeps the phase accurate for large k
    num = np.mod((N * k + m) ** 2, 2 * N * abs(n))
    return complex(np.sum(np.exp(1j * np.pi * num / (N * n))))
