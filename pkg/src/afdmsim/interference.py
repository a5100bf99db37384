"""Malicious interference families and their DAFT-domain images.

Each family is synthesized at unit sample rate, transformed with the DAFT and
compared with the closed-form per-bin description: a flat amplitude sqrt(Pi)
for tones and mismatched sweeps, a single bin of amplitude sqrt(N Pi) for a
sweep whose chirp rate matches the subcarriers, and zero-mean variance-Pi
statistics for the Gaussian-like families.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Union

import numpy as np
from scipy import signal as sps

from .daft import DaftParams, daft, quadratic_sum_L

# sweeps drawn in relative_error_db use an integer number of band crossings per
# frame in [1, SWEEP_CYCLES_MAX]
SWEEP_CYCLES_MAX = 32
MATCH_RTOL = 1e-9
ERROR_FLOOR_DB = -300.0


def _check_freq(f: float, what: str) -> None:
    if not -0.5 <= f < 0.5:
        raise ValueError(f"{what} = {f} is outside [-1/2, 1/2)")


@dataclass(frozen=True)
class Tone:
    """Sum of Ni tones; ``tones`` holds (normalized frequency, phase) pairs."""

    Pi: float
    tones: tuple[tuple[float, float], ...]
    kind: str = field(default="tone", init=False)

    def __post_init__(self) -> None:
        if self.Pi < 0:
            raise ValueError("Pi must be non-negative")
        if not self.tones:
            raise ValueError("at least one tone is required")
        for f, _ in self.tones:
            _check_freq(f, "tone frequency")

    @property
    def Ni(self) -> int:
        return len(self.tones)


@dataclass(frozen=True)
class Sweep:
    """Linear chirp exp(j(2pi f_m n + pi slope n^2 + theta)).

    ``slope_norm`` is the chirp rate in cycles per sample^2; a full-band sweep
    that crosses the band Ns times per frame has slope Ns / N. ``Ns`` is kept as
    metadata and is not used by the synthesis.
    """

    Pi: float
    f_m_norm: float
    theta: float
    slope_norm: float
    Ns: float | None = None
    kind: str = field(default="sweep", init=False)

    def __post_init__(self) -> None:
        if self.Pi < 0:
            raise ValueError("Pi must be non-negative")
        _check_freq(self.f_m_norm, "f_m_norm")


@dataclass(frozen=True)
class Broadband:
    Pi: float
    kind: str = field(default="broadband", init=False)

    def __post_init__(self) -> None:
        if self.Pi < 0:
            raise ValueError("Pi must be non-negative")


@dataclass(frozen=True)
class Narrowband1:
    """Filtered Gaussian noise. ``bands`` lists (center, width) in normalized frequency."""

    Pi: float
    f_d: float
    theta: float
    bands: tuple[tuple[float, float], ...]
    filter_len: int = 129
    kind: str = field(default="narrowband1", init=False)

    def __post_init__(self) -> None:
        if self.Pi < 0:
            raise ValueError("Pi must be non-negative")
        _check_freq(self.f_d, "f_d")
        for c, w in self.bands:
            _check_freq(c, "band center")
            if not 0 < w <= 1:
                raise ValueError("band width must lie in (0, 1]")
        if self.filter_len < 1:
            raise ValueError("filter_len must be positive")


@dataclass(frozen=True)
class Narrowband2:
    """PSK symbols held for Ru samples each."""

    Pi: float
    f_d: float
    theta: float
    Ru: float
    psk_order: int = 4
    kind: str = field(default="narrowband2", init=False)

    def __post_init__(self) -> None:
        if self.Pi < 0:
            raise ValueError("Pi must be non-negative")
        _check_freq(self.f_d, "f_d")
        if self.Ru < 1:
            raise ValueError("Ru must be at least 1")
        if self.psk_order < 2:
            raise ValueError("psk_order must be at least 2")


InterferenceSpec = Union[Tone, Sweep, Broadband, Narrowband1, Narrowband2]
_KINDS = {
    "tone": Tone,
    "sweep": Sweep,
    "broadband": Broadband,
    "narrowband1": Narrowband1,
    "narrowband2": Narrowband2,
}


def spec_to_dict(spec: InterferenceSpec) -> dict:
    d = asdict(spec)
    for key in ("tones", "bands"):
        if key in d:
            d[key] = [list(t) for t in d[key]]
    return d


def spec_from_dict(d: dict) -> InterferenceSpec:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown interference kind {kind!r}")
    for key in ("tones", "bands"):
        if key in d:
            d[key] = tuple(tuple(float(v) for v in t) for t in d[key])
    return _KINDS[kind](**d)


def spec_to_json(spec: InterferenceSpec) -> str:
    return json.dumps(spec_to_dict(spec))


def spec_from_json(text: str) -> InterferenceSpec:
    return spec_from_dict(json.loads(text))


def multitone(Pi: float, Ni: int, center: float, width: float, seed=None) -> Tone:
    """Ni tones spaced width/Ni apart across a band, with independent random phases."""
    rng = np.random.default_rng(seed)
    spacing = width / Ni
    freqs = center - width / 2 + spacing * (np.arange(Ni) + 0.5)
    freqs = (freqs + 0.5) % 1.0 - 0.5
    phases = rng.uniform(-np.pi, np.pi, Ni)
    return Tone(Pi=Pi, tones=tuple((float(f), float(t)) for f, t in zip(freqs, phases)))


# ---------------------------------------------------------------------------
# synthesis


def bandpass_taps(bands: Iterable[tuple[float, float]], length: int) -> np.ndarray:
    """Windowed-sinc band-pass filter covering the union of bands, unit l2 norm."""
    n = np.arange(length) - (length - 1) / 2
    h = np.zeros(length, dtype=complex)
    for center, width in bands:
        proto = sps.firwin(length, width / 2, fs=1.0) if width < 1 else np.eye(1, length, length // 2)[0]
        h += proto * np.exp(2j * np.pi * center * n)
    return h / np.linalg.norm(h)


def synth(spec: InterferenceSpec, N: int, seed=None, batch: int | None = None) -> np.ndarray:
    """Sampled interference, shape (N,) or (batch, N)."""
    rng = np.random.default_rng(seed)
    shape = (N,) if batch is None else (batch, N)
    n = np.arange(N)
    amp = math.sqrt(spec.Pi)
    if isinstance(spec, Tone):
        out = np.zeros(N, dtype=complex)
        for f, th in spec.tones:
            out += np.exp(1j * (2 * np.pi * np.mod(f * n, 1.0) + th))
        out = out * math.sqrt(spec.Pi / spec.Ni)
        return np.broadcast_to(out, shape).copy()
    if isinstance(spec, Sweep):
        ph = np.mod(spec.f_m_norm * n + 0.5 * spec.slope_norm * n.astype(float) ** 2, 1.0)
        out = amp * np.exp(1j * (2 * np.pi * ph + spec.theta))
        return np.broadcast_to(out, shape).copy()
    if isinstance(spec, Broadband):
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return amp * z / math.sqrt(2)
    if isinstance(spec, Narrowband1):
        h = bandpass_taps(spec.bands, spec.filter_len)
        ext = shape[:-1] + (N + spec.filter_len - 1,)
        z = (rng.standard_normal(ext) + 1j * rng.standard_normal(ext)) / math.sqrt(2)
        filt = sps.lfilter(h, [1.0], z, axis=-1)[..., spec.filter_len - 1:]
        carrier = np.exp(-1j * (2 * np.pi * np.mod(spec.f_d * n, 1.0) + spec.theta))
        return amp * carrier * filt
    if isinstance(spec, Narrowband2):
        nsym = int(math.ceil(N / spec.Ru))
        sym = rng.integers(0, spec.psk_order, shape[:-1] + (nsym,))
        a = np.exp(2j * np.pi * sym / spec.psk_order)
        held = a[..., np.floor(n / spec.Ru).astype(int)]
        carrier = np.exp(1j * (2 * np.pi * np.mod(spec.f_d * n, 1.0) + spec.theta))
        return amp * carrier * held
    raise TypeError(f"unsupported spec {type(spec).__name__}")


def daft_image(spec: InterferenceSpec, p: DaftParams, seed=None, batch: int | None = None) -> np.ndarray:
    """DAFT of the synthesized interference (the direct reference)."""
    return daft(synth(spec, p.N, seed, batch), p)


# ---------------------------------------------------------------------------
# closed-form predictions


class ImpactClass(enum.Enum):
    STATIONARY = "stationary"
    NON_STATIONARY = "non-stationary"


@dataclass(frozen=True)
class PerBinAmplitude:
    amp: float


@dataclass(frozen=True)
class ConcentratedBin:
    bin: int
    amp: float


@dataclass(frozen=True)
class GaussianStats:
    mean: float
    var: float


ClosedFormPrediction = Union[PerBinAmplitude, ConcentratedBin, GaussianStats]


def is_matched(spec: Sweep, p: DaftParams) -> bool:
    """Sweep rate equal to the subcarrier chirp rate 2*c1 (relative tolerance 1e-9)."""
    target = 2 * p.c1
    if target == 0:
        return abs(spec.slope_norm) <= MATCH_RTOL
    return abs(spec.slope_norm - target) <= MATCH_RTOL * abs(target)


def classify(spec: InterferenceSpec, p: DaftParams) -> ImpactClass:
    if isinstance(spec, Sweep) and is_matched(spec, p):
        return ImpactClass.NON_STATIONARY
    return ImpactClass.STATIONARY


def concentrated_bin(f_m_norm: float, N: int) -> int:
    """alpha = round(N <f_m>_1), reduced into [0, N)."""
    return int(round(N * (f_m_norm % 1.0))) % N


def predict(spec: InterferenceSpec, p: DaftParams) -> ClosedFormPrediction:
    if isinstance(spec, Tone):
        if spec.Ni == 1:
            return PerBinAmplitude(math.sqrt(spec.Pi))
        return GaussianStats(0.0, spec.Pi)
    if isinstance(spec, Sweep):
        if is_matched(spec, p):
            return ConcentratedBin(concentrated_bin(spec.f_m_norm, p.N), math.sqrt(p.N * spec.Pi))
        return PerBinAmplitude(math.sqrt(spec.Pi))
    return GaussianStats(0.0, spec.Pi)


def predicted_magnitudes(pred: ClosedFormPrediction, N: int) -> np.ndarray:
    if isinstance(pred, PerBinAmplitude):
        return np.full(N, pred.amp)
    if isinstance(pred, ConcentratedBin):
        out = np.zeros(N)
        out[pred.bin] = pred.amp
        return out
    raise ValueError("Gaussian predictions have no per-bin magnitude; use moment_check")


def closed_form_bins(spec: InterferenceSpec, p: DaftParams) -> np.ndarray:
    """Exact complex DAFT image of an on-grid single tone or full-band sweep.

    Requires N * f on the integer grid; the sweep additionally needs
    slope_norm * N integral. Built from the quadratic sum L(n, m).
    """
    N = p.N
    Q = p.chirp_index
    m = np.arange(N)
    if isinstance(spec, Tone):
        if spec.Ni != 1:
            raise ValueError("closed form covers a single tone")
        f, th = spec.tones[0]
        alpha = int(round(N * (f % 1.0)))
        if abs(N * (f % 1.0) - alpha) > 1e-9:
            raise ValueError("tone frequency is not on the bin grid")
        if Q == 0:
            out = np.zeros(N, dtype=complex)
            out[alpha % N] = math.sqrt(N * spec.Pi) * np.exp(1j * th)
            return out
        Ls = np.array([quadratic_sum_L(Q, (alpha - mm) % N, N) for mm in m])
        ph = np.exp(-1j * (2 * np.pi * np.mod(p.c2 * m.astype(float) ** 2, 1.0) + np.pi / 4 - th))
        return math.sqrt(spec.Pi / Q) * ph * Ls
    if isinstance(spec, Sweep):
        alpha = int(round(N * (spec.f_m_norm % 1.0)))
        if abs(N * (spec.f_m_norm % 1.0) - alpha) > 1e-9:
            raise ValueError("sweep start frequency is not on the bin grid")
        Ns = spec.slope_norm * N
        if abs(Ns - round(Ns)) > 1e-9:
            raise ValueError("sweep rate does not give an integer number of band crossings")
        Ns = int(round(Ns))
        ph = np.exp(-1j * (2 * np.pi * np.mod(p.c2 * m.astype(float) ** 2, 1.0) - spec.theta))
        if Ns == Q:
            out = np.zeros(N, dtype=complex)
            out[alpha % N] = math.sqrt(N * spec.Pi) * ph[alpha % N]
            return out
        Ls = np.array([quadratic_sum_L(Q - Ns, (alpha - mm) % N, N) for mm in m])
        return np.sqrt(1j / (Ns - Q) + 0j) * math.sqrt(spec.Pi) * ph * Ls
    raise ValueError("no exact closed form for this family")


# ---------------------------------------------------------------------------
# validation metrics


def relative_error(direct: np.ndarray, predicted: np.ndarray) -> np.ndarray:
    """Per-trial energy ratio || |direct| - |pred| ||^2 / || |pred| ||^2 over the last axis."""
    dm = np.abs(direct)
    pm = np.abs(predicted)
    return np.sum((dm - pm) ** 2, axis=-1) / np.sum(pm**2, axis=-1)


def to_db(ratio: float) -> float:
    if ratio <= 0:
        return ERROR_FLOOR_DB
    return max(10 * math.log10(ratio), ERROR_FLOOR_DB)


def valid_sweep_cycles(p: DaftParams, max_cycles: int = SWEEP_CYCLES_MAX) -> np.ndarray:
    """Band-crossing counts Ns with gcd(2Nc1 - Ns, N) = 1, the flat-amplitude set."""
    Q = p.chirp_index
    ns = np.arange(1, max_cycles + 1)
    keep = [int(v) for v in ns if v != Q and math.gcd(Q - int(v), p.N) == 1]
    return np.array(keep, dtype=int)


def randomize(spec: InterferenceSpec, p: DaftParams, rng: np.random.Generator, on_grid: bool = True) -> InterferenceSpec:
    """Redraw frequency, phase and (for mismatched sweeps) rate uniformly."""
    N = p.N

    def freq() -> float:
        if on_grid:
            return float(((rng.integers(0, N) / N) + 0.5) % 1.0 - 0.5)
        return float(rng.uniform(-0.5, 0.5))

    theta = float(rng.uniform(-np.pi, np.pi))
    if isinstance(spec, Tone):
        if spec.Ni == 1:
            return replace(spec, tones=((freq(), theta),))
        phases = rng.uniform(-np.pi, np.pi, spec.Ni)
        return replace(spec, tones=tuple((f, float(t)) for (f, _), t in zip(spec.tones, phases)))
    if isinstance(spec, Sweep):
        if is_matched(spec, p):
            return replace(spec, f_m_norm=freq(), theta=theta)
        if on_grid:
            cycles = valid_sweep_cycles(p)
            Ns = int(rng.choice(cycles))
            slope = Ns / N
        else:
            Ns = None
            slope = float(rng.uniform(0, SWEEP_CYCLES_MAX / N))
        return replace(spec, f_m_norm=freq(), theta=theta, slope_norm=slope, Ns=Ns)
    return spec


def _randomized_batch(spec: Tone | Sweep, p: DaftParams, rng: np.random.Generator, b: int) -> np.ndarray:
    """``b`` on-grid draws of ``randomize(spec)``, synthesized in one pass."""
    N = p.N
    n = np.arange(N)
    theta = rng.uniform(-np.pi, np.pi, (b, 1))
    if isinstance(spec, Tone):
        if spec.Ni == 1:
            ph = np.mod(rng.integers(0, N, (b, 1)) * n, N) / N
            return math.sqrt(spec.Pi) * np.exp(1j * (2 * np.pi * ph + theta))
        freqs = np.array([f for f, _ in spec.tones])
        phases = rng.uniform(-np.pi, np.pi, (b, spec.Ni))
        tones = np.exp(1j * (2 * np.pi * np.mod(np.outer(freqs, n), 1.0)))
        return math.sqrt(spec.Pi / spec.Ni) * (np.exp(1j * phases) @ tones)
    alpha = rng.integers(0, N, (b, 1))
    if is_matched(spec, p):
        slope = np.full((b, 1), spec.slope_norm)
    else:
        slope = rng.choice(valid_sweep_cycles(p), (b, 1)) / N
    ph = np.mod(alpha * n / N + 0.5 * slope * n.astype(float) ** 2, 1.0)
    return math.sqrt(spec.Pi) * np.exp(1j * (2 * np.pi * ph + theta))


def relative_error_db(
    spec: InterferenceSpec,
    p: DaftParams,
    trials: int,
    seed=None,
    on_grid: bool = True,
    batch: int = 512,
) -> float:
    """Mean relative error (dB) between direct DAFT magnitudes and the prediction.

    Each trial redraws the carrier frequency, phase and, for mismatched sweeps,
    the sweep rate. With ``on_grid`` frequencies sit on the bin grid and sweep
    rates are integer band crossings coprime with N after subtracting 2Nc1,
    which is the set where the closed forms are exact.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (isinstance(spec, Sweep) or (isinstance(spec, Tone) and spec.Ni == 1)):
        raise ValueError("no deterministic per-bin prediction for this family; use moment_check")
    rng = np.random.default_rng(seed)
    total = 0.0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        sigs = np.empty((b, p.N), dtype=complex)
        preds = np.empty((b, p.N))
        for j in range(b):
            s = randomize(spec, p, rng, on_grid)
            sigs[j] = synth(s, p.N)
            preds[j] = predicted_magnitudes(predict(s, p), p.N)
        total += float(np.sum(relative_error(daft(sigs, p), preds)))
        done += b
    return to_db(total / trials)


@dataclass(frozen=True)
class MomentReport:
    mean_err: float
    mean_sigma: float
    var_rel_err: float
    trials: int


def moment_check(
    spec: InterferenceSpec, p: DaftParams, trials: int, seed=None, batch: int = 1024
) -> MomentReport:
    """Worst-bin deviation of the empirical per-bin mean and variance from (0, Pi).

    ``mean_err`` is the largest |mean|, ``mean_sigma`` the standard error of a
    per-bin mean, and ``var_rel_err`` the largest |var - Pi| / Pi (absolute when
    Pi = 0).
    """
    rng = np.random.default_rng(seed)
    s1 = np.zeros(p.N, dtype=complex)
    s2 = np.zeros(p.N)
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        if isinstance(spec, (Tone, Sweep)):
            imgs = daft(_randomized_batch(spec, p, rng, b), p)
        else:
            imgs = daft_image(spec, p, rng, batch=b)
        s1 += imgs.sum(axis=0)
        s2 += np.sum(np.abs(imgs) ** 2, axis=0)
        done += b
    mean = s1 / trials
    var = s2 / trials - np.abs(mean) ** 2
    scale = spec.Pi if spec.Pi > 0 else 1.0
    return MomentReport(
        mean_err=float(np.max(np.abs(mean))),
        mean_sigma=math.sqrt(spec.Pi / trials),
        var_rel_err=float(np.max(np.abs(var - spec.Pi)) / scale),
        trials=trials,
    )


def report_csv(rows: Iterable[tuple[str, str, float]]) -> str:
    """CSV text with columns spec_id, metric, value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["spec_id", "metric", "value"])
    for r in rows:
        w.writerow([r[0], r[1], repr(float(r[2]))])
    return buf.getvalue()
