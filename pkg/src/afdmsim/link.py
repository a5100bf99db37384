"""Monte Carlo packet chain in the DAFT domain.

Frames pass through the banded input-output relation y = sum_i h_i H_i x plus
interference and noise, both transformed into the DAFT domain. Every frame
draws fresh path gains and integer Doppler shifts. Work is split into fixed
chunks with seeds spawned from the run seed, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .channel import EffectiveChannel, band_values
from .daft import DaftParams, daft
from .detectors import CddConfig, cdd_equalize
from .interference import Broadband, InterferenceSpec, Sweep, Tone, randomize, synth
from .spreading import (
    EccParams,
    SpreadingSequence,
    deinterleave,
    despread,
    demap,
    ecc_decode,
    ecc_encode,
    interleave,
    map_constellation,
    spread,
    spreading_sequence,
)

CHUNK_FRAMES = 1024


@dataclass(frozen=True)
class LinkConfig:
    """Frame, code and channel settings of the simulated link.

    Attributes:
        N: bins per frame.
        Ncp: prefix length (bounds the largest path delay).
        Nm: constellation order.
        Np: information bits per packet.
        ecc: code parameters.
        Nd: chips per symbol.
        delays: integer path delays.
        max_doppler_bins: integer Doppler drawn uniformly from [-k, k] per path.
        system: "afdm" (chirp rates from the Doppler span) or "ofdm" (c1 = c2 = 0).
    """

    N: int = 256
    Ncp: int = 18
    Nm: int = 4
    Np: int = 544
    ecc: EccParams = EccParams(17, 31, 7)
    Nd: int = 16
    delays: tuple[int, ...] = (0, 4, 8)
    max_doppler_bins: int = 1
    system: str = "afdm"

    def __post_init__(self) -> None:
        if self.system not in ("afdm", "ofdm"):
            raise ValueError(f"unknown system {self.system!r}")
        if max(self.delays) > self.Ncp:
            raise ValueError("largest delay exceeds the prefix")
        if (self.N * self.log2Nm) % self.Nd:
            raise ValueError("Nd must divide N*log2(Nm)")
        if self.Np % self.ecc.Ni:
            raise ValueError("Np must be a multiple of Ni")

    @property
    def L(self) -> int:
        return len(self.delays)

    @property
    def log2Nm(self) -> int:
        return int(math.log2(self.Nm))

    @property
    def bits_per_frame(self) -> int:
        return self.N * self.log2Nm // self.Nd

    @property
    def coded_bits(self) -> int:
        return self.Np // self.ecc.Ni * self.ecc.No

    @property
    def frames_per_packet(self) -> int:
        return -(-self.coded_bits // self.bits_per_frame)

    @property
    def params(self) -> DaftParams:
        if self.system == "ofdm":
            return DaftParams.ofdm(self.N, self.Ncp)
        return DaftParams.for_doppler(self.N, self.max_doppler_bins, self.Ncp)

    @property
    def seq(self) -> SpreadingSequence:
        return spreading_sequence(self.Nd)


def random_channels(cfg: LinkConfig, n_frames: int, rng: np.random.Generator) -> EffectiveChannel:
    """Independent Rayleigh gains CN(0, 1/L) and integer Doppler for every frame."""
    L = cfg.L
    gains = (rng.standard_normal((n_frames, L)) + 1j * rng.standard_normal((n_frames, L))) / math.sqrt(2 * L)
    k = rng.integers(-cfg.max_doppler_bins, cfg.max_doppler_bins + 1, (n_frames, L)).astype(float)
    delays = np.broadcast_to(np.asarray(cfg.delays, dtype=float), (n_frames, L))
    locs, values = band_values(delays, k, cfg.params, 0)
    return EffectiveChannel(gains=gains, locs=locs, values=values, kv=0, delays=delays, dopplers=k, N=cfg.N)


def interference_frames(
    spec: InterferenceSpec | None, p: DaftParams, n_frames: int, rng: np.random.Generator
) -> np.ndarray:
    """DAFT-domain interference for each frame; deterministic families get fresh frequency and phase."""
    if spec is None or spec.Pi == 0:
        return np.zeros((n_frames, p.N), dtype=complex)
    if isinstance(spec, (Tone, Sweep)):
        sigs = np.stack([synth(randomize(spec, p, rng), p.N) for _ in range(n_frames)])
        return daft(sigs, p)
    return daft(synth(spec, p.N, rng, batch=n_frames), p)


def _receive(y: np.ndarray, ch: EffectiveChannel, cfg: LinkConfig, detector: str, Pn: float) -> np.ndarray:
    if detector == "cdd":
        return cdd_equalize(y, ch, cfg.params, CddConfig(0))
    if detector == "mmse":
        return mmse_batch(y, ch, Pn)
    raise ValueError(f"unknown detector {detector!r}")


def dense_batch(ch: EffectiveChannel) -> np.ndarray:
    """Dense matrices of a batched banded channel, shape (frames, N, N)."""
    B = ch.gains.shape[0]
    N = ch.N
    H = np.zeros((B, N, N), dtype=complex)
    cols = ch.columns()
    rows = np.broadcast_to(np.arange(N), cols.shape)
    fr = np.broadcast_to(np.arange(B)[:, None, None, None], cols.shape)
    np.add.at(H, (fr, rows, cols), ch.gains[:, :, None, None] * ch.values)
    return H


def mmse_batch(y: np.ndarray, ch: EffectiveChannel, Pn: float) -> np.ndarray:
    H = dense_batch(ch)
    Hh = np.conj(np.swapaxes(H, -1, -2))
    A = H @ Hh
    idx = np.arange(ch.N)
    A[:, idx, idx] += Pn
    return (Hh @ np.linalg.solve(A, y[..., None]))[..., 0]


def _pass_frames(
    chips: np.ndarray,
    cfg: LinkConfig,
    Pn: float,
    spec: InterferenceSpec | None,
    rng: np.random.Generator,
    detector: str,
) -> np.ndarray:
    n = chips.shape[0]
    ch = random_channels(cfg, n, rng)
    y = ch.apply(chips)
    y = y + interference_frames(spec, cfg.params, n, rng)
    if Pn > 0:
        y = y + math.sqrt(Pn / 2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return _receive(y, ch, cfg, detector, Pn)


@dataclass(frozen=True)
class PacketStats:
    packets: int
    successes: int
    bit_errors: int
    bits: int

    def __add__(self, other: "PacketStats") -> "PacketStats":
        return PacketStats(
            self.packets + other.packets,
            self.successes + other.successes,
            self.bit_errors + other.bit_errors,
            self.bits + other.bits,
        )

    @property
    def success_rate(self) -> float:
        return self.successes / self.packets if self.packets else math.nan

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else math.nan


def _packet_chunk(cfg: LinkConfig, Pn: float, spec, n_packets: int, seed, detector: str) -> PacketStats:
    rng = np.random.default_rng(seed)
    B = cfg.bits_per_frame
    F = cfg.frames_per_packet
    total = F * B
    info = rng.integers(0, 2, (n_packets, cfg.Np), dtype=np.int8)
    coded = ecc_encode(info, cfg.ecc)
    pad = rng.integers(0, 2, (n_packets, total - cfg.coded_bits), dtype=np.int8)
    tx_bits = np.concatenate([coded, pad], axis=1)
    # rows = bits per frame, so frame f carries column f and a codeword's bits
    # land in consecutive frames
    stream = interleave(tx_bits, B)
    chips = spread(map_constellation(stream, cfg.Nm), cfg.seq).reshape(n_packets * F, cfg.N)
    x_hat = _pass_frames(chips, cfg, Pn, spec, rng, detector).reshape(n_packets, F * cfg.N)
    rx_bits = deinterleave(demap(despread(x_hat, cfg.seq), cfg.Nm), B)
    rx_coded = rx_bits[:, : cfg.coded_bits]
    ok = ecc_decode(rx_coded, coded, cfg.ecc).all(axis=1)
    return PacketStats(
        packets=n_packets,
        successes=int(ok.sum()),
        bit_errors=int((rx_coded != coded).sum()),
        bits=int(coded.size),
    )


def _chunks(total: int, per_chunk: int) -> list[int]:
    sizes = [per_chunk] * (total // per_chunk)
    if total % per_chunk:
        sizes.append(total % per_chunk)
    return sizes


def _run(fn, sizes: list[int], seed, threads: int) -> list:
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    if threads <= 1:
        return [fn(n, s) for n, s in zip(sizes, seeds)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, sizes, seeds))


def simulate_packets(
    cfg: LinkConfig,
    Pn: float,
    spec: InterferenceSpec | None,
    n_packets: int,
    seed=0,
    detector: str = "cdd",
    threads: int = 1,
) -> PacketStats:
    """Send ``n_packets`` packets and count those whose every codeword decodes."""
    per = max(1, CHUNK_FRAMES // cfg.frames_per_packet)
    parts = _run(
        lambda n, s: _packet_chunk(cfg, Pn, spec, n, s, detector), _chunks(n_packets, per), seed, threads
    )
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def _ber_chunk(cfg: LinkConfig, Pn: float, spec, n_frames: int, seed, detector: str) -> tuple[int, int]:
    rng = np.random.default_rng(seed)
    B = cfg.bits_per_frame
    bits = rng.integers(0, 2, (n_frames, B), dtype=np.int8)
    sym = map_constellation(bits.reshape(-1), cfg.Nm)
    chips = spread(sym, cfg.seq).reshape(n_frames, cfg.N)
    x_hat = _pass_frames(chips, cfg, Pn, spec, rng, detector)
    rx = demap(despread(x_hat.reshape(-1), cfg.seq), cfg.Nm).reshape(n_frames, B)
    return int((rx != bits).sum()), int(bits.size)


def simulate_ber(
    cfg: LinkConfig,
    Pn: float,
    n_bits: int,
    seed=0,
    detector: str = "cdd",
    spec: InterferenceSpec | None = None,
    threads: int = 1,
) -> tuple[int, int]:
    """Uncoded bit errors after detection and despreading: (errors, bits)."""
    if cfg.bits_per_frame % cfg.log2Nm:
        raise ValueError("BER runs need whole symbols per frame")
    n_frames = -(-n_bits // cfg.bits_per_frame)
    per = CHUNK_FRAMES if detector == "cdd" else 64
    parts = _run(lambda n, s: _ber_chunk(cfg, Pn, spec, n, s, detector), _chunks(n_frames, per), seed, threads)
    return sum(p[0] for p in parts), sum(p[1] for p in parts)


def ebn0_to_pn(ebn0_db: float, cfg: LinkConfig, Ps: float = 1.0) -> float:
    """Noise power per bin for a given Eb/N0, with Eb = Ps Nd / log2(Nm)."""
    return Ps * cfg.Nd / cfg.log2Nm / 10 ** (ebn0_db / 10)


def with_nd(cfg: LinkConfig, Nd: int) -> LinkConfig:
    return replace(cfg, Nd=int(Nd))


def default_interference(kind: str, Pi: float, p: DaftParams) -> InterferenceSpec | None:
    """Per-frame interference spec of a given family and power."""
    if Pi == 0:
        return None
    if kind == "broadband":
        return Broadband(Pi)
    if kind == "matched-sweep":
        return Sweep(Pi, 0.0, 0.0, 2 * p.c1)
    if kind == "tone":
        return Tone(Pi, ((0.0, 0.0),))
    raise ValueError(f"unknown interference kind {kind!r}")
