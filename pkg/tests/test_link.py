import math

import numpy as np
import pytest

from afdmsim.daft import DaftParams
from afdmsim.interference import Broadband, Sweep, Tone
from afdmsim.link import (
    LinkConfig,
    PacketStats,
    default_interference,
    dense_batch,
    ebn0_to_pn,
    interference_frames,
    mmse_batch,
    random_channels,
    simulate_ber,
    simulate_packets,
    with_nd,
)
from afdmsim.detectors import mmse_detect
from afdmsim.channel import EffectiveChannel

SMALL = LinkConfig(N=64, Ncp=8, Nd=8, delays=(0, 2, 5))


def test_config_derived_sizes():
    c = LinkConfig()
    assert c.L == 3 and c.bits_per_frame == 32
    assert c.coded_bits == 32 * 31
    assert c.frames_per_packet == 31
    assert with_nd(c, 32).Nd == 32
    assert LinkConfig(system="ofdm").params.c1 == 0


@pytest.mark.parametrize(
    "kw", [dict(system="fmcw"), dict(delays=(0, 30)), dict(Nd=7), dict(Np=100)]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        LinkConfig(**kw)


def test_noiseless_packets_all_decode():
    for det in ("cdd", "mmse"):
        s = simulate_packets(SMALL, 0.0, None, 6, seed=1, detector=det)
        assert s.successes == 6
    # single path, CDD is exact
    one = LinkConfig(N=64, Ncp=8, Nd=4, delays=(3,))
    s = simulate_packets(one, 0.0, None, 5, seed=2)
    assert s.bit_errors == 0


def test_packets_deterministic_across_threads():
    a = simulate_packets(SMALL, 0.5, Broadband(0.5), 80, seed=7, threads=1)
    b = simulate_packets(SMALL, 0.5, Broadband(0.5), 80, seed=7, threads=4)
    assert a == b
    assert a.packets == 80


def test_packet_stats_add():
    s = PacketStats(2, 1, 3, 10) + PacketStats(3, 3, 0, 10)
    assert s == PacketStats(5, 4, 3, 20)
    assert s.success_rate == 0.8 and s.ber == 0.15
    assert math.isnan(PacketStats(0, 0, 0, 0).success_rate)


def test_ber_deterministic_and_decreasing_in_snr():
    cfg = LinkConfig(N=64, Ncp=8, Nd=8, delays=(0, 2, 5))
    e1 = simulate_ber(cfg, ebn0_to_pn(0, cfg), 20_000, seed=3)
    e2 = simulate_ber(cfg, ebn0_to_pn(0, cfg), 20_000, seed=3, threads=3)
    assert e1 == e2
    hi = simulate_ber(cfg, ebn0_to_pn(10, cfg), 20_000, seed=3)
    assert hi[0] / hi[1] < e1[0] / e1[1]


def test_single_path_bpsk_matches_rayleigh_closed_form():
    cfg = LinkConfig(N=64, Ncp=8, Nm=2, Np=544, Nd=1, delays=(0,))
    ebn0 = 4.0
    err, bits = simulate_ber(cfg, ebn0_to_pn(ebn0, cfg), 200_000, seed=4)
    g = 10 ** (ebn0 / 10)
    ref = 0.5 * (1 - math.sqrt(g / (1 + g)))
    assert abs(err / bits - ref) < 4 * math.sqrt(ref * (1 - ref) / bits)


def test_ebn0_to_pn():
    cfg = LinkConfig(Nd=16)
    assert ebn0_to_pn(0.0, cfg) == pytest.approx(8.0)
    assert ebn0_to_pn(10.0, cfg, Ps=2.0) == pytest.approx(1.6)


def test_random_channel_power_and_doppler():
    rng = np.random.default_rng(0)
    ch = random_channels(SMALL, 20_000, rng)
    assert abs(np.mean(np.sum(np.abs(ch.gains) ** 2, axis=1)) - 1) < 0.02
    assert set(np.unique(ch.dopplers)) <= {-1.0, 0.0, 1.0}


def test_interference_frames_power():
    p = SMALL.params
    rng = np.random.default_rng(1)
    for spec in (Broadband(2.0), Tone(2.0, ((0.0, 0.0),))):
        v = interference_frames(spec, p, 500, rng)
        assert abs(np.mean(np.abs(v) ** 2) - 2.0) < 0.1
    conc = interference_frames(Sweep(1.0, 0.0, 0.0, 2 * p.c1), p, 50, rng)
    # matched sweep puts everything into one bin per frame
    assert np.all(np.sum(np.abs(conc) > 1e-6, axis=1) == 1)
    assert not interference_frames(None, p, 3, rng).any()


def test_default_interference_kinds():
    p = DaftParams.for_doppler(64, 1)
    assert default_interference("broadband", 0.0, p) is None
    assert isinstance(default_interference("tone", 1.0, p), Tone)
    assert default_interference("matched-sweep", 1.0, p).slope_norm == pytest.approx(2 * p.c1)
    with pytest.raises(ValueError):
        default_interference("pulse", 1.0, p)


def test_batched_mmse_matches_single_frame():
    rng = np.random.default_rng(2)
    ch = random_channels(SMALL, 3, rng)
    y = rng.standard_normal((3, 64)) + 1j * rng.standard_normal((3, 64))
    H = dense_batch(ch)
    out = mmse_batch(y, ch, 0.3)
    for b in range(3):
        single = EffectiveChannel(ch.gains[b], ch.locs[b], ch.values[b], 0, ch.delays[b], ch.dopplers[b], 64)
        assert np.allclose(H[b], single.dense(), atol=1e-12)
        assert np.allclose(out[b], mmse_detect(y[b], single, 0.3), atol=1e-10)
