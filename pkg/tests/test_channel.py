import math

import numpy as np
import pytest

from conftest import random_state
from structured_rx.active import run_active_chain, synthesize_schedules
from structured_rx.channel import (
    ERASURE,
    INVALID,
    ChannelParams,
    DecodeFrame,
    DecodeOutcome,
    DetectionRecord,
    DetectorMode,
    apply_channel,
    cell_means,
    decode,
    detect,
    records_to_csv,
    trial_rng,
)
from structured_rx.field import H, V, FieldState, max_abs_diff, total_energy
from structured_rx.hadamard import Codeword, encode_bpsk

A, B = DetectorMode.SUMMED, DetectorMode.RESOLVED


def test_identity_channel(rng):
    x = random_state(rng)
    assert max_abs_diff(apply_channel(x, ChannelParams(), rng), x) == 0


def test_transmissivity_scales_energy(rng):
    x = random_state(rng)
    assert total_energy(apply_channel(x, ChannelParams(transmissivity=0.25))) == pytest.approx(
        0.25 * total_energy(x), rel=1e-14
    )


def test_params_validation():
    for bad in (dict(transmissivity=1.5), dict(visibility=-0.1), dict(dark_mean=-1), dict(phase_noise_sigma=-1)):
        with pytest.raises(ValueError):
            ChannelParams(**bad)


def _nominal_fraction_oracle(sigma):
    # phases on the two bins are iid N(0, sigma^2); E[cos(phi0 - phi1)] = exp(-sigma^2)
    return (1 + math.exp(-sigma ** 2)) / 2


@pytest.mark.parametrize("sigma", [0.3, 0.8])
def test_phase_noise_degrades_interference(sigma):
    ch = synthesize_schedules(1)
    x = encode_bpsk(Codeword(1, 0), 1.0)
    params = ChannelParams(phase_noise_sigma=sigma)
    n = 20000
    fr = np.empty(n)
    for i in range(n):
        out = run_active_chain(apply_channel(x, params, trial_rng(3, i)), ch)
        fr[i] = np.sum(np.abs(out.window(1, 2)) ** 2) / total_energy(out)
    expected = _nominal_fraction_oracle(sigma)
    assert abs(fr.mean() - expected) < 4 * fr.std() / math.sqrt(n)


def test_phase_noise_common_to_polarizations():
    x = FieldState(0, [[1, 1], [1, -1]])
    y = apply_channel(x, ChannelParams(phase_noise_sigma=1.0), trial_rng(1, 0))
    ratio = y.amps[:, 1] / y.amps[:, 0]
    np.testing.assert_allclose(ratio, [1, -1], atol=1e-14)


def test_zero_count_probability():
    x = FieldState.pulse(0, V, 1.0)
    n = 20000
    zeros = sum(detect(x, ChannelParams(), A, trial_rng(5, i)).total() == 0 for i in range(n))
    p = math.exp(-1)
    assert abs(zeros / n - p) <= 3 * math.sqrt(p * (1 - p) / n)
    assert p == pytest.approx(0.36788, abs=5e-6)


def test_empty_state_no_counts():
    rec = detect(FieldState.empty(), ChannelParams(), A, trial_rng(0, 0), window=(0, 16))
    assert rec.counts.shape == (16,) and rec.total() == 0


def test_dark_counts_over_frame():
    p = 1 - math.exp(-0.16)
    assert p == pytest.approx(0.1479, abs=5e-5)
    params = ChannelParams(dark_mean=0.01)
    n = 20000
    hits = sum(detect(FieldState.empty(), params, A, trial_rng(8, i), window=(0, 16)).total() > 0 for i in range(n))
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_detect_reproducible(rng):
    x = random_state(rng)
    params = ChannelParams(dark_mean=0.05, visibility=0.9)
    for mode in (A, B):
        assert detect(x, params, mode, trial_rng(42, 7)) == detect(x, params, mode, trial_rng(42, 7))


def test_cell_means_visibility_conserves_mean(rng):
    amps = rng.normal(size=(10, 2)) + 1j * rng.normal(size=(10, 2))
    total = np.sum(np.abs(amps) ** 2)
    for mode in (A, B):
        mu = cell_means(amps, ChannelParams(visibility=0.7), mode, slice(2, 6))
        assert mu.sum() == pytest.approx(total, rel=1e-12)
    mu = cell_means(amps, ChannelParams(dark_mean=0.1), A)
    np.testing.assert_allclose(mu, np.sum(np.abs(amps) ** 2, axis=1) + 0.1, rtol=1e-14)
    mu = cell_means(amps, ChannelParams(visibility=0.0), A, slice(2, 6))
    np.testing.assert_allclose(mu, np.r_[np.zeros(2), np.full(4, total / 4), np.zeros(4)], rtol=1e-12, atol=1e-15)


def _frame(mode=A):
    positions = {10 + k: k for k in range(8)}
    if mode is B:
        positions = {(t, p): k for t, k in positions.items() for p in (H, V)}
    return DecodeFrame((0, 24), (10, 18), positions, mode)


def _record(cells, mode=A):
    counts = np.zeros(24 if mode is A else (24, 2), dtype=np.int64)
    for c, n in cells.items():
        counts[c] = n
    return DetectionRecord(0, counts, mode)


def test_decode_erasure():
    assert decode(_record({}), _frame(), trial_rng(0, 0)) == ERASURE


def test_decode_symbol():
    assert decode(_record({15: 1}), _frame(), trial_rng(0, 0)) == DecodeOutcome.symbol(5)
    assert decode(_record({(15, V): 2, (3, H): 1}, B), _frame(B), trial_rng(0, 0)) == DecodeOutcome.symbol(5)


def test_decode_guard_bin_invalid():
    assert decode(_record({20: 1}), _frame(), trial_rng(0, 0)) == INVALID


def test_decode_tie_break_random():
    seen = {decode(_record({11: 1, 13: 1}), _frame(), trial_rng(9, i)).index for i in range(200)}
    assert seen == {1, 3}


def test_records_csv():
    text = records_to_csv([(0, _record({15: 2})), (1, DetectionRecord(5, np.array([[0, 1]]), B))])
    lines = text.splitlines()
    assert lines[0] == "trial,bin,pol,count"
    assert "0,15,HV,2" in lines
    assert lines[-2:] == ["1,5,H,0", "1,5,V,1"]


def test_channel_commutes_with_propagation():
    ch = synthesize_schedules(3)
    x = encode_bpsk(Codeword(3, 5), 0.8 + 0.1j)
    params = ChannelParams(transmissivity=0.3)
    lhs = run_active_chain(apply_channel(x, params), ch)
    rhs = math.sqrt(0.3) * run_active_chain(x, ch)
    assert max_abs_diff(lhs, rhs) <= 1e-12


def test_trial_streams_independent_of_order():
    a = [trial_rng(17, i).random() for i in range(5)]
    b = [trial_rng(17, i).random() for i in reversed(range(5))][::-1]
    assert a == b
    assert len(set(a)) == 5
    with pytest.raises(ValueError):
        trial_rng(-1, 0)
