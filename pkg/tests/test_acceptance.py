"""Exit criteria for the whole package; each test reports one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, random_state
from structured_rx import formats
from structured_rx.active import propagate_active, run_active_chain, synthesize_schedules
from structured_rx.channel import ChannelParams
from structured_rx.cli import main
from structured_rx.field import (
    WAVEPLATE,
    FieldState,
    PolTransform,
    SwitchSchedule,
    apply_pol_delay,
    apply_schedule,
    apply_uniform,
    max_abs_diff,
    shift,
    total_energy,
)
from structured_rx.hadamard import Codeword, all_codewords, encode_bpsk
from structured_rx.link import (
    Scheme,
    SchemeConfig,
    analytic_ppm_mi,
    channel_equivalence_pvalue,
    compare_par,
    reports_to_csv,
    reports_to_json,
    run_trials,
)
from structured_rx.passive import build_passive_chain, derive_pattern, propagate_passive

N_TRIALS = 100_000
SEED_ACTIVE = 2024
SEED_PPM = 4049


def record(n, name, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {n}. {name}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def active_reports():
    out = {}
    for n_s in (0.5, 1.0, 2.0):
        t0 = time.perf_counter()
        r = run_trials(SchemeConfig(Scheme.ACTIVE_HADAMARD, n_s, m=4), N_TRIALS, SEED_ACTIVE)
        out[n_s] = (r, time.perf_counter() - t0)
    return out


def test_1_exhaustive_concentration():
    t0 = time.perf_counter()
    worst, affine = 0.0, True
    for m in range(1, 9):
        chain = synthesize_schedules(m)
        c = chain.position_offset
        for word in all_codewords(m):
            out = propagate_active(word, 1.0, chain)
            e = out.bin_energies()
            i = int(np.argmax(e))
            worst = max(worst, 1.0 - e[i] / e.sum())
            affine &= out.start_bin + i == c + word.bits
    dt = time.perf_counter() - t0
    record(1, "exhaustive concentration m=1..8", worst <= 1e-10 and affine and dt < 10,
           f"max leakage {worst:.2e} (<=1e-10), position map c+bits: {affine}, {dt:.2f} s (<10 s)")


def test_2_module_count_scaling():
    counts = {m: len(synthesize_schedules(m).modules) for m in range(1, 17)}
    ok = all(counts[m] == m for m in counts)
    record(2, "module count == m for m=1..16", ok, f"counts {list(counts.values())}")


def test_3_passive_round_trip():
    worst_leak, worst_dev, n_bins_ok = 0.0, 0.0, True
    for m in range(1, 9):
        chain = build_passive_chain(m)
        for pol in "HV":
            sym = derive_pattern(m, pol, 1.0)
            e = sym.pattern.bin_energies()
            n_bins_ok &= int(np.sum(e > 0)) == 1 << m
            worst_dev = max(worst_dev, float(np.max(np.abs(e - 1.0 / (1 << m)))))
            cells = np.abs(propagate_passive(sym.pattern, chain).amps) ** 2
            worst_leak = max(worst_leak, 1.0 - cells.max() / cells.sum())
    record(3, "passive round trip m=1..8, H and V", worst_leak <= 1e-10 and worst_dev <= 1e-12 and n_bins_ok,
           f"max leakage {worst_leak:.2e} (<=1e-10), bin energy deviation {worst_dev:.2e} (<=1e-12), 2^m bins: {n_bins_ok}")


def test_4_eightfold_peak_reduction():
    rows = compare_par([
        SchemeConfig(Scheme.REFERENCE_PPM, 1.0, M=16),
        SchemeConfig(Scheme.PASSIVE_PATTERN, 1.0, m=3, M=16),
    ])
    ppm, pattern = rows[0]["par"], rows[1]["par"]
    ratio = pattern / ppm
    record(4, "PAR(m=3 pattern) / PAR(16-PPM) == 1/8", ratio == 0.125 and rows[0]["frame_len"] == rows[1]["frame_len"],
           f"PAR {pattern!r} vs {ppm!r} over {rows[0]['frame_len']} bins, ratio {ratio!r}")


@pytest.mark.parametrize("n_s", [0.5, 1.0, 2.0])
def test_5_erasure_statistics(active_reports, n_s):
    r, dt = active_reports[n_s]
    p = math.exp(-n_s)
    se = math.sqrt(p * (1 - p) / N_TRIALS)
    ok = abs(r.erasure_rate - p) <= 3 * se and r.symbol_error_rate == 0 and dt < 30
    record(5, f"erasure statistics N_s={n_s}", ok,
           f"erasure {r.erasure_rate:.5f} vs e^-N_s {p:.5f} (|diff| {abs(r.erasure_rate - p):.5f} <= 3se {3 * se:.5f}), "
           f"SER {r.symbol_error_rate}, {dt:.1f} s (<30 s)")


@pytest.mark.parametrize("n_s", [1.0, 2.0])
def test_6_mutual_information(active_reports, n_s):
    r, _ = active_reports[n_s]
    target = analytic_ppm_mi(16, n_s)
    diff = abs(r.mi_bits_per_symbol - target)
    ppm = run_trials(SchemeConfig(Scheme.REFERENCE_PPM, n_s, M=16), N_TRIALS, SEED_PPM)
    pval = channel_equivalence_pvalue(r, ppm)
    ok = diff <= 0.02 and pval > 0.0027
    record(6, f"MI consistency and PPM equivalence N_s={n_s}", ok,
           f"plug-in MI {r.mi_bits_per_symbol:.4f} vs analytic {target:.4f} (|diff| {diff:.4f} <= 0.02); "
           f"active vs PPM chi-square p={pval:.3f} (>0.0027)")


def _random_unitary(rng):
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return PolTransform(q * (np.diag(r) / abs(np.diag(r))))


def test_7_numerical_hygiene():
    rng = np.random.default_rng(7)
    worst_unit, worst_lin, worst_shift, worst_energy = 0.0, 0.0, 0.0, 0.0
    chain = synthesize_schedules(3)
    for _ in range(100):
        u = _random_unitary(rng)
        worst_unit = max(worst_unit, float(np.max(np.abs(u.u.conj().T @ u.u - np.eye(2)))))
        sched = SwitchSchedule(frozenset(int(b) for b in rng.integers(-5, 15, size=4)))
        T, phi = int(rng.integers(1, 5)), float(rng.uniform(-np.pi, np.pi))
        noisy = chain.with_phase_errors(rng.uniform(-np.pi, np.pi, 6))
        elements = [
            (lambda s: apply_uniform(s, u), lambda d: (lambda s: apply_uniform(s, u))),
            (lambda s: apply_schedule(s, sched), lambda d: (lambda s: apply_schedule(s, sched.shifted(d)))),
            (lambda s: apply_pol_delay(s, T, phi), lambda d: (lambda s: apply_pol_delay(s, T, phi))),
            (lambda s: propagate_passive(s, build_passive_chain(3)), lambda d: (lambda s: propagate_passive(s, build_passive_chain(3)))),
        ]
        x, y = random_state(rng), random_state(rng)
        a, b = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        d = int(rng.integers(-6, 7))
        for f, f_shift in elements:
            worst_energy = max(worst_energy, abs(total_energy(f(x)) - total_energy(x)) / total_energy(x))
            worst_lin = max(worst_lin, max_abs_diff(f(a * x + b * y), a * f(x) + b * f(y)))
            worst_shift = max(worst_shift, max_abs_diff(f_shift(d)(shift(x, d)), shift(f(x), d)))
        w = encode_bpsk(Codeword(3, int(rng.integers(8))), 1.0)
        worst_energy = max(worst_energy, abs(total_energy(run_active_chain(w, noisy)) - 8) / 8)
    u_wp = float(np.max(np.abs(WAVEPLATE.u.conj().T @ WAVEPLATE.u - np.eye(2))))
    ok = max(worst_unit, u_wp) <= 1e-12 and worst_energy <= 1e-12 and worst_lin <= 1e-12 and worst_shift <= 1e-12
    record(7, "unitarity / linearity / shift covariance (100 cases)", ok,
           f"unitarity {max(worst_unit, u_wp):.1e}, energy {worst_energy:.1e}, linearity {worst_lin:.1e}, "
           f"shift {worst_shift:.1e} (all <=1e-12)")


def test_8_determinism(tmp_path):
    cfg = SchemeConfig(Scheme.ACTIVE_HADAMARD, 1.0, m=4, channel=ChannelParams(phase_noise_sigma=0.2, dark_mean=0.005))
    r1 = run_trials(cfg, 20_000, 31, workers=1)
    r4 = run_trials(cfg, 20_000, 31, workers=4)
    lib_ok = reports_to_csv([r1]) == reports_to_csv([r4]) and reports_to_json([r1]) == reports_to_json([r4])
    conf = tmp_path / "c.json"
    conf.write_text('{"schema_version": 1, "scheme": "ACTIVE_HADAMARD", "m": 3, "sweep": {"n_s": [0.5, 2]}, '
                    '"channel": {"dark_mean": 0.01}, "trials": 5000}')
    outs = []
    for i, workers in enumerate((1, 3)):
        c = tmp_path / f"c{i}.json"
        c.write_text(conf.read_text()[:-1] + f', "workers": {workers}}}')
        out = tmp_path / f"r{i}.csv"
        assert main(["simulate", "--config", str(c), "--seed", "8", "--out", str(out)]) == 0
        formats.validate_report_csv(out.read_text())
        outs.append((out.read_bytes(), out.with_suffix(".json").read_bytes()))
    cli_ok = outs[0] == outs[1]
    record(8, "byte-identical outputs across thread counts", lib_ok and cli_ok,
           f"library CSV/JSON identical: {lib_ok}; CLI CSV/JSON identical (1 vs 3 workers): {cli_ok}")
