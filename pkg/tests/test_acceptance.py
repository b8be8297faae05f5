"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Run ``python3 tests/test_acceptance.py`` for just the summary lines, or let pytest
collect it with the rest of the suite.
"""

import time

import mpmath
import numpy as np
import pytest

from hemopipe.beer_lambert import forward_density, invert_concentrations, optical_density_delta
from hemopipe.cli import main, run_pipeline
from hemopipe.core import ExtinctionTable, Label, Led, SessionPlan
from hemopipe.dsp import FourChannelSeries, lowpass, segment
from hemopipe.forest import ForestParams, cross_validate
from hemopipe.pipeline import process, simulate_subject
from hemopipe.simulator import DriftConfig, SimConfig, emit_columns, emit_frames, simulate_hemo
from hemopipe.wire import FRAME_SIZE, decode_stream, encode_stream

NIR_BASELINE = 20000.0
ZERO_TARGETS = {lab: (0.0, 0.0) for lab in Label}

_capsys = None


@pytest.fixture(autouse=True)
def _grab_capsys(capsys):
    global _capsys
    _capsys = capsys
    yield
    _capsys = None


def verdict(n: int, ok: bool, detail: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    if _capsys is not None:
        with _capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    assert ok, line


def test_criterion_1_beer_lambert_round_trip():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst, done = 0.0, 0
    while done < 10_000:
        eps = rng.uniform(0.0, 3.0, 4)
        table = ExtinctionTable(*eps, path_length_cm=rng.uniform(0.1, 3.0))
        if abs(table.determinant) <= 1e-6:
            continue
        c = rng.uniform(-0.1, 0.1, 2)
        d1, d2 = forward_density(c[0], c[1], table)
        back = np.array(invert_concentrations(d1, d2, table), dtype=float)
        worst = max(worst, float(np.max(np.abs(back - c)) / np.max(np.abs(c))))
        done += 1
    elapsed = time.perf_counter() - start
    verdict(1, worst <= 1e-9 and elapsed < 1.0,
            f"max relative error {worst:.2e} (<= 1e-9) over {done} pairs in {elapsed:.2f} s (< 1 s)")


def test_criterion_2_optical_density_oracle():
    rng = np.random.default_rng(2)
    mpmath.mp.dps = 50
    base = 10 ** rng.uniform(0, 5, 1000)
    cur = 10 ** rng.uniform(0, 5, 1000)
    ours = optical_density_delta(base, cur)
    oracle = np.array([float(mpmath.log10(mpmath.mpf(b) / mpmath.mpf(t))) for b, t in zip(base, cur)])
    err = float(np.max(np.abs(ours - oracle)))
    same = float(np.max(np.abs(optical_density_delta(base, base))))
    verdict(2, err <= 1e-12 and same <= 1e-15,
            f"max |dD - oracle| {err:.2e} (<= 1e-12); max |dD(i,i)| {same:.1e} (<= 1e-15)")


def _rms_dc(cfg, drift_mode):
    truth = simulate_hemo(cfg)
    out = process(emit_columns(cfg, truth), cfg.table, drift=drift_mode, cutoff_hz=None)
    err = np.concatenate([out.series.d_chbo2 - truth.d_chbo2, out.series.d_chb - truth.d_chb])
    return float(np.sqrt(np.mean(err**2)))


def test_criterion_3_drift_correction():
    drift = DriftConfig("linear", 0.05)
    clean = _rms_dc(SimConfig(state_targets=ZERO_TARGETS, drift=drift), "on")
    sigma = 0.005 * NIR_BASELINE
    ratios = []
    for seed in range(100):
        noisy = SimConfig(state_targets=ZERO_TARGETS, drift=drift, noise_sigma=sigma, seed=seed)
        floor = _rms_dc(SimConfig(state_targets=ZERO_TARGETS, noise_sigma=sigma, seed=seed), "off")
        ratios.append(_rms_dc(noisy, "on") / floor)
    frac = float(np.mean(np.array(ratios) <= 3.0))
    verdict(3, clean <= 1e-3 and frac >= 0.95,
            f"noise-free RMS {clean:.2e} mM (<= 1e-3); {frac:.0%} of 100 seeds within 3x noise floor "
            f"(>= 95%), worst ratio {max(ratios):.2f}")


def test_criterion_4_filter_contract():
    fs = 7.0
    t = np.arange(700) / fs
    dc_err = float(np.max(np.abs(lowpass(np.full(700, 1.0)) - 1.0)))
    worst_stop, worst_pass = 0.0, 1.0
    for phase in np.linspace(0, 2 * np.pi, 13):
        hi = np.sin(2 * np.pi * 1.0 * t + phase)
        lo = np.sin(2 * np.pi * 0.01 * t + phase)
        rms = lambda v: np.sqrt(np.mean(v**2))  # noqa: E731
        worst_stop = max(worst_stop, rms(lowpass(hi)) / rms(hi))
        worst_pass = min(worst_pass, rms(lowpass(lo)) / rms(lo))
    k = np.arange(301)
    pulse = np.exp(-0.5 * ((k - 150) / 20.0) ** 2)
    y = lowpass(pulse)
    asym = float(np.max(np.abs(y - y[::-1])))
    peak_shift = abs(int(np.argmax(y)) - 150)
    atten_db = -20 * np.log10(worst_stop)
    ok = dc_err <= 1e-6 and atten_db >= 40 and worst_pass >= 0.99 and asym <= 1e-9 and peak_shift <= 1
    verdict(4, ok, f"DC error {dc_err:.1e}; 1 Hz attenuation {atten_db:.1f} dB (>= 40); "
                   f"0.01 Hz gain {worst_pass:.4f} (>= 0.99); pulse asymmetry {asym:.1e}, peak shift {peak_shift}")


def _brute_force_windows(n, size=70, step=35):
    return [s for s in range(n) if s % step == 0 and s + size <= n]


def test_criterion_5_windowing():
    def count(n):
        tt = np.arange(n) / 7.0
        ws = segment(FourChannelSeries(tt, tt, tt, tt, tt), SessionPlan.default())
        return [w.start_index for w in ws]

    a, b = count(140), count(6720)
    ok = len(a) == 3 and a == _brute_force_windows(140) and b == _brute_force_windows(6720) \
        and len(b) == (6720 - 70) // 35 + 1 == 191
    verdict(5, ok, f"N=140 -> {len(a)} windows (3); N=6720 -> {len(b)} windows (191), starts match enumeration")


def test_criterion_6_end_to_end_classification():
    cfg = SimConfig(noise_sigma=0.01 * NIR_BASELINE, drift=DriftConfig("linear", 0.05), seed=2024)
    start = time.perf_counter()
    report, _ = run_pipeline(cfg, 12, ForestParams(), k=5)
    elapsed = time.perf_counter() - start
    acc, blocked = report["accuracy"], report["blocked_accuracy"]
    verdict(6, acc is not None and acc >= 0.95 and elapsed < 120,
            f"stratified CV accuracy {acc:.4f} (>= 0.95), blocked {blocked:.4f} (reported only), "
            f"{elapsed:.1f} s (< 120 s)")


def test_criterion_7_chance_level():
    dataset = simulate_subject(SimConfig(noise_sigma=0.01 * NIR_BASELINE, drift=DriftConfig("linear", 0.05),
                                         seed=7), "S00")
    accs = []
    for seed in range(20):
        perm = np.random.default_rng(seed).permutation(len(dataset))
        shuffled = [type(fv)(fv.values, dataset[j].label, fv.subject_id, fv.window_start_t, fv.names)
                    for fv, j in zip(dataset, perm)]
        accs.append(cross_validate(shuffled, 5, "stratified", ForestParams(), seed).mean_accuracy)
    lo, hi = min(accs), max(accs)
    verdict(7, 0.23 <= lo and hi <= 0.43,
            f"shuffled-label CV accuracy range [{lo:.3f}, {hi:.3f}] within [0.23, 0.43] over 20 seeds")


def test_criterion_8_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("HEMOPIPE_SEED", raising=False)
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        code = main(["pipeline", "--seed", "42", "--report", str(d / "report.json")])
        assert code == 0
        outputs.append(((d / "report.json").read_bytes(), (d / "model.json").read_bytes()))
    same_report = outputs[0][0] == outputs[1][0]
    same_model = outputs[0][1] == outputs[1][1]
    verdict(8, same_report and same_model,
            f"report.json identical: {same_report}; model.json identical: {same_model}")


def test_criterion_9_wire_fuzz():
    rng = np.random.default_rng(9)
    cfg = SimConfig(plan=SessionPlan(((Label.REST, 1250.0),)), noise_sigma=100.0, seed=9)
    frames = emit_frames(cfg)
    assert len(frames) == 10_000
    raw = encode_stream(frames)
    packets = [bytearray(raw[i:i + FRAME_SIZE]) for i in range(0, len(raw), FRAME_SIZE)]
    dropped = set(rng.choice(len(packets), size=60, replace=False).tolist())
    kept = [i for i in range(len(packets)) if i not in dropped]
    clean = {i: bytes(packets[i]) for i in kept}
    for i in rng.choice(kept, size=40, replace=False):
        packets[i][int(rng.integers(0, FRAME_SIZE))] ^= int(rng.integers(1, 256))
    stream = b"".join(bytes(packets[i]) for i in kept)
    decoded, report = decode_stream(stream)

    intact = [i for i in kept if bytes(packets[i]) == clean[i]]
    expected_gaps = [(a, b - a - 1) for a, b in zip(intact, intact[1:]) if b - a > 1]
    got_gaps = [(g.after, g.missing) for g in report.gaps]
    expected_frames = [frames[i] for i in intact]
    wrong = sum(1 for f, e in zip(decoded, expected_frames)
                if (f.t, f.led, round(f.ir1) if f.led == Led.NIR else round(f.y)) !=
                (round(e.t * 1000) / 1000, e.led, round(e.ir1) if e.led == Led.NIR else round(e.y)))
    ok = len(decoded) == len(intact) and wrong == 0 and got_gaps == expected_gaps
    verdict(9, ok, f"{len(decoded)}/{len(intact)} intact frames recovered, {wrong} corrupt frames emitted, "
                   f"gaps reported {len(got_gaps)}/{len(expected_gaps)} exactly")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
