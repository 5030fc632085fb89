import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage, stats

from carstream import evaluation as ev
from carstream.detectors import FHDDM, StabilizationWindow
from carstream.ensembles import EnsembleConfig, EnsembleModel
from carstream.exceptions import InsufficientDataError, ValidationError
from carstream.scheduler import SchedulerConfig, SchedulerState
from carstream.stream import StreamSource, SyntheticStreamSpec, generate_synthetic_stream


def sr_oracle(acc, sizes, p):
    """Exhaustive scan written straight from the definitions."""
    n = len(acc)
    t_min = 0
    for t in range(n):
        if acc[t] < acc[t_min]:
            t_min = t
    best = acc[t_min]
    for t in range(t_min, n):
        if acc[t] > best:
            best = acc[t]
    r = p * best
    t_r = None
    for t in range(t_min, n):
        if acc[t] >= r:
            t_r = t
            break
    total = 0
    for t in range(t_r + 1):
        total += sizes[t]
    return total, t_min, r, t_r


def wilcoxon_oracle(x, y):
    """Enumerate every sign assignment of the non-zero |differences|."""
    d = [a - b for a, b in zip(x, y) if a != b]
    ranks = stats.rankdata([abs(v) for v in d])
    observed = sum(r for r, v in zip(ranks, d) if v > 0)
    hits = 0
    for signs in itertools.product((0, 1), repeat=len(d)):
        if sum(r for r, s in zip(ranks, signs) if s) <= observed + 1e-9:
            hits += 1
    return observed, hits / 2 ** len(d)


class TestSampleRestoration:
    def test_worked_example(self):
        acc = [0.9, 0.5, 0.6, 0.7, 0.85, 0.9]
        sizes = [100] * 6
        want = sr_oracle(acc, sizes, 0.9)
        assert want == (500, 1, pytest.approx(0.81), 4)
        assert ev.sample_restoration(acc, sizes, 0.9) == want

    def test_constant_accuracy(self):
        sr, t_min, r, t_r = ev.sample_restoration([0.7] * 5, [30, 33, 36, 39, 42], 0.8)
        assert (sr, t_min, t_r) == (30, 0, 0)
        assert r == pytest.approx(0.56)

    def test_minimum_at_last_index(self):
        sizes = [100, 50, 25]
        sr, t_min, _, t_r = ev.sample_restoration([0.9, 0.8, 0.1], sizes, 0.9)
        assert t_min == t_r == 2 and sr == sum(sizes)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ev.sample_restoration([], [], 0.9)
        with pytest.raises(ValidationError):
            ev.sample_restoration([0.5], [10], 1.0)

    def test_oracle_equivalence_1000_segments(self):
        gen = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(gen.integers(1, 51))
            # coarse grid so that ties in the argmin/threshold are common
            acc = (gen.integers(0, 21, n) / 20).tolist()
            sizes = gen.integers(1, 1001, n).tolist()
            p = float(gen.uniform(0.01, 0.99))
            assert ev.sample_restoration(acc, sizes, p) == sr_oracle(acc, sizes, p)

    @settings(max_examples=300, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(0, 1), st.integers(1, 1000)), min_size=1, max_size=50),
        st.floats(0.01, 0.99),
        st.floats(0.01, 0.99),
    )
    def test_monotone_in_p(self, seg, p1, p2):
        acc, sizes = zip(*seg)
        lo, hi = sorted((p1, p2))
        assert ev.sample_restoration(acc, sizes, lo)[0] <= ev.sample_restoration(acc, sizes, hi)[0]


def record_with_drifts(n, drifts):
    traces, cum = [], 100
    for i in range(n):
        cum += 10
        traces.append(ev.ChunkTrace(i + 1, 10, 0.5, i in drifts, False, cum))
    return ev.RunRecord(traces, warmup_size=100)


class TestSegments:
    def test_two_detections(self):
        assert ev.segment_runs(record_with_drifts(500, {100, 300})) == [(100, 300), (300, 500)]

    def test_no_detection(self):
        assert ev.segment_runs(record_with_drifts(50, set())) == []

    def test_final_trace_detection(self):
        assert ev.segment_runs(record_with_drifts(50, {49})) == [(49, 50)]

    def test_match_segments_to_ground_truth(self):
        rec = record_with_drifts(100, {10, 12, 60})
        # detections end at samples 210, 230 and 710
        report = ev.sr_report(rec, 0.9)
        matched = ev.match_segments(report, [200, 500])
        assert matched[0].segment_start == 10
        assert matched[1].segment_start == 60
        assert ev.match_segments(report, [220, 800])[1] is None
        assert ev.match_segments(report, [])[2].segment_start == 60


class TestWilcoxon:
    def test_all_negative_n5(self):
        x = [1, 2, 3, 4, 5]
        y = [2, 4, 6, 8, 10]
        stat, p = ev.wilcoxon_one_sided_signed_rank(x, y)
        assert stat == 0.0
        assert p == wilcoxon_oracle(x, y)[1] == 1 / 32

    def test_zero_differences_dropped(self):
        with pytest.raises(InsufficientDataError):
            ev.wilcoxon_one_sided_signed_rank([1, 2, 3, 4, 5], [1, 2, 3, 4, 5])

    def test_one_sidedness(self):
        gen = np.random.default_rng(0)
        x = gen.normal(0, 1, 15)
        y = x + 1 + gen.normal(0, 0.2, 15)
        assert ev.wilcoxon_one_sided_signed_rank(x, y)[1] < 0.01
        assert ev.wilcoxon_one_sided_signed_rank(y, x)[1] > 0.99

    def test_exhaustive_extreme_patterns(self):
        for n in range(5, 11):
            x = np.zeros(n)
            y = np.arange(1, n + 1, dtype=float)
            assert ev.wilcoxon_one_sided_signed_rank(x, y)[1] == 2.0**-n
            assert ev.wilcoxon_one_sided_signed_rank(y, x)[1] == 1.0
            assert wilcoxon_oracle(x, y)[1] == 2.0**-n

    def test_enumeration_with_ties(self):
        gen = np.random.default_rng(1)
        for _ in range(60):
            n = int(gen.integers(5, 11))
            x = gen.integers(0, 5, n).astype(float)
            y = gen.integers(0, 5, n).astype(float)
            if np.count_nonzero(x != y) < 5:
                continue
            stat, p = ev.wilcoxon_one_sided_signed_rank(x, y)
            want_stat, want_p = wilcoxon_oracle(x, y)
            assert stat == pytest.approx(want_stat)
            assert p == pytest.approx(want_p, abs=1e-15)

    def test_exact_matches_scipy_without_ties(self):
        gen = np.random.default_rng(2)
        for n in (5, 12, 20, 25):
            x = gen.normal(size=n)
            y = gen.normal(size=n)
            ref = stats.wilcoxon(x, y, alternative="less", method="exact")
            stat, p = ev.wilcoxon_one_sided_signed_rank(x, y)
            assert stat == ref.statistic
            assert p == pytest.approx(ref.pvalue, rel=1e-12)

    def test_normal_approximation_matches_scipy(self):
        gen = np.random.default_rng(3)
        x = np.round(gen.normal(size=60), 1)
        y = np.round(gen.normal(0.3, 1, size=60), 1)
        ref = stats.wilcoxon(x, y, alternative="less", method="approx")
        stat, p = ev.wilcoxon_one_sided_signed_rank(x, y)
        assert stat == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


class TestGaussianSmooth:
    def test_constant(self):
        out = ev.gaussian_smooth([0.7] * 20, 1.0)
        assert np.allclose(out, 0.7, atol=1e-15)

    def test_impulse_reproduces_kernel(self):
        s = np.zeros(21)
        s[10] = 1.0
        k = ev.gaussian_kernel(1.0)
        out = ev.gaussian_smooth(s, 1.0)
        assert np.allclose(out[10 - 4 : 10 + 5], k[::-1])
        assert out.sum() == pytest.approx(1.0)

    def test_kernel_center_weight(self):
        grid = np.arange(-4, 5)
        density = np.exp(-(grid**2) / 2) / math.sqrt(2 * math.pi)
        assert density[4] == pytest.approx(0.3989, abs=1e-4)
        assert ev.gaussian_kernel(1.0)[4] == pytest.approx(density[4] / density.sum(), rel=1e-12)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.5, 7.0])
    @pytest.mark.parametrize("n", [1, 3, 10, 100])
    def test_matches_scipy_reflect(self, sigma, n):
        s = np.random.default_rng(n).random(n)
        ref = ndimage.gaussian_filter1d(s, sigma, mode="reflect", truncate=4.0)
        out = ev.gaussian_smooth(s, sigma)
        assert out.shape == s.shape
        assert np.allclose(out, ref, atol=1e-12)

    def test_preserves_mean_of_padded_series(self):
        gen = np.random.default_rng(9)
        s = np.zeros(400)
        s[150:250] = gen.random(100)
        assert ev.gaussian_smooth(s, 1.0).mean() == pytest.approx(s.mean(), abs=1e-9)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ev.gaussian_smooth([1.0], 0.0)
        with pytest.raises(ValidationError):
            ev.gaussian_smooth([], 1.0)


def components(chunk=200, c_d=30, strategy="sea", fhddm_window=1000):
    return (
        EnsembleModel(EnsembleConfig(strategy=strategy)),
        FHDDM(fhddm_window, 1e-6),
        StabilizationWindow(30, 1e-4),
        SchedulerState(SchedulerConfig(chunk, c_d, 1.1)),
    )


def separable_stream(n):
    gen = np.random.default_rng(11)
    y = gen.integers(0, 2, n)
    X = gen.normal(0, 0.3, (n, 2))
    X[:, 0] += np.where(y == 1, 3.0, -3.0)
    return StreamSource(X, y)


class TestRun:
    def test_stationary_separable_stream(self):
        rec = ev.test_then_train_run(separable_stream(2000), *components(), car_enabled=True)
        assert len(rec) == 9
        assert rec.drift_indices == []
        assert rec.accuracies.min() == 1.0

    def test_baseline_has_fixed_chunks(self):
        src = generate_synthetic_stream(SyntheticStreamSpec(n_samples=30_000, n_drifts=2, seed=2))
        rec = ev.test_then_train_run(src, *components(chunk=500), car_enabled=False)
        assert set(rec.chunk_sizes.tolist()) == {500}

    def test_car_shrinks_after_detected_drift(self):
        src = generate_synthetic_stream(SyntheticStreamSpec(n_samples=30_000, n_drifts=2, seed=2))
        rec = ev.test_then_train_run(src, *components(chunk=500), car_enabled=True)
        assert rec.drift_indices
        after = rec.drift_indices[0] + 1
        assert rec.traces[after].chunk_size == 30
        assert rec.traces[after + 1].chunk_size == 33

    def test_determinism(self):
        recs = []
        for _ in range(2):
            src = generate_synthetic_stream(SyntheticStreamSpec(n_samples=20_000, n_drifts=2, seed=4))
            recs.append(
                ev.test_then_train_run(src, *components(strategy="awe"), noise_fraction=0.1, seed=4)
            )
        assert recs[0].traces == recs[1].traces

    @pytest.mark.parametrize("car", [False, True])
    def test_trace_conservation(self, car):
        src = generate_synthetic_stream(SyntheticStreamSpec(n_samples=17_777, n_drifts=3, seed=5))
        rec = ev.test_then_train_run(src, *components(chunk=400, fhddm_window=300), car_enabled=car)
        assert rec.samples_consumed == 17_777 == src.cursor
        cum = rec.warmup_size
        for t in rec.traces:
            cum += t.chunk_size
            assert t.samples_consumed_cumulative == cum
        assert [t.chunk_index for t in rec.traces] == list(range(1, len(rec) + 1))

    def test_oversampling_run(self):
        gen = np.random.default_rng(0)
        y = (gen.random(5000) < 0.1).astype(int)
        X = gen.normal(size=(5000, 2)) + y[:, None] * 2
        rec = ev.test_then_train_run(StreamSource(X, y), *components(chunk=500), oversample=True, seed=1)
        assert len(rec) == 9

    def test_empty_stream(self):
        src = StreamSource(np.zeros((1, 1)), np.zeros(1, dtype=int))
        src.next_chunk(1)
        with pytest.raises(ValidationError):
            ev.test_then_train_run(src, *components())


class TestTraceFiles:
    def test_round_trip(self, tmp_path):
        src = generate_synthetic_stream(SyntheticStreamSpec(n_samples=12_000, n_drifts=1, seed=1))
        rec = ev.test_then_train_run(src, *components(chunk=300), run_id="demo")
        path = ev.write_trace_csv(rec, tmp_path / "demo.csv")
        header = path.read_text().splitlines()[0]
        assert header == ",".join(ev.TRACE_COLUMNS)
        back = ev.read_trace_csv(path)
        assert back.run_id == "demo"
        assert back.warmup_size == rec.warmup_size
        assert [(t.chunk_index, t.chunk_size, t.accuracy, t.drift_detected) for t in back.traces] == [
            (t.chunk_index, t.chunk_size, t.accuracy, t.drift_detected) for t in rec.traces
        ]

    def test_missing_columns(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("run_id,chunk_index\nx,1\n")
        with pytest.raises(ValidationError, match="missing trace columns"):
            ev.read_trace_csv(p)
