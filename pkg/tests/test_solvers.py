"""Step/sample schedules and the three stochastic approximation schemes."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import deterministic_affine
from cvarvi import (
    AffineUniformModel,
    Box,
    DivergenceError,
    InvalidInputError,
    PenaltyRamp,
    PolyhedralSet,
    SampleSchedule,
    SolverConfig,
    ViProblem,
    benchmark_instance,
    make_schedule,
    run,
    run_multiplier,
    run_penalty,
    run_projected,
    to_vi_problem,
)
from cvarvi.harness import BENCHMARK_H0


@pytest.fixture(scope="module")
def bench():
    net, alpha, ref = benchmark_instance()
    return to_vi_problem(net, alpha), ref


def near_constant(gamma0, shift=1e12):
    """gamma_k ~ gamma0 over any practical horizon."""
    return make_schedule("shifted_scaled", gamma0 * (1 + shift), shift)


def zero_problem(set_):
    n = set_.n
    model = AffineUniformModel(np.zeros((n, n)), np.zeros(n), np.zeros(n), -np.ones(n, dtype=int))
    return ViProblem(model, 0.2, set_)


class TestSchedules:
    def test_harmonic(self):
        s = make_schedule("harmonic", 1, 0, 1)
        assert s.gamma(1) == 1.0
        assert s.gamma(2) == 0.5

    def test_shifted(self):
        assert make_schedule("shifted_scaled", 1000, 1e7, 1).gamma(1) == pytest.approx(1e-4, rel=1e-6)

    def test_start_index(self):
        assert make_schedule("harmonic", 1, 0, 5).gamma(1) == pytest.approx(0.2)

    @pytest.mark.parametrize("kwargs", [dict(scale=0.0), dict(scale=-1.0), dict(shift=-1.0),
                                        dict(start_index=0), dict(kind="cosine")])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            make_schedule(**kwargs)

    @given(st.floats(0.1, 1e3), st.floats(0.0, 1e7))
    def test_step_sums(self, scale, shift):
        s = make_schedule("shifted_scaled", scale, shift)
        k = np.arange(1, 200_001)
        g = s.scale / (k + s.shift)
        assert g[0] == pytest.approx(s.gamma(1))
        # squares are summable: sum_k 1/(k+c)^2 <= 1/(1+c)^2 + 1/(1+c)
        assert (g ** 2).sum() <= scale ** 2 * (1 / (1 + shift) ** 2 + 1 / (1 + shift))
        # the series itself grows like log K without bound
        head, tail = g[:100_000].sum(), g[100_000:].sum()
        assert tail == pytest.approx(scale * np.log((200_000 + shift) / (100_000 + shift)), rel=1e-3)
        assert tail > 0 and head > 0

    def test_constant_samples(self):
        assert SampleSchedule("constant", 100).size(1) == SampleSchedule("constant", 100).size(10**6) == 100

    def test_growing_samples(self):
        s = SampleSchedule("growing", 10)
        sizes = [s.size(k) for k in range(1, 2000)]
        assert sizes[0] == 10
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))
        assert s.size(10**6) == 10_000

    def test_growing_callable(self):
        assert SampleSchedule("growing", 1, growth=lambda k: 3 * k).size(4) == 12

    def test_invalid_samples(self):
        with pytest.raises(InvalidInputError):
            SampleSchedule("constant", 0)

    def test_penalty_ramp(self):
        ramp = PenaltyRamp(10.0, 110.0, 100)
        assert ramp.c(1) == 10.0
        assert ramp.c(51) == pytest.approx(60.0)
        assert ramp.c(101) == ramp.c(10**6) == 110.0


class TestConfig:
    def test_penalty_needs_constant(self):
        with pytest.raises(InvalidInputError):
            SolverConfig("penalty", np.zeros(2))

    def test_negative_lambda0(self):
        with pytest.raises(InvalidInputError):
            SolverConfig("multiplier", np.zeros(2), lambda0=[-1.0, 0.0])

    def test_iterations(self):
        with pytest.raises(InvalidInputError):
            SolverConfig("projected", np.zeros(2), iterations=0)

    def test_algorithm_mismatch(self, bench):
        cfg = SolverConfig("projected", BENCHMARK_H0, iterations=1)
        with pytest.raises(InvalidInputError):
            run_penalty(bench[0], cfg)

    def test_h0_dimension(self, bench):
        with pytest.raises(InvalidInputError):
            run(bench[0], SolverConfig("projected", np.zeros(3), iterations=1))

    def test_multiplier_box_length(self, bench):
        cfg = SolverConfig("multiplier", BENCHMARK_H0, iterations=1, multiplier_safeguard=Box.uniform(3, 0, 1))
        with pytest.raises(InvalidInputError):
            run(bench[0], cfg)


class TestFixedPoints:
    @pytest.mark.parametrize("algorithm", ["projected", "penalty", "multiplier"])
    def test_zero_map(self, algorithm):
        set_ = PolyhedralSet.product_of_simplices([[0, 1, 2]], [3.0])
        h0 = np.array([0.5, 1.0, 1.5])
        cfg = SolverConfig(algorithm, h0, steps=make_schedule(), iterations=200, penalty_c=50.0,
                           samples=SampleSchedule("constant", 5))
        trace = run(zero_problem(set_), cfg)
        for rec in trace.records:
            np.testing.assert_array_equal(rec.h, h0)

    def test_kkt_start_is_stationary(self):
        # one OD, two paths, F = (h1, h2 + 100), demand 10: path 2 unused,
        # lam = (0, 90), mu = -10
        set_ = PolyhedralSet.product_of_simplices([[0, 1]], [10.0])
        prob = deterministic_affine(np.eye(2), [0.0, -100.0], set_)
        cfg = SolverConfig("multiplier", [10.0, 0.0], steps=make_schedule(), iterations=100,
                           lambda0=[0.0, 90.0], mu0=[-10.0], samples=SampleSchedule("constant", 1))
        for rec in run_multiplier(prob, cfg).records:
            np.testing.assert_array_equal(rec.h, [10.0, 0.0])
            np.testing.assert_array_equal(rec.lam, [0.0, 90.0])
            np.testing.assert_array_equal(rec.mu, [-10.0])

    def test_inactive_multipliers_stay_zero(self, bench):
        prob, ref = bench
        set_ = prob.set
        model = deterministic_affine(np.eye(5), ref, set_)
        cfg = SolverConfig("multiplier", BENCHMARK_H0, steps=near_constant(0.01), iterations=500,
                           samples=SampleSchedule("constant", 1))
        trace = run_multiplier(model, cfg)
        for rec in trace.records:
            assert np.all(set_.q(rec.h) < 0)
            assert np.all(rec.lam == 0.0)


class TestContraction:
    def test_deterministic_identity_map(self, big_box):
        h_star = np.array([1.0, -2.0, 3.0])
        prob = deterministic_affine(np.eye(3), h_star, big_box(3))
        cfg = SolverConfig("projected", [10.0, 10.0, 10.0], steps=make_schedule(), iterations=50,
                           samples=SampleSchedule("constant", 1))
        errs = [np.linalg.norm([10, 10, 10] - h_star)]
        errs += [r.error_to_reference for r in run_projected(prob, cfg, reference=h_star).records]
        for prev, cur in zip(errs, errs[1:]):
            assert cur < prev or cur == 0.0

    def test_strong_monotone_decrease(self, bench):
        prob, ref = bench
        net, _, _ = benchmark_instance()
        A = net.model.affine[0]
        c_F = float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
        gamma0 = c_F / np.linalg.norm(A, 2) ** 2
        det = deterministic_affine(A, ref, prob.set)
        cfg = SolverConfig("projected", BENCHMARK_H0, steps=near_constant(gamma0), iterations=400,
                           samples=SampleSchedule("constant", 1))
        errs = [r.error_to_reference for r in run_projected(det, cfg, reference=ref).records]
        assert all(b <= a for a, b in zip(errs, errs[1:]))
        assert errs[-1] <= 1e-6


class TestTraceContracts:
    def test_determinism(self, bench):
        prob, ref = bench
        cfg = SolverConfig("multiplier", BENCHMARK_H0, steps=make_schedule("shifted_scaled", 1000, 2e5),
                           iterations=300, seed=17, samples=SampleSchedule("constant", 10))
        a, b = run(prob, cfg, ref), run(prob, cfg, ref)
        assert len(a.records) == len(b.records)
        for ra, rb in zip(a.records, b.records):
            np.testing.assert_array_equal(ra.h, rb.h)
            np.testing.assert_array_equal(ra.lam, rb.lam)
            np.testing.assert_array_equal(ra.mu, rb.mu)
            assert ra.error_to_reference == rb.error_to_reference

    def test_seed_changes_path(self, bench):
        prob, _ = bench
        base = dict(steps=make_schedule(), iterations=20, samples=SampleSchedule("constant", 10))
        a = run(prob, SolverConfig("projected", BENCHMARK_H0, seed=1, **base))
        b = run(prob, SolverConfig("projected", BENCHMARK_H0, seed=2, **base))
        assert not np.array_equal(a.final.h, b.final.h)

    def test_projected_feasible(self, bench):
        prob, _ = bench
        cfg = SolverConfig("projected", np.zeros(5), steps=make_schedule(), iterations=2000,
                           samples=SampleSchedule("constant", 10))
        for rec in run_projected(prob, cfg).records:
            assert prob.set.violation(rec.h) <= 1e-8

    def test_lambda_nonnegative(self, bench):
        prob, _ = bench
        cfg = SolverConfig("multiplier", np.array([300.0, -40.0, 0.0, 200.0, -30.0]),
                           steps=make_schedule("shifted_scaled", 1000, 2e5), iterations=3000,
                           samples=SampleSchedule("constant", 10))
        trace = run_multiplier(prob, cfg)
        assert all(np.all(r.lam >= 0.0) for r in trace.records)
        assert any(np.any(r.lam > 0.0) for r in trace.records)

    @pytest.mark.parametrize("algorithm", ["projected", "penalty", "multiplier"])
    def test_noise_free_any_sample_size(self, bench, algorithm):
        prob, ref = bench
        net, _, _ = benchmark_instance()
        det = deterministic_affine(net.model.affine[0], ref, prob.set)
        traces = []
        for N in (1, 50):
            cfg = SolverConfig(algorithm, BENCHMARK_H0, steps=make_schedule("shifted_scaled", 1.0, 1000.0),
                               iterations=200, penalty_c=100.0, samples=SampleSchedule("constant", N), seed=N)
            traces.append(run(det, cfg))
        for a, b in zip(*[t.records for t in traces]):
            np.testing.assert_array_equal(a.h, b.h)

    def test_downsampling(self, bench):
        prob, _ = bench
        cfg = SolverConfig("projected", BENCHMARK_H0, iterations=25, downsample_stride=10,
                           samples=SampleSchedule("constant", 2))
        assert [r.k for r in run(prob, cfg).records] == [10, 20, 25]

    def test_record_fields(self, bench):
        prob, ref = bench
        cfg = SolverConfig("penalty", BENCHMARK_H0, steps=make_schedule("shifted_scaled", 1000, 1e7),
                           iterations=3, penalty_c=30000.0, samples=SampleSchedule("constant", 7))
        rec = run(prob, cfg, ref).records[-1]
        assert rec.k == 3 and rec.N == 7
        assert rec.gamma == pytest.approx(1000 / (3 + 1e7))
        assert rec.lam is None and rec.mu is None
        assert rec.F_hat_norm > 0
        assert rec.error_to_reference == pytest.approx(np.linalg.norm(rec.h - ref))


class TestPenalty:
    def test_safeguard_box(self, bench):
        prob, _ = bench
        box = Box.uniform(5, -520.0, 520.0)
        cfg = SolverConfig("penalty", BENCHMARK_H0, steps=make_schedule("shifted_scaled", 1000, 1e7),
                           iterations=300, penalty_c=30000.0, safeguard=box,
                           samples=SampleSchedule("constant", 10))
        for rec in run_penalty(prob, cfg).records:
            assert np.all(rec.h >= -520.0) and np.all(rec.h <= 520.0)

    def test_larger_constant_closer_to_set(self):
        # F(h) = h - (2, 2) + noise pushes the iterate out of the unit simplex
        set_ = PolyhedralSet.product_of_simplices([[0, 1]], [1.0])
        model = AffineUniformModel(np.eye(2), [-2.0, -2.0], [1.0, 1.0], [0, 1])
        prob = ViProblem(model, 0.2, set_)

        def mean_distance(c):
            d = []
            for seed in range(20):
                cfg = SolverConfig("penalty", [0.5, 0.5], steps=near_constant(0.02), iterations=2000,
                                   penalty_c=c, seed=seed, samples=SampleSchedule("constant", 10))
                h = run_penalty(prob, cfg).final.h
                d.append(np.linalg.norm(h - set_.project(h)))
            return np.mean(d)

        d10, d20 = mean_distance(10.0), mean_distance(20.0)
        assert d20 <= d10
        assert d20 > 0

    def test_benchmark_with_stable_step(self, bench):
        # c = 30000 with scale 500 keeps gamma * c near 1.5, inside the stable range
        prob, ref = bench
        cfg = SolverConfig("penalty", BENCHMARK_H0, steps=make_schedule("shifted_scaled", 500, 1e7),
                           iterations=20_000, penalty_c=30000.0, seed=1,
                           safeguard=Box.uniform(5, -520.0, 520.0), samples=SampleSchedule("constant", 100))
        h = run_penalty(prob, cfg, ref).final.h
        assert np.linalg.norm(h - ref) <= 5.0
        assert np.linalg.norm(h - prob.set.project(h)) <= 1.0

    def test_ramp_reaches_target(self, bench):
        prob, ref = bench
        cfg = SolverConfig("penalty", BENCHMARK_H0, steps=make_schedule("shifted_scaled", 1000, 1e7),
                           iterations=50, penalty_ramp=PenaltyRamp(100.0, 30000.0, 40),
                           samples=SampleSchedule("constant", 10))
        assert cfg.penalty_at(1) == 100.0 and cfg.penalty_at(50) == 30000.0
        run_penalty(prob, cfg)


class TestDivergence:
    def test_error_carries_trace(self, bench):
        prob, _ = bench
        cfg = SolverConfig("multiplier", BENCHMARK_H0, steps=make_schedule("harmonic", 1e6),
                           iterations=1000, samples=SampleSchedule("constant", 10))
        with pytest.raises(DivergenceError) as info:
            run_multiplier(prob, cfg)
        trace = info.value.trace
        assert trace is not None and trace.records
        assert np.linalg.norm(trace.final.h) > 1e9 or not np.all(np.isfinite(trace.final.h))
