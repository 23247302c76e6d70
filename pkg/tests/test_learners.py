import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from asums.asum_oracle import ASumSpec, asum_exact_pmf, random_spec
from asums.dist_core import (
    IntDist,
    ResourceError,
    binomial,
    convolve,
    empirical,
    mod_reduce,
    pairs,
    scale,
    shift,
    tv_distance,
)
from asums.kernel import KernelHypothesis, SmootherSpec
from asums.learners import (
    BudgetError,
    Hypothesis,
    LearnerConfig,
    RecordingSource,
    SampleSource,
    Trace,
    _central_binomial_window,
    audit_tv,
    bezout_decompose,
    general_grid_sizes,
    gcd_of_differences,
    geometric_grid,
    hypothesis_mod,
    learn_k3,
    learn_sparse,
    learn_unknown_support_enum,
    learn_unknown_support_k2,
    limit_theorem_tv,
    local_shift_bound,
    matched_signed_pbd,
    modular_probes,
    q_values,
    reduction_n_star,
    reduction_shift_tv,
    sparse_sample_size,
    spread_bins,
    support_guesses,
)
from oracles import as_dict, tv

FAST = dict(eps=0.2, kernel_samples=2000, probe_repeats=32)


def source(d, seed=0, max_draws=None):
    return SampleSource.from_dist(d, np.random.default_rng(seed), max_draws)


# -- building blocks ------------------------------------------------------------------


def test_bezout_examples():
    assert bezout_decompose(0, 3, 5) == (0, 0)
    assert bezout_decompose(1, 3, 5) == (2, -1)
    assert bezout_decompose(8, 3, 5) == (1, 1)
    with pytest.raises(ValueError):
        bezout_decompose(1, 4, 6)
    with pytest.raises(ValueError):
        bezout_decompose(15, 3, 5)


@given(st.integers(1, 60), st.integers(1, 60), st.data())
@settings(max_examples=80, deadline=None)
def test_bezout_property(r1, r2, data):
    if math.gcd(r1, r2) != 1:
        return
    u = data.draw(st.integers(0, r1 * r2 - 1))
    v1, v2 = bezout_decompose(u, r1, r2)
    assert v1 * r1 + v2 * r2 == u
    assert abs(v1) < r2
    assert abs(v2) < r1


def test_modular_probes():
    # 3^{-1} mod 7 = 5; 2 * 5 = 10 = 3 mod 7 -> |3| ; 1 * 5 = 5 -> |-2|
    assert modular_probes(np.array([2, 1, 0]), 7, 3).tolist() == [3, 2, 0]
    assert modular_probes(np.array([2]), 6, 3).size == 0


def test_spread_bins_and_grids():
    assert spread_bins([], 4) == []
    assert spread_bins([0, 0], 4) == []
    bins = spread_bins([100] * 50 + [1, 10**6], 4)
    assert bins == [2.0 ** (e / 2) for e in (13,)]
    assert len(spread_bins(np.geomspace(1, 1e6, 200), 3)) == 3
    grid, step = geometric_grid(10.0, 1.1, 10, 5)
    assert step == 8 and len(grid) == 3
    assert q_values([0, 1, 5]) == [1, 4, 5]
    assert q_values([0, 2, 4]) == [2, 4]


def test_gcd_of_differences():
    assert gcd_of_differences(np.array([3, 3, 3])) == 0
    assert gcd_of_differences(np.array([3, 10, 17, 38])) == 7


def test_sample_source_counts_and_caps():
    src = source(IntDist.point(4), max_draws=10)
    assert src(3).tolist() == [4, 4, 4]
    assert src(0).size == 0
    assert (src.draws, src.calls) == (3, 2)
    with pytest.raises(BudgetError):
        src(8)
    assert isinstance(BudgetError("x"), ResourceError)
    rep = SampleSource.from_array([1, 2, 3])
    assert rep(2).tolist() == [1, 2]
    with pytest.raises(BudgetError):
        rep(2)
    rec = RecordingSource(source(binomial(10, 0.5)))
    a, b = rec(5), rec(7)
    assert np.array_equal(rec.data(), np.concatenate([a, b])) and rec.draws == 12


def test_sparse_learner():
    d = IntDist.from_dict({0: 0.2, 3: 0.5, 9: 0.3})
    src = source(d)
    h = learn_sparse(src, 3, 0.1, 0.1)
    assert src.draws == sparse_sample_size(3, 0.1, 0.1)
    assert tv_distance(h, d) <= 0.1
    with pytest.raises(ValueError):
        learn_sparse(src, 0, 0.1, 0.1)


def test_hypothesis_json_round_trip():
    kh = KernelHypothesis(np.array([0, 5, 9]), SmootherSpec((1, 4), (2, 1)))
    for h in (Hypothesis.from_kernel(kh), Hypothesis.from_law(binomial(9, 0.3), "empirical"),
              Hypothesis.moment_fit("translated-poisson", 40.0, 12.0, 3, 1)):
        back = Hypothesis.from_json_obj(json.loads(h.to_json()))
        assert back.family == h.family and back.params == h.params
        assert tv_distance(back.law(), h.law()) == 0
    with pytest.raises(ValueError):
        Hypothesis("nope", law=IntDist.point(0))
    with pytest.raises(ValueError):
        Hypothesis.moment_fit("kernel", 0.0, 1.0)


def test_audit_tv_matches_full_tv():
    rng = np.random.default_rng(0)
    for _ in range(30):
        truth = IntDist.from_weights(int(rng.integers(-5, 5)), rng.random(int(rng.integers(1, 20))))
        kh = KernelHypothesis(rng.integers(-10, 10, 6), SmootherSpec((1, 3), tuple(rng.integers(0, 3, 2))))
        h = Hypothesis.from_kernel(kh)
        assert audit_tv(truth, h) == pytest.approx(tv_distance(truth, h.law()), abs=1e-12)


def test_config_validation():
    assert LearnerConfig().n_kernel == 8000
    assert LearnerConfig(heaviness=5.0).heaviness_for(3) == 5.0
    with pytest.raises(ValueError):
        LearnerConfig(eps=0.7)
    with pytest.raises(ValueError):
        LearnerConfig(max_guesses=0)
    with pytest.raises(ValueError):
        LearnerConfig.from_json_obj({"epsilon": 0.1})
    cfg = LearnerConfig(eps=0.2, seed=3)
    assert LearnerConfig.from_json_obj(cfg.to_json_obj()) == cfg


def test_general_grid_sizes_grow_with_log_of_largest_weight():
    sizes = [general_grid_sizes([0, 1, 7, a], 0.15)["J_q"] for a in (10**2, 10**4, 10**6)]
    assert sizes == [8, 12, 15]
    assert general_grid_sizes([0, 1, 7, 100], 0.15)["J"] == 6


# -- end-to-end learners at small scale --------------------------------------------


def test_k3_learner_small_run_is_accurate_and_deterministic():
    spec = random_spec(3, 600, 13, rng=np.random.default_rng(2), support=(0, 1, 13), templates=3)
    truth = asum_exact_pmf(spec)
    outs = []
    for _ in range(2):
        cfg = LearnerConfig(**FAST, seed=1)
        src, trace = source(truth, seed=5), Trace()
        h = learn_k3(src, spec.n, spec.support, cfg, np.random.default_rng(1), trace)
        outs.append((h.to_json(), src.draws))
        assert audit_tv(truth, h) <= 0.4
        assert trace.info["q_values"] == [1, 12, 13]
    assert outs[0] == outs[1]


def test_k3_equally_spaced_support():
    spec = random_spec(3, 300, 8, rng=np.random.default_rng(3), support=(0, 4, 8))
    truth = asum_exact_pmf(spec)
    h = learn_k3(source(truth), spec.n, spec.support, LearnerConfig(**FAST), np.random.default_rng(0))
    assert audit_tv(truth, h) <= 0.4
    with pytest.raises(ValueError):
        learn_k3(source(truth), spec.n, (0, 8, 4), LearnerConfig(**FAST))


def test_unknown_support_k2_recovers_the_gap():
    spec = ASumSpec((0, 11), np.column_stack([np.full(500, 0.5), np.full(500, 0.5)]))
    truth = asum_exact_pmf(spec)
    trace = Trace()
    h = learn_unknown_support_k2(source(truth), 50, cfg=LearnerConfig(**FAST), trace=trace)
    assert trace.info["gcd"] == 11
    assert audit_tv(truth, h) <= 0.2


def test_unknown_support_enum_counts_and_shares_draws():
    assert len(support_guesses(3, 2)) == 6
    assert support_guesses(1, 3) == []
    truth = asum_exact_pmf(ASumSpec((0, 2), np.full((40, 2), 0.5)))
    trace = Trace()
    cfg = LearnerConfig(**FAST)
    src = source(truth)
    h = learn_unknown_support_enum(src, 3, 2, cfg=cfg, trace=trace)
    assert trace.info["supports"] == 6
    assert src.draws == trace.info["shared_draws"] + trace.info["extra_draws"]
    assert audit_tv(truth, h) <= 0.4
    with pytest.raises(ResourceError):
        learn_unknown_support_enum(src, 200, 3, cfg=cfg, max_supports=100)


# -- reduction modulo the largest weight ---------------------------------------------


def brute_reduction_tv(s, a, n_star):
    b = binomial(n_star, 0.5)
    return tv_distance(convolve(mod_reduce(s, a), scale(b, a)), convolve(s, scale(b, a)))


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=25), st.integers(2, 9), st.integers(1, 30))
@settings(max_examples=40, deadline=None)
def test_reduction_shift_tv_matches_brute_force(w, a, half_n):
    s = IntDist.from_weights(0, w)
    assert reduction_shift_tv(s, a, 2 * half_n) == pytest.approx(brute_reduction_tv(s, a, 2 * half_n), abs=1e-12)


def test_central_window_far_from_scipy_range():
    n = 4 * 10**6
    got = _central_binomial_window(n, -50, 50)
    want = stats.binom.pmf(np.arange(n // 2 - 50, n // 2 + 51), n, 0.5)
    assert np.max(np.abs(got / want - 1)) <= 1e-9


def test_reduction_n_star_is_even_and_bounds_tv():
    n = reduction_n_star(11, 20, 1000, 0.05)
    assert n % 2 == 0 and n >= (11 * 20 * 1000 / 0.05) ** 2
    with pytest.raises(ValueError):
        reduction_shift_tv(IntDist.point(-1), 3, 4)
    with pytest.raises(ValueError):
        reduction_shift_tv(IntDist.point(1), 3, 5)


def test_hypothesis_mod_routes():
    kh = KernelHypothesis(np.array([0, 4, 13, 22]), SmootherSpec((2, 5), (3, 1)))
    h = Hypothesis.from_kernel(kh)
    for m in (2, 5, 7):
        assert tv_distance(hypothesis_mod(h, m).law(), mod_reduce(h.law(), m)) <= 1e-12
    g = Hypothesis.moment_fit("discretized-gaussian", 0.0, 400.0)
    assert tv_distance(hypothesis_mod(g, 3).law(), mod_reduce(g.law(), 3)) <= 1e-12
    with pytest.raises(ValueError):
        hypothesis_mod(h, 1)


# -- limit theorem ------------------------------------------------------------------------


def test_matched_signed_pbd():
    d = matched_signed_pbd(10.0, 5.0)
    assert d.mean() == pytest.approx(10.0) and d.variance() == pytest.approx(5.0)
    with pytest.raises(ValueError):
        matched_signed_pbd(0.0, 0.1)


def test_limit_theorem_small_brute_force():
    # 2 T1 + 3 T2 with T1, T2 ~ Bin(8, 1/2) against Bin(4 * 13 * 2, 1/2) shifted
    t = convolve(scale(binomial(8, 0.5), 2), scale(binomial(8, 0.5), 3))
    ref = as_dict(t)
    mpbd = as_dict(shift(binomial(104, 0.5), 20 - 52))
    assert limit_theorem_tv(2, 3, 2.0, 2.0) == pytest.approx(tv(ref, mpbd), abs=1e-12)


def test_local_shift_bound_dominates_exact_shift():
    # Z = r1 A + r2 B with A ~ Bin(4a, 1/2), B ~ Bin(4b, 1/2)
    for r1, r2, v, d in ((2, 3, 30, 1), (3, 5, 50, 2), (2, 7, 80, 3)):
        z = convolve(scale(binomial(4 * v, 0.5), r1), scale(binomial(4 * v, 0.5), r2))
        alpha = beta = tv_distance(binomial(4 * v, 0.5), shift(binomial(4 * v, 0.5), 1))
        assert tv_distance(z, shift(z, d)) <= local_shift_bound(r1, r2, alpha, beta, d)


def test_empirical_of_learner_output_is_a_law():
    h = Hypothesis.from_law(empirical([1, 1, 2]), "empirical")
    assert h.pmf([1, 2, 3]).tolist() == pytest.approx([2 / 3, 1 / 3, 0])


# -- misuse ---------------------------------------------------------------------


def assert_valid(h):
    _, probs = pairs(h.prepare().law())
    assert np.all(probs >= 0) and float(probs.sum()) == pytest.approx(1.0, abs=1e-9)
    assert len(h.sample(np.random.default_rng(0), 5)) == 5


def test_learners_return_valid_hypotheses_off_model():
    # targets outside each learner's class: no crash, and a proper law comes back
    cfg = LearnerConfig(**FAST)
    off = IntDist.from_dict({0: 0.3, 5: 0.3, 11: 0.4})
    assert_valid(learn_k3(source(off), 40, (0, 1, 6), cfg, np.random.default_rng(0)))
    wild = convolve(binomial(100, 0.3), scale(binomial(50, 0.5), 7))
    assert_valid(learn_unknown_support_k2(source(wild), 9, cfg=cfg, rng=np.random.default_rng(0)))


def test_learner_output_is_byte_identical_across_runs():
    spec = random_spec(3, 60, 20, rng=np.random.default_rng(2), support=(0, 1, 20))
    truth = asum_exact_pmf(spec)
    out = [learn_k3(source(truth, 5), spec.n, spec.support, LearnerConfig(**FAST), np.random.default_rng(3)).to_json()
           for _ in range(2)]
    assert out[0] == out[1]
