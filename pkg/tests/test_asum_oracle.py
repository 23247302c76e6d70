import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asums.asum_oracle import (
    ASumSpec,
    asum_exact_pmf,
    doubly_exponential_schedule,
    largeness_index,
    light_heavy_split,
    power_schedule,
    random_spec,
    reassemble,
    sample_asum,
    zero_mode_decompose,
    zero_moded_sum,
)
from asums.dist_core import IntDist, ResourceError, convolve, convolve_many, empirical, kolmogorov_distance, shift, tv_distance
from oracles import as_dict, enumerate_asum, sequential_asum, tv


@st.composite
def specs(draw, max_k=4, max_n=7, max_a=12):
    k = draw(st.integers(1, max_k))
    sup = sorted(draw(st.sets(st.integers(0, max_a), min_size=k, max_size=k)))
    n = draw(st.integers(0, max_n))
    rows = []
    for _ in range(n):
        w = np.array(draw(st.lists(st.floats(0, 1), min_size=k, max_size=k)))
        w[draw(st.integers(0, k - 1))] += 0.1
        rows.append(w / w.sum())
    return ASumSpec(tuple(sup), np.asarray(rows).reshape(n, k))


def test_exact_pmf_examples():
    d = asum_exact_pmf(ASumSpec((0, 1), np.full((2, 2), 0.5)))
    assert tv(as_dict(d), {0: 0.25, 1: 0.5, 2: 0.25}) < 1e-15
    assert asum_exact_pmf(ASumSpec((0, 2), np.array([[0.0, 1.0]]))) == IntDist.point(2)


def test_exact_pmf_matches_monte_carlo_within_dkw():
    spec = random_spec(3, 3, 5, rng=np.random.default_rng(7), support=(0, 1, 5))
    d = asum_exact_pmf(spec)
    m = 10**6
    xs = sample_asum(spec, np.random.default_rng(7), m)
    # DKW at eps = .005: failure probability 2 exp(-2 m eps^2) ~ 4e-22
    assert kolmogorov_distance(d, empirical(xs)) <= 0.005


def test_spec_validation():
    with pytest.raises(ValueError):
        ASumSpec((1, 1), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        ASumSpec((0, 1), np.array([[0.5, 0.6]]))
    with pytest.raises(ValueError):
        ASumSpec((-1, 1), np.array([[0.5, 0.5]]))
    spec = ASumSpec((0, 3), np.array([[0.25, 0.75]]))
    assert ASumSpec.from_json(spec.to_json()).to_json() == spec.to_json()


@given(specs())
@settings(max_examples=80, deadline=None)
def test_exact_pmf_matches_enumeration(spec):
    got = as_dict(asum_exact_pmf(spec))
    want = enumerate_asum(spec.support, spec.rows) if spec.n else {0: 1.0}
    assert max(abs(got.get(x, 0) - want.get(x, 0)) for x in set(got) | set(want)) <= 1e-12


def test_wide_supports_use_lattice_and_agree():
    rng = np.random.default_rng(11)
    spec = random_spec(3, 400, 50_000, rng=rng, support=(0, 1, 50_000), templates=3)
    d = asum_exact_pmf(spec)
    # the first 40 rows against the dict oracle; the full law by its moments
    ref = sequential_asum((0, 1, 50_000), spec.rows[:40])
    part = asum_exact_pmf(ASumSpec(spec.support, spec.rows[:40]))
    assert tv(as_dict(part), ref) < 1e-10
    assert abs(sum(as_dict(d).values()) - 1) < 1e-9
    assert d.mean() == pytest.approx(float((spec.rows @ np.array(spec.support, dtype=float)).sum()), rel=1e-9)


def test_lattice_route_matches_dense_route():
    rng = np.random.default_rng(4)
    spec = random_spec(3, 300, 30_000, rng=rng, support=(0, 3, 30_000), templates=4)
    lattice = asum_exact_pmf(spec)  # span 9e6 is past the dense limit
    dense = convolve_many([spec.row_dist(i) for i in range(spec.n)])
    assert tv_distance(lattice, dense) < 1e-9


def test_cap_raises():
    spec = ASumSpec((0, 10**6, 3 * 10**6 + 1), np.full((50, 3), 1 / 3))
    with pytest.raises(ResourceError):
        asum_exact_pmf(spec, max_cells=100)


# -- zero-mode decomposition ----------------------------------------------------


def test_zero_mode_examples():
    spec = ASumSpec((2, 5), np.array([[1.0, 0.0]] * 3))
    dec = zero_mode_decompose(spec)
    assert dec.offset == 6 and all(v == 0 for v in dec.weights.values())

    spec = ASumSpec((6, 10, 15), np.full((2, 3), 1 / 3))
    dec = zero_mode_decompose(spec)
    assert dec.offset == 12
    assert dec.q_values == (4, 5, 9)
    assert dec.weights[4] == pytest.approx(2 / 3)
    assert dec.weights[9] == pytest.approx(2 / 3)
    assert dec.weights[5] == 0

    dec = zero_mode_decompose(ASumSpec((0, 3), np.array([[0.0, 1.0]])))
    assert dec.offset == 3 and dec.weights[3] == 0
    dec = zero_mode_decompose(ASumSpec((0, 3), np.array([[0.4, 0.6]])))
    assert dec.offset == 3 and dec.weights[3] == pytest.approx(0.4)


def test_largeness_index_examples():
    assert largeness_index([0, 0, 0], [1, 10, 100]) == 4
    assert largeness_index([5, 5, 5], [1, 10, 100]) == 1
    assert largeness_index([0.5, 20, 20], [1, 10, 100]) == 2
    with pytest.raises(ValueError):
        largeness_index([1], [1, 2])


def test_schedules():
    assert doubly_exponential_schedule(0.5, 3).tolist() == [4.0, 16.0, 256.0]
    assert power_schedule(0.5, 2, c=3).tolist() == [8.0, 512.0]
    assert math.isinf(power_schedule(0.1, 4)[-1])


@given(specs())
@settings(max_examples=60, deadline=None)
def test_reassembly_is_exact(spec):
    dec = zero_mode_decompose(spec)
    assert tv_distance(asum_exact_pmf(spec), reassemble(dec)) <= 1e-12
    assert tv_distance(asum_exact_pmf(spec), shift(zero_moded_sum(dec), dec.offset)) <= 1e-12


@given(specs())
@settings(max_examples=60, deadline=None)
def test_weights_recomputable(spec):
    dec = zero_mode_decompose(spec)
    a = np.asarray(spec.support)
    assert len(dec.q_values) <= spec.k * (spec.k - 1) // 2
    for q in dec.q_values:
        want = 0.0
        for row, mode in zip(spec.rows, dec.modes):
            want += sum(r for x, r in zip(a, row) if abs(x - mode) == q)
        assert dec.weights[q] == pytest.approx(want, abs=1e-12)
    for d in dec.zero_moded:
        assert d.prob(0) >= 1 / spec.k - 1e-12


def test_light_heavy_split_is_close_when_light_weights_are_small():
    # light value 1 carries total weight ~0.2, heavy value 7 carries ~60
    rng = np.random.default_rng(2)
    n = 200
    rows = np.zeros((n, 3))
    rows[:, 1] = rng.uniform(0, 0.002, n)
    rows[:, 2] = rng.uniform(0.2, 0.4, n)
    rows[:, 0] = 1 - rows[:, 1] - rows[:, 2]
    spec = ASumSpec((0, 1, 7), rows)
    dec = zero_mode_decompose(spec, thresholds=[1.0, 1.0, 10.0])
    assert dec.order == (6, 1, 7)  # ascending weight: 0, ~0.2, ~60
    assert dec.largeness_index == 3
    light, heavy = light_heavy_split(dec, 3)
    approx = convolve(light, heavy)
    err = tv_distance(approx, zero_moded_sum(dec))
    assert err <= 0.05
    assert tv_distance(light, IntDist.point(0)) <= sum(rows[:, 1]) + 1e-9


def gaussian_count_pushforward(n, p1, p3, sds=7.0):
    # counts (C1, C3) of a multinomial row model, replaced by a lattice Gaussian and mapped to C1 + 3 C3
    mean = n * np.array([p1, p3])
    cov = n * np.array([[p1 * (1 - p1), -p1 * p3], [-p1 * p3, p3 * (1 - p3)]])
    half = np.ceil(sds * np.sqrt(np.diag(cov))).astype(int)
    c1 = np.arange(max(0, int(mean[0]) - half[0]), int(mean[0]) + half[0] + 1)
    c3 = np.arange(max(0, int(mean[1]) - half[1]), int(mean[1]) + half[1] + 1)
    g1, g3 = np.meshgrid(c1, c3, indexing="ij")
    d = np.stack([g1 - mean[0], g3 - mean[1]], axis=-1)
    dens = np.exp(-0.5 * np.einsum("...i,ij,...j->...", d, np.linalg.inv(cov), d))
    vals = (g1 + 3 * g3).ravel()
    pmf = np.bincount(vals - vals.min(), weights=dens.ravel())
    return IntDist(int(vals.min()), pmf / pmf.sum())


def test_heavy_sums_approach_the_gaussian_count_model():
    # every nonzero difference has weight >= R; the gap to the CLT surrogate shrinks as R grows
    p = (0.5, 0.3, 0.2)
    gaps = []
    for R in (1e2, 1e3, 1e4):
        n = int(R / p[2])
        spec = ASumSpec((0, 1, 3), np.tile(p, (n, 1)))
        w = zero_mode_decompose(spec).weights
        assert min(w[1], w[3]) >= R - 1e-6
        gaps.append(tv_distance(asum_exact_pmf(spec), gaussian_count_pushforward(n, p[1], p[2])))
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] <= 0.01
