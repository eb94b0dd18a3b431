import math

import numpy as np
import pytest
from scipy import stats

from baxlab import walk as wk
from baxlab.errors import BadEndpoints, BadIncrement, LeftQuadrant, SamplerBudgetExceeded, SizeTooLarge
from baxlab.rng import make_rng
from baxlab.walk import (
    NU,
    LatticeWalk,
    Step,
    TandemWalk,
    acceptance_probability,
    enumerate_tandem,
    nu_moments,
    random_tandem_walk,
    reverse_swap,
    sample_steps,
    sample_uniform_tandem,
    sample_uniform_tandem_many,
    sample_window,
    tandem_violation,
    window_probability,
)

COUNTS = [1, 2, 6, 22, 92, 422, 2074]


def test_step_set():
    Step(1, -1)
    Step(0, 0)
    Step(-3, 2)
    for dx, dy in [(1, 0), (0, -1), (2, -2), (-1, -1)]:
        with pytest.raises(BadIncrement):
            Step(dx, dy)


def test_step_law_mass_sums_to_one():
    total = NU.mass(1, -1) + sum(NU.mass(-i, j) for i in range(60) for j in range(60))
    assert total == pytest.approx(1.0, abs=1e-15)
    assert NU.mass(1, 0) == 0.0
    assert NU.most_probable(4) == [(1, -1), (0, 0), (0, 1), (-1, 0)]


def test_nu_moments():
    m = nu_moments()
    assert abs(m.mean[0]) < 1e-12 and abs(m.mean[1]) < 1e-12
    for got, want in zip(np.ravel(m.covariance), [2, -1, -1, 2]):
        assert abs(got - want) < 1e-12
    assert m.correlation == pytest.approx(-0.5, abs=1e-12)
    assert m.tail_bound < 1e-15


def test_tandem_validation():
    TandemWalk([(0, 0)])
    with pytest.raises(BadIncrement) as e:
        TandemWalk([(0, 1), (2, 0)])
    assert e.value.report.index == 2
    with pytest.raises(LeftQuadrant):
        TandemWalk([(0, 0), (1, -1)])
    with pytest.raises(BadEndpoints):
        TandemWalk([(1, 0)])
    with pytest.raises(BadEndpoints):
        TandemWalk([(0, 1)])
    v = tandem_violation([(0, 1), (1, 0), (2, -1)])
    assert v.invariant == "quadrant" and v.index == 3


def test_enumeration_counts_and_validity():
    for n, c in enumerate(COUNTS, start=1):
        ws = list(enumerate_tandem(n))
        assert len(ws) == c
        assert len({w.key() for w in ws}) == c
    assert [w.key() for w in enumerate_tandem(1)] == [((0, 0),)]
    with pytest.raises(SizeTooLarge):
        next(enumerate_tandem(8))


def test_reverse_swap():
    assert reverse_swap(TandemWalk([(0, 0)])) == TandemWalk([(0, 0)])
    for n in range(1, 6):
        for w in enumerate_tandem(n):
            r = reverse_swap(w)
            assert reverse_swap(r) == w
            assert np.array_equal(r.values[0], w.values[-1][::-1])


def test_random_tandem_walk_support(rng):
    seen = {random_tandem_walk(4, r).key() for r in rng.spawn(4000)}
    assert seen == {w.key() for w in enumerate_tandem(4)}
    assert len(random_tandem_walk(2000, rng)) == 2000


def test_sample_steps_law(rng):
    steps = sample_steps(10**6, rng)
    top = NU.most_probable(20)
    counts = [np.count_nonzero((steps[:, 0] == dx) & (steps[:, 1] == dy)) for dx, dy in top]
    probs = [NU.mass(dx, dy) for dx, dy in top]
    obs = counts + [len(steps) - sum(counts)]
    exp = np.array(probs + [1 - sum(probs)]) * len(steps)
    assert stats.chisquare(obs, exp).pvalue > 0.01


def test_sample_window(rng):
    w = sample_window(0, rng)
    assert w.values.tolist() == [[0, 0]] and w.t0 == 0
    w = sample_window(5, rng)
    assert len(w) == 11 and w.value(0) == (0, 0) and w.t0 == -5


def test_window_probability_matches_mc(rng):
    target = LatticeWalk.from_steps([(1, -1), (0, 0), (-1, 1)], t0=-1)
    p = window_probability(target)
    assert p == 0.5 * 2 ** -3 * 2 ** -5
    draws = 10**6
    steps = sample_steps(3 * draws, rng).reshape(draws, 3, 2)
    hits = np.count_nonzero((steps == target.steps).all(axis=(1, 2)))
    se = math.sqrt(p * (1 - p) / draws)
    assert abs(hits / draws - p) < 3 * se + 1e-12


def _nu_endpoints(steps: int, paths: int, rng) -> np.ndarray:
    """Exact law of a sum of ``steps`` nu-steps.

    With ``U`` up-down steps, the other coordinates are sums of ``steps - U``
    independent geometric(1/2) - 1 variables, i.e. negative binomials.
    """
    u = rng.binomial(steps, 0.5, paths)
    left = steps - u
    gi = np.where(left > 0, rng.negative_binomial(np.maximum(left, 1), 0.5), 0)
    gj = np.where(left > 0, rng.negative_binomial(np.maximum(left, 1), 0.5), 0)
    return np.column_stack([u - gi, gj - u]).astype(float)


def test_nu_endpoint_law_matches_direct_sums(rng):
    direct = sample_steps(200 * 5000, rng).reshape(5000, 200, 2).sum(axis=1)
    fast = _nu_endpoints(200, 5000, rng)
    for c in range(2):
        assert stats.ks_2samp(direct[:, c], fast[:, c]).pvalue > 0.001


def test_donsker_covariance(rng):
    n, paths = 10**4, 10**5
    ends = _nu_endpoints(n - 1, paths, rng) / math.sqrt(2 * n)
    cov = np.cov(ends.T)
    target = np.array([[1, -0.5], [-0.5, 1]])
    # stderr of a sample covariance entry is about sqrt((s_aa s_bb + s_ab^2) / N)
    se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target**2) / paths)
    assert np.all(np.abs(cov - target) < 3 * se + 1 / n)


def test_sampler_size_one(rng):
    walks, _ = sample_uniform_tandem_many(1, 50, 0.0, rng, batch=4096)
    assert all(w.key() == ((0, 0),) for w in walks)


def test_sampler_uniform_at_size_three(rng):
    walks, st_ = sample_uniform_tandem_many(3, 10**5, 0.0, rng, batch=1 << 18)
    support = [w.key() for w in enumerate_tandem(3)]
    counts = {k: 0 for k in support}
    for w in walks:
        counts[w.key()] += 1  # KeyError would mean an invalid output
    assert stats.chisquare(list(counts.values())).pvalue > 0.01
    # acceptance rate against the exact formula
    p = acceptance_probability(3, 0.0, [0] + COUNTS)
    se = math.sqrt(p * (1 - p) / st_.trials)
    assert abs(st_.accepted / st_.trials - p) < 4 * se


def test_sampler_window_sizes(rng):
    walks, _ = sample_uniform_tandem_many(2, 200, 1.0, rng, batch=4096)
    sizes = {len(w) for w in walks}
    assert sizes <= {2, 3, 4} and {2, 3} <= sizes
    for w in walks:
        assert tandem_violation(w.values) is None


def test_sampler_budget(rng):
    with pytest.raises(SamplerBudgetExceeded) as e:
        sample_uniform_tandem(200, 0.0, rng, max_trials=5000)
    assert e.value.trials >= 5000
    with pytest.raises(SamplerBudgetExceeded):
        sample_uniform_tandem(200, 0.0, rng, time_budget=0.05)


def test_sampler_reproducible():
    a, _ = sample_uniform_tandem(4, 0.5, make_rng(3, "s"))
    b, _ = sample_uniform_tandem(4, 0.5, make_rng(3, "s"))
    assert a == b


def test_acceptance_large_matches_exact():
    from baxlab.perm import baxter_numbers

    counts = baxter_numbers(400)
    for n, d in [(1, 0.0), (3, 0.0), (40, 0.5), (300, 0.1)]:
        exact = acceptance_probability(n, d, counts)
        assert math.isclose(wk.acceptance_probability_large(n, d), exact, rel_tol=1e-10)
    # polynomial decay, roughly m^-4 per size
    ratio = wk.acceptance_probability_large(2000, 0.0) / wk.acceptance_probability_large(1000, 0.0)
    assert 0.04 < ratio < 0.08
