import itertools

import numpy as np
import pytest

from baxlab import bipolar as bp
from baxlab import coal
from baxlab.errors import BadIncrement, IndexOutOfRange, MalformedTree, NotInImage
from baxlab.perm import Permutation, all_permutations, is_baxter, pattern
from baxlab.walk import LatticeWalk, TandemWalk, enumerate_tandem, random_tandem_walk, reverse_swap

from conftest import RUNNING_PERM

SMALL = [w for n in range(1, 6) for w in enumerate_tandem(n)]


def _pairwise_noncrossing(z: coal.CoalescentProcess) -> bool:
    """Definition scan over all pairs; quadratic in the number of pairs."""
    t = z.traj
    for a in range(z.n):
        for b in range(a + 1, z.n):
            d = np.sign(t[a, b:] - t[b, b:])
            nz = d[d != 0]
            if nz.size and np.any(nz != nz[0]):
                return False
            meet = np.flatnonzero(d == 0)
            if meet.size and (np.any(d[meet[0]:] != 0) or t[a, b + meet[0]] < 0):
                return False
    return True


def test_running_example(running_walk):
    z = coal.wc(running_walk)
    assert coal.cp(z).values == RUNNING_PERM
    assert coal.cp_streaming(running_walk).values == RUNNING_PERM
    assert coal.permutation_linear(running_walk).values == RUNNING_PERM
    assert coal.fortree_naive(z) == coal.fortree_linear(running_walk)


def test_single_point():
    w = TandemWalk([(0, 0)])
    z = coal.wc(w)
    assert z.traj.tolist() == [[0]]
    assert coal.cp(z) == Permutation([1])
    f = coal.fortree_linear(w)
    assert f.roots == (1,) and f.index == {1: 0}
    a, b = coal.wpc(w)
    assert a.n == b.n == 1
    assert coal.pcw(a, b) == w


def test_step_rule_cases():
    # (+1,-1): -1 ; (-i,j) with Z >= 0: +j ; Z < -i: +i ; -i <= Z < 0: land on j
    z = np.array([3, 0, -1, -2, -5])
    assert coal._step_update(z, 1, -1).tolist() == [2, -1, -2, -3, -6]
    assert coal._step_update(z, -2, 4).tolist() == [7, 4, 4, 4, -3]
    with pytest.raises(BadIncrement):
        coal._step_update(z, 1, 0)


def test_noncrossing_exhaustive():
    for w in SMALL:
        z = coal.wc(w)
        coal.check_coalescent(z)
        assert _pairwise_noncrossing(z)


def test_noncrossing_checker_rejects_crossings():
    good = coal.wc(TandemWalk([(0, 1), (1, 0), (0, 0)]))
    coal.check_coalescent(good)
    bad = good.traj.copy()
    # Z^(1) = (0,-1,0) and Z^(2) = (.,0,0); lift Z^(1) above Z^(2) at time 3
    bad[0, 2] = 5
    bad[1, 2] = 3
    with pytest.raises(ValueError):
        coal.check_coalescent(coal.CoalescentProcess(bad))
    assert not _pairwise_noncrossing(coal.CoalescentProcess(bad))


def test_noncrossing_randomized(rng):
    for r in rng.spawn(100):
        coal.check_coalescent(coal.wc(random_tandem_walk(1000, r)))


def test_checkers_agree_on_random_arrays(rng):
    # both checkers on perturbed processes, to pin the fast one to the definition
    for r in rng.spawn(300):
        z = coal.wc(random_tandem_walk(int(r.integers(2, 9)), r))
        t = z.traj.copy()
        a, b = sorted(r.integers(0, z.n, 2))
        if b > a:
            t[a, b] += int(r.integers(-2, 3))
        p = coal.CoalescentProcess(t)
        try:
            coal.check_coalescent(p)
            fast = True
        except ValueError:
            fast = False
        assert fast == _pairwise_noncrossing(p)


def test_leq_z_is_total_order():
    for w in SMALL:
        z = coal.wc(w)
        I = list(z.times)
        for i in I:
            assert coal.leq_z(z, i, i)
        for i, j in itertools.permutations(I, 2):
            assert coal.leq_z(z, i, j) != coal.leq_z(z, j, i)
        for i, j, k in itertools.permutations(I, 3):
            if coal.leq_z(z, i, j) and coal.leq_z(z, j, k):
                assert coal.leq_z(z, i, k)
    with pytest.raises(IndexOutOfRange):
        coal.leq_z(coal.wc(SMALL[0]), 1, 2)


def test_cp_two_ways_and_baxter():
    for w in SMALL:
        z = coal.wc(w)
        sigma = coal.cp(z)
        by_sort = sorted(z.times, key=lambda i: sum(coal.leq_z(z, j, i) for j in z.times))
        assert [sigma(i) for i in by_sort] == list(range(1, len(w) + 1))
        assert coal.fortree_naive(z).permutation() == sigma
        assert coal.permutation_linear(w) == sigma
        assert coal.cp_streaming(w) == sigma
        assert is_baxter(sigma)


def test_cp_image_is_all_baxter():
    for n in range(1, 7):
        image = {coal.cp(coal.wc(w)).values for w in enumerate_tandem(n)}
        baxter = {s.values for s in all_permutations(n) if is_baxter(s)}
        assert image == baxter


def test_pattern_extraction_from_subprocess():
    # the pattern of sigma on an interval of indices is cp of the restricted process
    for w in SMALL:
        z = coal.wc(w)
        sigma = coal.cp(z)
        n = len(w)
        for j in range(1, n + 1):
            for k in range(j, n + 1):
                sub = z.restrict(j, k)
                assert coal.cp(coal.CoalescentProcess(sub.traj)) == pattern(sigma, range(j, k + 1))


def test_local_time():
    for w in SMALL:
        z = coal.wc(w)
        for i in z.times:
            assert coal.local_time(z, i, i) == 1
            seq = [coal.local_time(z, i, j) for j in range(i, len(w) + 1)]
            assert seq == sorted(seq)
        assert coal.final_local_times(z).tolist() == [coal.local_time(z, i, len(w)) for i in z.times]
    with pytest.raises(IndexOutOfRange):
        coal.local_time(coal.wc(SMALL[3]), 2, 1)


def test_local_time_dual_identity():
    for w in SMALL:
        z = coal.wc(w)
        sigma = coal.cp(z)
        xs = bp.bow(bp.dual(bp.theta_plain(w))).values[:, 0]
        n = len(w)
        for i in range(1, n + 1):
            assert xs[sigma(i) - 1] == coal.local_time(z, i, n) - 1


def test_forest_implementations_agree(rng):
    for n in range(1, 7):
        for w in enumerate_tandem(n):
            f = coal.fortree_linear(w)
            f.validate()
            assert coal.fortree_naive(coal.wc(w)) == f
    for r in rng.spawn(100):
        w = random_tandem_walk(1000, r)
        assert coal.fortree_naive(coal.wc(w)) == coal.fortree_linear(w)


def test_forest_on_general_walks():
    steps = [(1, -1)] + [(-i, j) for i in range(3) for j in range(3)]
    for k in range(1, 5):
        for word in itertools.product(steps, repeat=k):
            w = LatticeWalk.from_steps(word)
            assert coal.fortree_naive(coal.wc(w)) == coal.fortree_linear(w)
            assert bp.dual_forest(bp.theta(w)) == coal.fortree_linear(w)


def test_forest_of_running_example_is_dual_tree(running_walk):
    f = coal.fortree_linear(running_walk)
    assert f == bp.dual_forest(bp.theta(running_walk))
    # trees of T(m*) cut at its root: one per edge on the right boundary of m
    mk = bp.theta(running_walk)
    assert set(f.roots) == {mk.labels[e] for e in mk.skeleton.right_boundary}


def test_wpc_components_are_dual_forests():
    for w in SMALL:
        z, zr = coal.wpc(w)
        coal.check_coalescent(z)
        coal.check_coalescent(zr)
        assert coal.labtree(coal.fortree_naive(z)) == coal.labtree(bp.dual_forest(bp.theta(w)))
        assert coal.labtree(coal.fortree_naive(zr)) == coal.labtree(bp.dual_forest(bp.theta(reverse_swap(w))))


def test_anti_involution():
    for w in SMALL:
        w1 = coal.pcw_wpc(w)
        assert w1 == bp.bow(bp.dual(bp.theta_plain(w)))
        w2 = coal.pcw_wpc(w1)
        assert w2 == reverse_swap(w)
        assert coal.pcw_wpc(coal.pcw_wpc(w2)) == w


def test_anti_involution_randomized(rng):
    for r in rng.spawn(10):
        w = random_tandem_walk(1000, r)
        cur = w
        for _ in range(4):
            cur = coal.pcw_wpc(cur)
        assert cur == w


def test_pcw_rejects_mismatched_sizes():
    a = coal.wc(TandemWalk([(0, 0)]))
    b = coal.wc(TandemWalk([(0, 0), (0, 0)]))
    with pytest.raises(NotInImage):
        coal.pcw(a, b)


def test_degree_bound():
    for w in SMALL:
        assert bp.outdegree_bound_holds(w)


def test_degree_bound_fails_with_strict_start():
    # with the stopping index j restricted to j > i the bound breaks at edge 1
    w = LatticeWalk(np.array([(0, 1), (1, 0), (1, 1), (0, 1), (1, 0), (0, 0)]))
    mk = bp.theta(w)
    m = mk.skeleton
    z = coal.wc(w)
    j, s = coal.degree_bound_indices(z, 1, strict=True)
    e1 = mk.edge_of(1)
    assert len(m.outs[m.top[e1]]) > s - j - 1


def test_trajectory_law_small(rng):
    rep = coal.trajectory_law_check(8, 50_000, rng)
    assert abs(rep.mass_minus_one - 0.5) < 3 * rep.se_minus_one
    assert abs(rep.mass_zero - 0.25) < 3 * rep.se_zero
    assert rep.passed
    assert sum(coal.increment_law(v) for v in range(-1, 60)) == pytest.approx(1.0)


def test_separable():
    leaf = coal.SignedTree.leaf()
    assert coal.separable_coalescent(leaf)[1] == Permutation([1])
    plus = coal.SignedTree.node("+", leaf, coal.SignedTree.node("+", leaf, leaf), leaf)
    assert coal.separable_coalescent(plus)[1] == Permutation.identity(4)
    minus = coal.SignedTree.node("-", leaf, leaf, leaf)
    assert coal.separable_coalescent(minus)[1] == Permutation([3, 2, 1])
    with pytest.raises(MalformedTree):
        coal.SignedTree(None, (leaf, leaf))
    with pytest.raises(MalformedTree):
        coal.SignedTree("+", ())


def test_separable_random_trees(rng):
    seen = set()
    for r in rng.spawn(200):
        t = coal.random_signed_tree(12, r)
        _, sigma = coal.separable_coalescent(t)
        assert sigma == coal.perm_of_signed_tree(t)
        assert is_baxter(sigma)
        n = len(sigma)
        for idx in itertools.combinations(range(1, n + 1), 4):
            assert pattern(sigma, idx).values not in ((2, 4, 1, 3), (3, 1, 4, 2))
        seen.add(n)
    assert max(seen) > 4


def test_dense_cap():
    from baxlab.errors import SizeTooLarge

    w = LatticeWalk(np.zeros((coal.DENSE_LIMIT + 1, 2), dtype=np.int64))
    with pytest.raises(SizeTooLarge):
        coal.wc(w)
    sigma = coal.permutation_linear(w)
    assert len(sigma) == coal.DENSE_LIMIT + 1 and sigma == coal.cp_streaming(w)
