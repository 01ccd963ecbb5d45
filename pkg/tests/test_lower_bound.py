import itertools
import json
import math

import numpy as np
import pytest

from dpwo.covariance import optimize_covariance
from dpwo.lower_bound import (LowerBoundError, dual_certificate_bound, restricted_invertibility_check,
                              spec_lb_bruteforce, spec_lb_greedy)
from dpwo.mechanism import top_k_projector
from dpwo.workload import QueryMatrix, gen_random_counting
from conftest import case2_instances


def specLB_oracle(a, k):
    """Direct enumeration with numpy's SVD, one subset at a time."""
    m, u = a.shape
    best = 0.0
    for size in range(1, min(k, u) + 1):
        for S in itertools.combinations(range(u), size):
            sub = a[:, S]
            s = np.linalg.svd(sub, compute_uv=False)
            smin = s[-1] if size <= m else 0.0
            best = max(best, smin)
    return math.sqrt(k / m) * best


def test_bruteforce_examples():
    rep = spec_lb_bruteforce(np.eye(2), 1)
    assert rep.spec_lb_value == pytest.approx(math.sqrt(0.5), abs=1e-12)
    assert len(rep.subset) == 1
    rep = spec_lb_bruteforce(np.diag([1.0, 2.0]), 2)
    assert rep.spec_lb_value == pytest.approx(2.0, abs=1e-12)
    assert rep.subset == (1,)


def test_bruteforce_singletons(rng):
    a = rng.standard_normal((4, 6))
    rep = spec_lb_bruteforce(a, 1)
    assert rep.spec_lb_value == pytest.approx(math.sqrt(1 / 4) * np.max(np.linalg.norm(a, axis=0)))


def test_bruteforce_matches_oracle(rng):
    for _ in range(10):
        m, u = int(rng.integers(2, 6)), int(rng.integers(2, 8))
        a = (rng.random((m, u)) < 0.5).astype(float) + rng.standard_normal((m, u)) * 0.1
        k = int(rng.integers(1, u + 1))
        rep = spec_lb_bruteforce(a, k)
        assert rep.spec_lb_value == pytest.approx(specLB_oracle(a, k), rel=1e-10)
        assert len(rep.subset) <= k
        assert rep.spec_lb_value >= 0


def test_bruteforce_limits():
    with pytest.raises(LowerBoundError):
        spec_lb_bruteforce(np.ones((2, 17)), 2)
    with pytest.raises(LowerBoundError):
        spec_lb_bruteforce(np.eye(2), 0)


def test_weighted_value(rng):
    a = rng.standard_normal((3, 5))
    rep = spec_lb_bruteforce(a, 3)
    S = rep.weighted_subset
    s = np.linalg.svd(a[:, S], compute_uv=False)[-1]
    assert rep.weighted_value == pytest.approx(math.sqrt(len(S) / 3) * s)
    assert rep.weighted_value <= rep.spec_lb_value + 1e-12


@pytest.mark.parametrize("u,k", [(4, 1), (5, 3), (6, 6)])
def test_greedy_identity(u, k):
    rep = spec_lb_greedy(np.eye(u), k)
    assert rep.spec_lb_value == pytest.approx(math.sqrt(k / u))


def test_greedy_below_bruteforce(rng):
    for seed in range(15):
        r = np.random.default_rng(seed)
        m, u = int(r.integers(2, 7)), int(r.integers(3, 11))
        a = (r.random((m, u)) < 0.5).astype(float)
        a[0, 0] = 1.0
        for k in range(1, u + 1, 2):
            assert spec_lb_greedy(a, k).spec_lb_value <= spec_lb_bruteforce(a, k).spec_lb_value + 1e-10


def test_greedy_drops_zero_column_first():
    import dpwo.lower_bound as lb

    a = np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 0.0, 1.0, 1.0], [1.0, 0.0, 1.0, 0.0]])
    # removing the zero column gives the best 3-column remainder
    rest = [0, 2, 3]
    for drop in rest:
        keep = [c for c in range(4) if c != drop]
        assert lb._elimination_score(a[:, keep]) <= lb._elimination_score(a[:, rest]) + 1e-12
    for k in (1, 2, 3):
        assert 1 not in spec_lb_greedy(a, k).subset


def test_greedy_range():
    with pytest.raises(LowerBoundError):
        spec_lb_greedy(np.eye(3), 4)


def test_certificate_identity():
    m, k = 6, 3
    design = optimize_covariance(QueryMatrix(np.eye(m)), 6, 0.5)
    rep = dual_certificate_bound(design, 0.5, 6, A=np.eye(m))
    assert rep.active_case == "case2"
    assert rep.case2_bound == pytest.approx(k / (8 * math.sqrt(m)), rel=1e-6)
    assert rep.case1_bound_raw == pytest.approx(design.kyfan_value / (2 * math.log(3.0) * math.sqrt(m)))
    obj = json.loads(rep.to_json())
    assert {"value", "subset", "method", "case", "case1_raw", "case2", "k"} <= set(obj)


def test_certificate_case1_infinite_when_small():
    design = optimize_covariance(QueryMatrix(np.eye(3)), 1, 1.0)
    rep = dual_certificate_bound(design, 1.0, 1)
    assert math.isinf(rep.case1_bound_raw)
    assert rep.active_case is None
    assert json.loads(rep.to_json())["case1_raw"] is None


def test_case2_soundness_small_instances():
    reps = [rep for _, _, rep in case2_instances(8, seed=3)]
    assert any(r.k > 1 for r in reps)
    for rep in reps:
        assert rep.spec_lb_value >= rep.case2_bound


def test_restricted_invertibility_identity():
    out = restricted_invertibility_check(np.eye(4), np.full(4, 0.25), eps=0.5)
    assert [k for k, _, _ in out] == [1]
    k, best, target = out[0]
    assert best == 1.0 and target == pytest.approx(0.25)


def test_restricted_invertibility_dual_weights():
    for seed in range(5):
        A = gen_random_counting(6, 10, 0.5, seed)
        design = optimize_covariance(A, 5, 0.8)
        M = top_k_projector(design) @ A.entries
        for k, best, target in restricted_invertibility_check(M, design.dual.q):
            assert best >= target - 1e-12
