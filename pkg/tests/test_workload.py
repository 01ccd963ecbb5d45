import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpwo.workload import (Histogram, QueryMatrix, SensitivityPolytopeView, WorkloadError,
                           gen_histogram, gen_interval_queries, gen_random_counting,
                           load_histogram, load_matrix, save_histogram, save_matrix)


def test_load_identity_csv(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("1,0\n0,1")
    A = load_matrix(p)
    assert A.m == A.u == 2
    np.testing.assert_array_equal(A.entries, np.eye(2))


def test_load_empty_file(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("")
    with pytest.raises(WorkloadError, match="no rows"):
        load_matrix(p)


def test_load_non_numeric(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text("1,a\n")
    with pytest.raises(WorkloadError, match=r"non-numeric at \(1,2\)"):
        load_matrix(p)


@pytest.mark.parametrize("text,msg", [("1,2\n3\n", "ragged"), ("1,nan\n", "non-finite"),
                                      ("1,inf\n", "non-finite")])
def test_load_rejects_malformed(tmp_path, text, msg):
    p = tmp_path / "w.csv"
    p.write_text(text)
    with pytest.raises(WorkloadError, match=msg):
        load_matrix(p)


@pytest.mark.parametrize("fmt", ["csv", "json"])
@pytest.mark.parametrize("entries", [np.eye(2), np.array([[1.0, 2.0, 3.0]]),
                                     np.array([[0.1, 1 / 3], [2e-300, -7.25e12]])])
def test_save_load_roundtrip(tmp_path, fmt, entries):
    A = QueryMatrix(entries)
    p = tmp_path / f"w.{fmt}"
    save_matrix(A, p, fmt)
    B = load_matrix(p, fmt)
    assert np.array_equal(A.entries, B.entries)


def test_save_unwritable(tmp_path):
    with pytest.raises(OSError):
        save_matrix(QueryMatrix(np.eye(2)), tmp_path / "missing" / "w.csv")


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 4), u=st.integers(1, 5), seed=st.integers(0, 2**31 - 1),
       fmt=st.sampled_from(["csv", "json"]), kind=st.sampled_from(["counting", "intervals", "gauss"]))
def test_roundtrip_generators(tmp_path_factory, m, u, seed, fmt, kind):
    if kind == "counting":
        A = gen_random_counting(m, u, 0.5, seed)
    elif kind == "intervals":
        A = gen_interval_queries(u)
    else:
        A = QueryMatrix(np.random.default_rng(seed).standard_normal((m, u)) * 10.0 ** (seed % 20 - 10))
    p = tmp_path_factory.mktemp("rt") / f"w.{fmt}"
    save_matrix(A, p, fmt)
    assert load_matrix(p, fmt) == A
    assert np.all(np.isfinite(A.entries))


def test_counting_density_one():
    np.testing.assert_array_equal(gen_random_counting(3, 5, 1.0, 0).entries, np.ones((3, 5)))


def test_counting_deterministic():
    assert gen_random_counting(3, 4, 0.5, 7) == gen_random_counting(3, 4, 0.5, 7)


def test_counting_concentration():
    A = gen_random_counting(100, 100, 0.5, 3)
    assert set(np.unique(A.entries)) <= {0.0, 1.0}
    assert 0.45 <= A.entries.mean() <= 0.55


@pytest.mark.parametrize("density", [0.0, -0.1, 1.5])
def test_counting_bad_density(density):
    with pytest.raises(WorkloadError):
        gen_random_counting(2, 2, density, 0)


def _intervals_by_enumeration(u):
    return {tuple(1.0 if i <= c <= j else 0.0 for c in range(u))
            for i, j in itertools.product(range(u), repeat=2) if i <= j}


@pytest.mark.parametrize("u", [1, 2, 3, 6])
def test_interval_queries_enumeration(u):
    A = gen_interval_queries(u)
    rows = {tuple(r) for r in A.entries}
    assert A.m == u * (u + 1) // 2 == len(rows)
    assert rows == _intervals_by_enumeration(u)
    for r in A.entries:
        ones = np.flatnonzero(r)
        assert np.all(np.diff(ones) == 1)


def test_interval_small_cases():
    np.testing.assert_array_equal(gen_interval_queries(1).entries, [[1.0]])
    assert {tuple(r) for r in gen_interval_queries(2).entries} == {(1, 0), (0, 1), (1, 1)}
    A = gen_interval_queries(3)
    assert A.row_labels[A.m - 1] == "[1,3]"
    np.testing.assert_array_equal(A.entries[-1], [1, 1, 1])


def test_histogram_point_mass():
    np.testing.assert_array_equal(gen_histogram(3, 5, "point_mass", element=1).counts, [0, 5, 0])


def test_histogram_zero():
    np.testing.assert_array_equal(gen_histogram(4, 0).counts, np.zeros(4))


def test_histogram_uniform_reproducible():
    a = gen_histogram(4, 8, "uniform_random", seed=11)
    b = gen_histogram(4, 8, "uniform_random", seed=11)
    np.testing.assert_array_equal(a.counts, b.counts)
    assert a.size == 8


def test_histogram_element_out_of_range():
    with pytest.raises(WorkloadError):
        gen_histogram(3, 5, "point_mass", element=3)


def test_histogram_invariants():
    with pytest.raises(WorkloadError):
        Histogram(np.array([1, -1]), 5)
    with pytest.raises(WorkloadError):
        Histogram(np.array([3, 3]), 5)
    with pytest.raises(WorkloadError):
        Histogram(np.array([0.5, 1.0]), 5)


def test_histogram_file_roundtrip(tmp_path):
    x = gen_histogram(6, 9, seed=2)
    save_histogram(x, tmp_path / "x.csv")
    y = load_histogram(tmp_path / "x.csv", n=9)
    np.testing.assert_array_equal(x.counts, y.counts)
    (tmp_path / "bad.csv").write_text("1,2.5,3\n")
    with pytest.raises(WorkloadError):
        load_histogram(tmp_path / "bad.csv")


def test_query_matrix_invariants():
    with pytest.raises(WorkloadError):
        QueryMatrix(np.array([[1.0, np.nan]]))
    with pytest.raises(WorkloadError):
        QueryMatrix(np.zeros((0, 3)))
    A = QueryMatrix(np.eye(3))
    assert A.check_rank().rank_verified
    with pytest.raises(WorkloadError):
        QueryMatrix(np.ones((2, 3))).check_rank()


def test_polytope_vertices_are_signed_columns(rng):
    a = rng.standard_normal((3, 4))
    view = SensitivityPolytopeView(QueryMatrix(a))
    verts = {tuple(np.round(v, 12)) for v in view.vertices(2)}
    expected = {tuple(np.round(s * 2 * a[:, e], 12)) for e in range(4) for s in (1, -1)}
    assert verts == expected
    P = np.diag([1.0, 0.0, 0.0])
    proj = SensitivityPolytopeView(QueryMatrix(a), P)
    np.testing.assert_allclose(proj.generators(), (np.eye(3) - P) @ a)
    w = rng.standard_normal(3)
    assert proj.support(w, 3) == pytest.approx(3 * max(abs(w @ proj.generators())))
