import numpy as np
import pytest

ACCEPTANCE_KEY = pytest.StashKey[list]()


def random_psd(rng, m, rank=None):
    rank = m if rank is None else rank
    F = rng.standard_normal((m, rank))
    return F @ F.T


def random_full_rank(rng, m, u, density=None):
    """Random workload with full row rank (redrawn until it is)."""
    while True:
        if density is None:
            A = rng.standard_normal((m, u))
        else:
            A = (rng.random((m, u)) < density).astype(float)
        if np.linalg.matrix_rank(A) == m:
            return A


def case2_instances(count, seed=0):
    """Random small instances whose certificate has the case-2 split active.

    At the dual optimum the weight concentrates on about k columns, which puts
    the threshold near k and makes the head sum dominate. Case 2 shows up for
    orthonormal workloads (flat spectrum, any k) and whenever k = 1, so the
    generator alternates between those two families and keeps the hits.
    Returns a list of ``(A, design, report)``.
    """
    from dpwo.covariance import optimize_covariance
    from dpwo.lower_bound import dual_certificate_bound, spec_lb_bruteforce
    from dpwo.workload import QueryMatrix, gen_random_counting

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = int(rng.integers(2, 9))
        if len(out) % 2 == 0:
            Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
            A, n, eps = QueryMatrix(Q), int(rng.integers(2, 2 * m + 1)), 0.5
        else:
            u = int(rng.integers(m, 13))
            A, n, eps = gen_random_counting(m, u, 0.5, int(rng.integers(1 << 30))), 1, 1.0
        design = optimize_covariance(A, n, eps)
        rep = dual_certificate_bound(design, eps, n, A=A, spec_lb=spec_lb_bruteforce(A, design.k))
        if rep.active_case == "case2":
            out.append((A, design, rep))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
