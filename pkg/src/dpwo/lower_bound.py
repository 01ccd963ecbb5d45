"""Spectral lower bounds on the error of any private mechanism.

``specLB(k, A) = max_{|S| <= k} sqrt(k / m) * sigma_min(A_S)`` lower-bounds the
optimal error up to a constant factor. It is computed exactly by enumeration
for small universes and heuristically by backward elimination otherwise. The
dual solution of the covariance program gives certificate values that
``specLB`` must dominate.
"""

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .covariance import hk_spectrum
from .spectral import psd_eig
from .workload import QueryMatrix

MAX_BRUTEFORCE_UNIVERSE = 16


class LowerBoundError(ValueError):
    pass


@dataclass(frozen=True)
class CertificateReport:
    spec_lb_value: float
    subset: tuple
    method: str
    k: int
    case2_bound: float = float("nan")
    case1_bound_raw: float = float("nan")
    active_case: str = None
    weighted_value: float = float("nan")
    weighted_subset: tuple = ()

    def to_dict(self):
        def num(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            "value": num(self.spec_lb_value),
            "subset": [int(e) for e in self.subset],
            "method": self.method,
            "case": self.active_case,
            "case1_raw": num(self.case1_bound_raw),
            "case2": num(self.case2_bound),
            "k": int(self.k),
            "weighted_value": num(self.weighted_value),
            "weighted_subset": [int(e) for e in self.weighted_subset],
        }

    def to_json(self):
        return json.dumps(self.to_dict())


def _matrix(A):
    return A.entries if isinstance(A, QueryMatrix) else np.atleast_2d(np.asarray(A, dtype=float))


def _batched_sigma_min(a, subsets):
    """sigma_min of every column submatrix in ``subsets`` (all the same size)."""
    size = len(subsets[0])
    if size > a.shape[0]:
        return np.zeros(len(subsets))
    idx = np.asarray(subsets)
    blocks = np.transpose(a[:, idx], (1, 0, 2))
    return np.linalg.svd(blocks, compute_uv=False)[:, -1]


def spec_lb_bruteforce(A, k, max_universe=MAX_BRUTEFORCE_UNIVERSE):
    """Exact ``specLB(k, A)`` by enumerating all nonempty subsets of size <= k.

    The report also carries ``weighted_value``, the maximum of
    ``sqrt(|S| / m) * sigma_min(A_S)``, which uses the subset size in place of
    ``k``.
    """
    a = _matrix(A)
    m, u = a.shape
    if u > max_universe:
        raise LowerBoundError(f"universe of size {u} exceeds the brute-force limit {max_universe}")
    if k < 1:
        raise LowerBoundError("k must be positive")
    best, best_set = -1.0, ()
    wbest, wbest_set = -1.0, ()
    for size in range(1, min(k, u) + 1):
        subsets = list(itertools.combinations(range(u), size))
        smin = _batched_sigma_min(a, subsets)
        j = int(np.argmax(smin))
        if smin[j] > best:
            best, best_set = float(smin[j]), subsets[j]
        if math.sqrt(size) * smin[j] > wbest:
            wbest, wbest_set = math.sqrt(size) * float(smin[j]), subsets[j]
    return CertificateReport(spec_lb_value=math.sqrt(k / m) * best, subset=tuple(best_set),
                             method="bruteforce", k=int(k),
                             weighted_value=wbest / math.sqrt(m), weighted_subset=tuple(wbest_set))


def _elimination_score(sub):
    # sigma_{min(|S|, m)}(A_S): equals sigma_min once |S| <= m and stays
    # informative while the submatrix is still wide
    s = np.linalg.svd(sub, compute_uv=False)
    return float(s[min(sub.shape) - 1]) if s.size else 0.0


def spec_lb_greedy(A, k):
    """Backward elimination heuristic for ``specLB``.

    Starting from all columns, repeatedly drop the column whose removal leaves
    the largest ``sigma_min`` (for wide submatrices: the smallest nonzero
    singular value). Ties drop the shortest column, then the lowest index.
    The best objective seen among subsets of size <= k is reported.
    """
    a = _matrix(A)
    m, u = a.shape
    if not 1 <= k <= u:
        raise LowerBoundError(f"k={k} out of range for universe of size {u}")
    norms = np.sum(a * a, axis=0)
    keep = list(range(u))
    best, best_set = -1.0, ()
    while True:
        if len(keep) <= k:
            val = _elimination_score(a[:, keep]) if len(keep) <= m else 0.0
            if val > best:
                best, best_set = val, tuple(keep)
        if len(keep) == 1:
            break
        choice = None
        for pos, e in enumerate(keep):
            rest = keep[:pos] + keep[pos + 1:]
            key = (_elimination_score(a[:, rest]), -norms[e], -e)
            if choice is None or key > choice[0]:
                choice = (key, pos)
        keep.pop(choice[1])
    return CertificateReport(spec_lb_value=math.sqrt(k / m) * best, subset=best_set,
                             method="greedy", k=int(k))


def dual_spectrum(A, q):
    """Eigen-decomposition of ``A diag(q) A^T``."""
    a = _matrix(A)
    return psd_eig((a * np.asarray(q)) @ a.T)


def dual_certificate_bound(design, epsilon, n, A=None, spec_lb=None):
    """Certificate values implied by a covariance design.

    ``case2_bound = ||Sigma||_(k) / (8 sqrt(m))`` and the constant-free
    ``case1_bound_raw = ||Sigma||_(k) / (2 log(eps n) sqrt(m))`` (``inf`` when
    ``eps n <= 1``). The active case is decided on the dual spectrum of
    ``A Q A^T``: case 2 when the tail term of ``h_k`` is at least half of
    ``h_k``, otherwise case 1. Without ``A`` the dual spectrum is unavailable
    and ``active_case`` is left unset.

    If ``spec_lb`` (a :class:`CertificateReport`) is given its value and subset
    are carried over.
    """
    m = design.sigma.shape[0]
    kyfan = design.kyfan_value
    case2 = kyfan / (8.0 * math.sqrt(m))
    log_en = math.log(epsilon * n) if epsilon * n > 0 else -math.inf
    case1 = kyfan / (2.0 * log_en * math.sqrt(m)) if log_en > 0 else math.inf
    active = None
    if A is not None:
        vals = dual_spectrum(A, design.dual.q).values
        value, _, _, head, tail_term = hk_spectrum(vals, design.k)
        active = "case2" if tail_term >= 0.5 * value else "case1"
    base = spec_lb or CertificateReport(spec_lb_value=float("nan"), subset=(), method="none",
                                        k=int(design.k))
    return CertificateReport(spec_lb_value=base.spec_lb_value, subset=base.subset,
                             method=base.method, k=int(design.k), case2_bound=case2,
                             case1_bound_raw=case1, active_case=active,
                             weighted_value=base.weighted_value,
                             weighted_subset=base.weighted_subset)


def restricted_invertibility_check(M, weights, eps=0.5):
    """Brute-force check of the restricted invertibility conclusion.

    For every ``k <= eps^2 tr(M W M^T) / ||M W M^T||_2`` search all
    ``k``-subsets for one with ``sigma_min(M_S)^2 >= (1 - eps)^2 tr(M W M^T)``.

    Returns a list of ``(k, best_sigma_min_sq, target)`` triples, one per
    admissible ``k``.
    """
    M = np.asarray(M, dtype=float)
    W = np.asarray(weights, dtype=float)
    gram = (M * W) @ M.T
    tr = float(np.trace(gram))
    op = float(np.linalg.eigvalsh(gram)[-1])
    if op <= 0:
        return []
    kmax = int(math.floor(eps * eps * tr / op + 1e-12))
    target = (1.0 - eps) ** 2 * tr
    out = []
    for k in range(1, min(kmax, M.shape[1]) + 1):
        subsets = list(itertools.combinations(range(M.shape[1]), k))
        best = float(np.max(_batched_sigma_min(M, subsets)))
        out.append((k, best * best, target))
    return out
