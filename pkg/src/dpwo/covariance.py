"""Optimal noise covariance for the projection mechanism.

The covariance ``Sigma`` minimizes the Ky Fan k-norm ``||Sigma||_(k)`` subject
to ``a_e^T Sigma^{-1} a_e <= 1`` for every column ``a_e`` of the workload.
Instead of attacking this program directly we maximize its concave dual

    max  h_k(A diag(q) A^T)^2    over q in the probability simplex,

with Frank-Wolfe (away-step variant, exact line search), and then build the
primal optimum from the dual spectrum in closed form. The ratio between the
two objective values certifies how close the returned covariance is to
optimal.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize_scalar

from .spectral import EigenDecomposition, SpectralError, psd_eig, sym_eig
from .workload import QueryMatrix, WorkloadError

RANK_TOL = 1e-12
REGULARIZATION = 1e-6
TIE_TOL = 1e-12


class CovarianceError(ValueError):
    pass


@dataclass(frozen=True)
class DualSolution:
    q: np.ndarray
    hk_value: float
    threshold_t: int
    alpha: float
    k: int
    iterations_used: int
    fw_gap: float
    trace: tuple = ()

    @property
    def c(self):
        """Optimal dual scale ``tr(P)``; the dual matrix is ``P = c Q``."""
        return self.hk_value**2


@dataclass(frozen=True)
class CovarianceDesign:
    sigma: np.ndarray
    k: int
    kyfan_value: float
    feasibility_slack: float
    rescale_factor: float
    eig: EigenDecomposition
    dual: DualSolution
    gap: float = field(default=float("nan"))

    @property
    def hk_value(self):
        return self.dual.hk_value

    def to_json(self):
        return json.dumps({
            "k": int(self.k),
            "kyfan_value": float(self.kyfan_value),
            "hk_value": float(self.hk_value),
            "gap": float(self.gap),
            "rescale_factor": float(self.rescale_factor),
            "feasibility_slack": float(self.feasibility_slack),
            "q": [float(v) for v in self.dual.q],
            "sigma": [float(v) for v in self.sigma.ravel()],
            "m": int(self.sigma.shape[0]),
            "threshold_t": int(self.dual.threshold_t),
            "alpha": float(self.dual.alpha),
            "iterations_used": int(self.dual.iterations_used),
            "fw_gap": float(self.dual.fw_gap),
        })

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        sigma = np.array(obj["sigma"], dtype=float)
        m = int(obj.get("m", round(math.sqrt(sigma.size))))
        sigma = sigma.reshape(m, m)
        dual = DualSolution(q=np.array(obj["q"], dtype=float), hk_value=float(obj["hk_value"]),
                            threshold_t=int(obj.get("threshold_t", -1)),
                            alpha=float(obj.get("alpha", float("nan"))), k=int(obj["k"]),
                            iterations_used=int(obj.get("iterations_used", 0)),
                            fw_gap=float(obj.get("fw_gap", float("nan"))))
        return cls(sigma=sigma, k=int(obj["k"]), kyfan_value=float(obj["kyfan_value"]),
                   feasibility_slack=float(obj.get("feasibility_slack", float("nan"))),
                   rescale_factor=float(obj["rescale_factor"]), eig=sym_eig(sigma), dual=dual,
                   gap=float(obj["gap"]))


def _as_matrix(A):
    return A.entries if isinstance(A, QueryMatrix) else np.atleast_2d(np.asarray(A, dtype=float))


def valid_thresholds(sigmas, k):
    """All ``t`` in ``[0, k-1]`` with ``s_t > sum_{i>t} s_i / (k-t) >= s_{t+1}``.

    Indices are 1-based in the inequality and ``s_0 = +inf``. For a sorted
    nonnegative spectrum exactly one ``t`` qualifies (in exact arithmetic).
    """
    s = np.asarray(sigmas, dtype=float)
    tails = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    scale = TIE_TOL * max(float(s[0]) if s.size else 0.0, 1e-300)
    out = []
    near_tie = False
    for t in range(k):
        avg = tails[t] / (k - t)
        upper = math.inf if t == 0 else s[t - 1]
        if abs(avg - s[t]) <= scale or abs(upper - avg) <= scale:
            near_tie = True
            break
        if upper > avg >= s[t]:
            out.append(t)
    if near_tie:
        return _exact_thresholds(s, k)
    return out


def _exact_thresholds(s, k):
    # rational arithmetic on the (exactly representable) float inputs
    fr = [Fraction(float(v)) for v in s]
    tail = sum(fr[k - 1:], Fraction(0))
    tails = {k - 1: tail}
    for t in range(k - 2, -1, -1):
        tail += fr[t]
        tails[t] = tail
    out = []
    for t in range(k):
        avg = tails[t] / (k - t)
        if (t == 0 or fr[t - 1] > avg) and avg >= fr[t]:
            out.append(t)
    return out


def find_threshold_t(sigmas, k):
    """The unique threshold index splitting a descending spectrum for ``h_k``.

    Examples
    --------
    >>> find_threshold_t([4.0, 1.0, 1.0], 2)
    1
    """
    s = np.asarray(sigmas, dtype=float)
    if s.ndim != 1 or not 1 <= k <= s.size:
        raise CovarianceError(f"k={k} out of range for a spectrum of length {s.size}")
    if np.any(np.diff(s) > 0):
        raise CovarianceError("spectrum must be sorted in descending order")
    if s.size and s[-1] < 0:
        raise CovarianceError("spectrum must be nonnegative")
    found = valid_thresholds(s, k)
    if found:
        return found[0]
    # Roundoff can break both strict comparisons at a tie; pick the t with the
    # smallest violation, h_k is continuous across such ties anyway.
    tails = np.concatenate([np.cumsum(s[::-1])[::-1], [0.0]])
    best, best_violation = 0, math.inf
    for t in range(k):
        avg = tails[t] / (k - t)
        upper = math.inf if t == 0 else s[t - 1]
        violation = max(0.0, avg - upper) + max(0.0, s[t] - avg)
        if violation < best_violation:
            best, best_violation = t, violation
    return best


def hk_spectrum(sigmas, k):
    """``h_k`` of a descending nonnegative spectrum.

    Returns ``(value, t, alpha, head, tail_term)`` where
    ``value = head + tail_term``, ``head = sum_{i<=t} sqrt(s_i)`` and
    ``tail_term = sqrt(k-t) * sqrt(sum_{i>t} s_i)``.
    """
    s = np.asarray(sigmas, dtype=float)
    t = find_threshold_t(s, k)
    tail = float(np.sum(s[t:]))
    head = float(np.sum(np.sqrt(s[:t])))
    tail_term = math.sqrt((k - t) * tail)
    return head + tail_term, t, tail / (k - t), head, tail_term


def h_k(S, k):
    """Evaluate ``h_k`` on a PSD matrix.

    Returns
    -------
    value : float
    t : int
        Threshold index from :func:`find_threshold_t`.
    alpha : float
        Tail average ``sum_{i>t} sigma_i / (k - t)``.
    """
    S = np.asarray(S, dtype=float)
    if not 1 <= k <= S.shape[0]:
        raise CovarianceError(f"k={k} out of range for dimension {S.shape[0]}")
    value, t, alpha, _, _ = hk_spectrum(psd_eig(S).values, k)
    return value, t, alpha


class _DualObjective:
    """``q -> h_k(B diag(q) B^T)`` with its gradient, one eigensolve per call."""

    def __init__(self, B, k):
        self.B = B
        self.k = k

    def value(self, q):
        vals = np.linalg.eigvalsh((self.B * q) @ self.B.T)[::-1]
        return hk_spectrum(np.maximum(vals, 0.0), self.k)[0]

    def evaluate(self, q):
        eig = psd_eig((self.B * q) @ self.B.T)
        vals = eig.values
        value, t, alpha, _, _ = hk_spectrum(vals, self.k)
        tail = alpha * (self.k - t)
        coef = np.empty_like(vals)
        with np.errstate(divide="ignore"):
            coef[:t] = 0.5 / np.sqrt(vals[:t])
            coef[t:] = 0.5 * math.sqrt(self.k - t) / math.sqrt(tail) if tail > 0 else np.inf
        proj = eig.vectors.T @ self.B
        # G shares eigenvectors with B Q B^T, so g_e = sum_i coef_i <u_i, b_e>^2
        grad = coef @ (proj * proj)
        return value, grad, t, alpha


def hk_supergradient(A, q, k):
    """Gradient of ``q -> h_k(A diag(q) A^T)``.

    ``g_e = a_e^T G a_e`` with ``G`` built from the eigenpairs ``(s_i, u_i)`` of
    ``A diag(q) A^T``::

        G = 1/2 sum_{i<=t} s_i^{-1/2} u_i u_i^T
            + sqrt(k-t)/2 (sum_{i>t} s_i)^{-1/2} sum_{i>t} u_i u_i^T

    Both coefficients coincide when an eigenvalue sits exactly at the tail
    average, so eigenvalue ties at the threshold give the same vector whatever
    basis the eigensolver picks for the tied eigenspace.
    """
    a = _as_matrix(A)
    q = np.asarray(q, dtype=float)
    if not np.any(a * q):
        raise CovarianceError("A diag(q) A^T is the zero matrix")
    _, grad, _, _ = _DualObjective(a, k).evaluate(q)
    if not np.all(np.isfinite(grad)):
        raise CovarianceError("A diag(q) A^T has rank below k; supergradient is unbounded")
    return grad


def _line_search(obj, q, d, gamma_max, base):
    res = minimize_scalar(lambda g: -obj.value(q + g * d), bounds=(0.0, gamma_max),
                          method="bounded", options={"xatol": 1e-10 * max(gamma_max, 1e-16)})
    best_gamma, best_val = float(res.x), -float(res.fun)
    end_val = obj.value(q + gamma_max * d)
    if end_val >= best_val:
        best_gamma, best_val = gamma_max, end_val
    if best_val < base:
        return 0.0, base
    return best_gamma, best_val


def dual_ascent(A, k, max_iters=2000, tol=1e-6, step="linesearch", q0=None, require_rank=True):
    """Maximize ``h_k(A diag(q) A^T)`` over the probability simplex.

    Parameters
    ----------
    A : QueryMatrix or array_like
        Workload of full row rank.
    k : int
        Ky Fan index, ``1 <= k <= m``.
    max_iters : int
        Iteration cap.
    tol : float
        Stop once the Frank-Wolfe gap ``max_e g_e - <q, g>`` is at most
        ``tol * h_k``.
    step : {"linesearch", "classic"}
        ``"linesearch"`` runs away-step Frank-Wolfe with exact line search;
        the objective never decreases. ``"classic"`` uses plain Frank-Wolfe
        steps of length ``2 / (iter + 2)`` (iterations counted from 1).
    q0 : array_like, optional
        Starting point, uniform by default.

    Returns
    -------
    DualSolution
    """
    a = _as_matrix(A)
    m, u = a.shape
    if k < 1 or k > m:
        raise CovarianceError(f"k must satisfy 1 <= k <= {m}, got {k}")
    if require_rank:
        r = int(np.linalg.matrix_rank(a))
        if r != m:
            raise CovarianceError(f"workload has rank {r} < {m} queries")
    obj = _DualObjective(a, k)
    q = np.full(u, 1.0 / u) if q0 is None else np.asarray(q0, dtype=float).copy()
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
        raise CovarianceError("starting point must lie on the simplex")

    value, grad, t, alpha = obj.evaluate(q)
    trace = [value]
    gap = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        if not np.all(np.isfinite(grad)):
            q = (1.0 - REGULARIZATION) * q + REGULARIZATION / u
            value, grad, t, alpha = obj.evaluate(q)
        inner = float(q @ grad)
        s = int(np.argmax(grad))  # ties resolve to the smallest column index
        gap = float(grad[s]) - inner
        if gap <= tol * value:
            it -= 1
            break
        if step == "classic":
            gamma = 2.0 / (it + 2.0)
            q = (1.0 - gamma) * q
            q[s] += gamma
            value, grad, t, alpha = obj.evaluate(q)
            trace.append(value)
            continue
        support = np.flatnonzero(q > 0)
        away = int(support[np.argmin(grad[support])])
        away_gap = inner - float(grad[away])
        is_away = not (gap >= away_gap or q[away] >= 1.0)
        if not is_away:
            d = -q.copy()
            d[s] += 1.0
            gamma_max = 1.0
        else:
            d = q.copy()
            d[away] -= 1.0
            gamma_max = q[away] / (1.0 - q[away])
        gamma, new_value = _line_search(obj, q, d, gamma_max, value)
        if gamma == 0.0:
            break
        q = q + gamma * d
        q[q < 0] = 0.0
        if is_away and gamma == gamma_max:
            q[away] = 0.0  # drop step
        q /= q.sum()
        value, grad, t, alpha = obj.evaluate(q)
        trace.append(value)

    return DualSolution(q=q, hk_value=float(value), threshold_t=int(t), alpha=float(alpha),
                        k=int(k), iterations_used=int(it), fw_gap=float(gap), trace=tuple(trace))


def _numerical_rank(vals):
    if vals.size == 0 or vals[0] <= 0:
        return 0
    return int(np.sum(vals > RANK_TOL * vals[0]))


def _constraint_values(a, sigma_eig):
    """``a_e^T Sigma^{-1} a_e`` for every column."""
    proj = sigma_eig.vectors.T @ a
    return (1.0 / sigma_eig.values) @ (proj * proj)


def primal_from_dual(A, dual, pad_fraction=0.0):
    """Build the noise covariance associated with a dual solution.

    With ``P = c Q``, ``c = h_k^2`` and the spectrum ``s_1 >= ... >= s_r > 0``
    of ``A P A^T`` (eigenvectors ``U``), set ``d_i = s_i`` for ``i <= t``,
    ``d_i = alpha`` for ``t < i <= r`` and ``d_i = (1 - pad_fraction) alpha``
    beyond the rank. Then ``Sigma = U diag(sqrt(d)) U^T`` has Ky Fan value
    ``h_k(A P A^T)``.

    Any ``pad_fraction`` in ``[0, 1)`` keeps ``Sigma`` a Lagrangian minimizer,
    but only ``0`` matches the dual gradient on the null space of ``A P A^T``;
    larger values let columns outside the support of ``q`` violate their
    constraints and the final rescaling then inflates the Ky Fan value.

    ``Sigma`` is finally multiplied by ``s = max_e a_e^T Sigma^{-1} a_e`` so that
    the tightest privacy constraint holds with equality; ``s`` is 1 at the
    exact optimum.
    """
    a = _as_matrix(A)
    m, u = a.shape
    k = dual.k
    q = np.asarray(dual.q, dtype=float)
    c = dual.hk_value**2
    if not c > 0:
        raise CovarianceError("dual solution has zero value")

    gamma = REGULARIZATION
    while True:
        eig = psd_eig(c * ((a * q) @ a.T))
        r = _numerical_rank(eig.values)
        if r >= k:
            break
        if gamma > 0.5:
            raise CovarianceError(f"workload rank is below k={k}")
        q = (1.0 - gamma) * q + gamma / u
        gamma *= 10.0

    vals = eig.values
    _, t, alpha, _, _ = hk_spectrum(vals, k)
    d = np.empty(m)
    d[:t] = vals[:t]
    d[t:r] = alpha
    d[r:] = alpha * (1.0 - pad_fraction)
    sqrt_d = np.sqrt(d)
    sigma = (eig.vectors * sqrt_d) @ eig.vectors.T
    sigma = 0.5 * (sigma + sigma.T)
    sig_eig = sym_eig(sigma)
    if sig_eig.values[-1] <= 0:
        raise SpectralError("reconstructed covariance is not positive definite")

    scale = float(np.max(_constraint_values(a, sig_eig)))
    sigma = scale * sigma
    sig_eig = EigenDecomposition(scale * sig_eig.values, sig_eig.vectors, m)
    slack = float(np.max(_constraint_values(a, sig_eig)))
    kyfan = float(np.sum(sig_eig.values[:k]))
    gap = (kyfan - dual.hk_value**2) / dual.hk_value**2
    return CovarianceDesign(sigma=sigma, k=int(k), kyfan_value=kyfan, feasibility_slack=slack,
                            rescale_factor=scale, eig=sig_eig, dual=dual, gap=float(gap))


def constraint_slack(A, sigma):
    """``max_e a_e^T Sigma^{-1} a_e``; the privacy condition asks for at most 1."""
    eig = sym_eig(sigma)
    if eig.values[-1] <= 0:
        raise SpectralError("covariance is not positive definite")
    return float(np.max(_constraint_values(_as_matrix(A), eig)))


def duality_gap(A, design):
    """Relative gap ``(||Sigma||_(k) - h_k^2) / h_k^2``; nonnegative up to roundoff
    for any feasible covariance."""
    hk2 = design.dual.hk_value**2
    return (design.kyfan_value - hk2) / hk2


def kyfan_k(n, epsilon):
    """``floor(epsilon * n)``, the number of top noise directions kept."""
    return int(math.floor(epsilon * n + 1e-12))


def optimize_covariance(A, n, epsilon, max_iters=2000, tol=1e-6, step="linesearch", k=None):
    """Noise covariance for a workload, database size bound ``n`` and privacy
    parameter ``epsilon``.

    Uses ``k = floor(epsilon * n)`` unless ``k`` is given explicitly. A workload of rank ``r < m`` is solved in
    its ``r``-dimensional column space (where it has full row rank) and ``k``
    is capped at ``r``; the covariance is then assembled in the full space.
    """
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    if k is None:
        k = kyfan_k(n, epsilon)
    if k < 1:
        raise CovarianceError(f"k must be >= 1 (got k={k}; epsilon * n < 1?)")
    a = A.entries
    left, svals, _ = np.linalg.svd(a, full_matrices=False)
    r = int(np.sum(svals > max(a.shape) * np.finfo(float).eps * svals[0])) if svals[0] > 0 else 0
    if r == 0:
        raise WorkloadError("workload is identically zero")
    k = min(k, r)
    reduced = a if r == A.m else left[:, :r].T @ a
    dual = dual_ascent(reduced, k, max_iters=max_iters, tol=tol, step=step, require_rank=False)
    return primal_from_dual(a, dual)
