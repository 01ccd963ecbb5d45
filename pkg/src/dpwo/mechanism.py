"""Generalized Gaussian mechanism and the projection mechanism.

The projection mechanism adds correlated Gaussian noise ``w ~ N(0, c^2 Sigma)``
to the true answers, keeps the noisy answers unchanged inside the span ``P`` of
the top-``k`` eigenvectors of ``Sigma``, and replaces the remaining component
by its least-squares fit inside ``n (I - P) K_A``, where ``K_A`` is the
symmetric convex hull of the workload columns. Since the output only
post-processes the Gaussian mechanism it inherits its privacy guarantee.

The least-squares step is solved with pairwise Frank-Wolfe over the ``2u``
vertices ``±n (I - P) a_e``, working in vertex-weight coordinates so that every
iterate is an explicit convex combination, and vectorized across independent
noise draws.
"""

import json
import math
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .workload import Histogram, QueryMatrix, WorkloadError

FW_MAX_ITERS = 2000
FW_REL_TOL = 1e-6


class MechanismError(ValueError):
    pass


def noise_multiplier(epsilon, delta):
    """``(0.5 sqrt(eps) + sqrt(2 ln(1/delta))) / eps``.

    >>> round(noise_multiplier(1.0, math.exp(-2.0)), 12)
    2.5
    """
    if not epsilon > 0:
        raise MechanismError(f"epsilon must be positive, got {epsilon}")
    if not 0 < delta < 1:
        raise MechanismError(f"delta must lie in (0, 1), got {delta}")
    return (0.5 * math.sqrt(epsilon) + math.sqrt(2.0 * math.log(1.0 / delta))) / epsilon


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float

    @property
    def c(self):
        return noise_multiplier(self.epsilon, self.delta)

    def __post_init__(self):
        noise_multiplier(self.epsilon, self.delta)


@dataclass(frozen=True)
class MechanismOutput:
    noisy: np.ndarray
    projected: np.ndarray
    final: np.ndarray
    noise: np.ndarray
    projector_rank: int
    fw_residual: float
    seed: int
    noisy_rmse: float = float("nan")
    projected_rmse: float = float("nan")
    degenerate_k: bool = False

    def to_json(self, emit_intermediates=False):
        obj = {
            "final": [float(v) for v in self.final],
            "noisy_rmse": float(self.noisy_rmse),
            "projected_rmse": float(self.projected_rmse),
            "projector_rank": int(self.projector_rank),
            "fw_residual": float(self.fw_residual),
            "seed": int(self.seed),
        }
        if self.degenerate_k:
            obj["degenerate_k"] = True
        if emit_intermediates:
            obj["w"] = [float(v) for v in self.noise]
            obj["ybar"] = [float(v) for v in self.projected]
        return json.dumps(obj)


def noise_rng(seed, stream=None):
    """Counter-based (Philox) generator for ``seed``; ``stream`` selects an
    independent substream, e.g. one per histogram or per batch."""
    entropy = [int(seed)] if stream is None else [int(seed), int(stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def sample_gaussian(sigma, scale_c, seed, size=None, stream=None):
    """Draw ``w = scale_c * V diag(sqrt(lambda)) z`` with ``z`` standard normal.

    ``sigma`` may be a PSD matrix or an :class:`~dpwo.spectral.EigenDecomposition`.
    With ``size=None`` a single vector is returned, otherwise an array of
    shape ``(size, m)``.
    """
    from .spectral import EigenDecomposition, psd_eig

    eig = sigma if isinstance(sigma, EigenDecomposition) else psd_eig(sigma)
    m = eig.source_dim
    rng = noise_rng(seed, stream)
    z = rng.standard_normal((1 if size is None else size, m))
    factor = eig.vectors * np.sqrt(np.maximum(eig.values, 0.0))
    w = scale_c * (z @ factor.T)
    return w[0] if size is None else w


def top_k_projector(design, k=None):
    """Orthogonal projector onto the top-``k`` eigenvectors of the design
    covariance (``k`` defaults to ``design.k``)."""
    eig = design.eig if hasattr(design, "eig") else design
    k = design.k if k is None else k
    if not 0 <= k <= eig.source_dim:
        raise MechanismError(f"k={k} out of range for dimension {eig.source_dim}")
    top = eig.vectors[:, :k]
    proj = top @ top.T
    return 0.5 * (proj + proj.T)


LMOResult = namedtuple("LMOResult", ["vertex", "value", "column", "sign"])


def _generators(A, proj_complement):
    a = A.entries if isinstance(A, QueryMatrix) else np.asarray(A, dtype=float)
    if proj_complement is None:
        return a
    return np.asarray(proj_complement, dtype=float) @ a


def lmo_polytope(A, proj_complement, g, n):
    """Maximize ``<g, z>`` over ``z`` in ``n (I - P) K_A``.

    The maximum is attained at a vertex ``n * sign * (I - P) a_e``. Ties go to
    the smallest column index and to ``sign = +1``.
    """
    V = _generators(A, proj_complement)
    scores = np.asarray(g, dtype=float) @ V
    e = int(np.argmax(np.abs(scores)))
    sign = 1 if scores[e] >= 0 else -1
    return LMOResult(n * sign * V[:, e], n * abs(float(scores[e])), e, sign)


def support_function_residual(w, A, proj_complement=None):
    """``max_e |<(I - P) w, a_e>|``, the polar norm of ``(I-P) w`` for ``(I-P) K_A``.

    Accepts a single vector or a batch of row vectors.
    """
    V = _generators(A, proj_complement)
    vals = np.abs(np.asarray(w, dtype=float) @ V)
    return vals.max(axis=-1)


@dataclass(frozen=True)
class ProjectionResult:
    ybar: np.ndarray
    gap: np.ndarray
    weights: np.ndarray
    iterations: int


def project_batch(targets, A, proj_complement, n, max_iters=FW_MAX_ITERS, tol=None,
                  method="pairwise"):
    """Least-squares projection of each row of ``targets`` onto ``n (I-P) K_A``.

    Parameters
    ----------
    targets : ndarray, shape (B, m)
    A : QueryMatrix or ndarray
    proj_complement : ndarray or None
        ``I - P``; ``None`` means the identity.
    n : int
        Database size bound (polytope scale).
    max_iters : int
    tol : float, optional
        Stop a row once its Frank-Wolfe duality gap is at most ``tol``.
        Defaults to ``1e-6 * n^2 * max_e ||a_e||^2``.
    method : {"pairwise", "classic"}
        Pairwise steps move mass from the worst active vertex to the
        Frank-Wolfe vertex with an exact line search; classic steps use
        ``2 / (iter + 2)``.

    Returns
    -------
    ProjectionResult
        ``weights`` has shape ``(B, 2u)``: convex weights on the vertices
        ``+n(I-P)a_1 .. +n(I-P)a_u, -n(I-P)a_1 .. -n(I-P)a_u``.
        ``gap[b]`` bounds ``f(ybar_b) - min f`` for ``f(z) = ||z - target_b||^2``,
        hence also ``||ybar_b - z*_b||^2``.
    """
    a = A.entries if isinstance(A, QueryMatrix) else np.asarray(A, dtype=float)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    B = targets.shape[0]
    u = a.shape[1]
    if tol is None:
        tol = FW_REL_TOL * n * n * float(np.max(np.sum(a * a, axis=0)))
    V = _generators(a, proj_complement)
    atoms = n * np.hstack([V, -V])
    H = atoms.T @ atoms
    diagH = np.diag(H)
    lin = targets @ atoms
    rows = np.arange(B)

    w = np.zeros((B, 2 * u))
    w[:, 0] = 0.5
    w[:, u] = 0.5
    Hw = w @ H
    gap = np.full(B, np.inf)
    active = np.ones(B, dtype=bool)
    it = 0
    for it in range(max_iters + 1):
        if it and it % 200 == 0:
            Hw = w @ H
        r = Hw - lin
        s = np.argmin(r, axis=1)
        r_s = r[rows, s]
        gap = 2.0 * (np.einsum("ij,ij->i", w, r) - r_s)
        gap = np.maximum(gap, 0.0)
        active = gap > tol
        if not active.any() or it == max_iters:
            break
        idx = rows[active]
        s_a = s[active]
        if method == "classic":
            gamma = 2.0 / (it + 2.0)
            w[idx] *= 1.0 - gamma
            w[idx, s_a] += gamma
            Hw[idx] = (1.0 - gamma) * Hw[idx] + gamma * H[s_a]
            continue
        r_act = r[idx]
        masked = np.where(w[idx] > 0, r_act, -np.inf)
        away = np.argmax(masked, axis=1)
        r_away = r_act[np.arange(idx.size), away]
        curv = diagH[s_a] + diagH[away] - 2.0 * H[s_a, away]
        w_away = w[idx, away]
        with np.errstate(divide="ignore", invalid="ignore"):
            gamma = np.where(curv > 0, (r_away - r_s[active]) / curv, np.inf)
        gamma = np.clip(gamma, 0.0, w_away)
        drop = gamma >= w_away
        w[idx, s_a] += gamma
        w[idx, away] = np.where(drop, 0.0, w_away - gamma)
        Hw[idx] += gamma[:, None] * (H[s_a] - H[away])

    if method == "pairwise":
        tt = np.einsum("ij,ij->i", targets, targets)
        for b in rows[gap > tol]:
            wb, gb = _min_norm_point(H, lin[b], tt[b], w[b], tol)
            if gb < gap[b]:
                w[b], gap[b] = wb, gb

    ybar = w @ atoms.T
    return ProjectionResult(ybar=ybar, gap=gap, weights=w, iterations=it)


def _min_norm_point(H, lin, tt, w0, tol, max_major=None):
    """Wolfe's minimum-norm-point method for one row, in weight coordinates.

    Works on the shifted atoms ``p_j = atom_j - target`` through their Gram
    matrix ``G = H - lin 1^T - 1 lin^T + tt``. The corral starts at the best
    vertex of the warm start ``w0``. Returns ``(weights, gap)`` with ``gap``
    the Frank-Wolfe duality gap of ``||z - target||^2``.
    """
    G = H - lin[:, None] - lin[None, :] + tt
    N = G.shape[0]
    max_major = max_major or 10 * N + 100
    start = int(np.argmin(np.where(w0 > 0, np.diag(G), np.inf)))
    S = [start]
    lam = np.ones(1)
    gap = np.inf
    for _ in range(max_major):
        Gx = G[:, S] @ lam
        xx = float(lam @ Gx[S])
        j = int(np.argmin(Gx))
        gap = max(2.0 * (xx - Gx[j]), 0.0)
        if gap <= tol or j in S:
            break
        S.append(j)
        lam = np.append(lam, 0.0)
        while True:
            k = len(S)
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = G[np.ix_(S, S)]
            kkt[:k, k] = kkt[k, :k] = 1.0
            rhs = np.zeros(k + 1)
            rhs[k] = 1.0
            mu = np.linalg.lstsq(kkt, rhs, rcond=None)[0][:k]
            if np.all(mu > 1e-14):
                lam = mu
                break
            neg = mu <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            lam = lam + theta * (mu - lam)
            keep = lam > 1e-14
            keep[int(np.argmin(np.where(neg, ratios, np.inf)))] = False
            if not keep.any():
                keep[int(np.argmax(lam))] = True
            S = [e for e, kp in zip(S, keep) if kp]
            lam = lam[keep] / lam[keep].sum()
    w = np.zeros(N)
    w[S] = lam
    Gx = G[:, S] @ lam
    gap = max(2.0 * (float(lam @ Gx[S]) - float(Gx.min())), 0.0)
    return w, gap


def frank_wolfe_project(target, A, proj_complement, n, max_iters=FW_MAX_ITERS, tol=None,
                        method="pairwise"):
    """Project a single vector; returns ``(ybar, residual_gap)``."""
    res = project_batch(np.asarray(target, dtype=float)[None, :], A, proj_complement, n,
                        max_iters=max_iters, tol=tol, method=method)
    return res.ybar[0], float(res.gap[0])


def _check_histogram(A, x):
    if not isinstance(x, Histogram):
        counts = np.asarray(x)
        x = Histogram(counts, int(np.sum(counts)))
    if x.u != A.u:
        raise WorkloadError(f"histogram has {x.u} entries, workload has {A.u} columns")
    return x


@dataclass(frozen=True)
class TrialBatch:
    """Vectorized result of many independent mechanism runs on one histogram."""

    truth: np.ndarray
    noise: np.ndarray
    final: np.ndarray
    ybar: np.ndarray
    fw_gap: np.ndarray
    projector: np.ndarray

    @property
    def squared_errors(self):
        diff = self.final - self.truth
        return np.einsum("ij,ij->i", diff, diff)


def projection_trials(A, x, design, pp, trials, seed, stream=None, noise_scale_override=None,
                      max_iters=FW_MAX_ITERS, tol=None, method="pairwise", k=None):
    """Run the projection mechanism ``trials`` times with independent noise.

    Row ``i`` of the noise is the ``i``-th standard-normal draw of the
    ``(seed, stream)`` generator, so trial 0 coincides with
    :func:`run_projection_mechanism` for the same seed and stream.
    ``k`` overrides the projector rank (default ``design.k``); ``k = 0``
    skips the split and regresses all of the noisy answer onto ``n K_A``.
    """
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    x = _check_histogram(A, x)
    if design.feasibility_slack > 1.0 + 1e-9:
        raise MechanismError(f"design violates the privacy constraint (slack {design.feasibility_slack})")
    c = pp.c if noise_scale_override is None else float(noise_scale_override)
    truth = A.entries @ x.counts.astype(float)
    w = sample_gaussian(design.eig, c, seed, size=trials, stream=stream)
    noisy = truth + w
    proj = top_k_projector(design, k)
    comp = np.eye(A.m) - proj
    res = project_batch(noisy @ comp.T, A, comp, x.n, max_iters=max_iters, tol=tol, method=method)
    final = noisy @ proj.T + res.ybar
    return TrialBatch(truth=truth, noise=w, final=final, ybar=res.ybar, fw_gap=res.gap,
                      projector=proj)


def run_projection_mechanism(A, x, design, pp, seed, noise_scale_override=None,
                             max_iters=FW_MAX_ITERS, tol=None, stream=None, method="pairwise",
                             k=None):
    """One run of the projection mechanism on histogram ``x``.

    ``noise_scale_override`` replaces the calibrated multiplier ``c`` and is
    meant for tests only: any value other than ``c`` voids the privacy
    guarantee. ``k`` overrides the projector rank; ``k = 0`` (for
    ``epsilon * n < 1``) runs pure regression and sets ``degenerate_k``.

    Returns
    -------
    MechanismOutput
    """
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    batch = projection_trials(A, x, design, pp, 1, seed, stream=stream,
                              noise_scale_override=noise_scale_override,
                              max_iters=max_iters, tol=tol, method=method, k=k)
    k = design.k if k is None else int(k)
    truth = batch.truth
    noisy = truth + batch.noise[0]
    final = batch.final[0]
    return MechanismOutput(
        noisy=noisy, projected=batch.ybar[0], final=final, noise=batch.noise[0],
        projector_rank=k, fw_residual=float(batch.fw_gap[0]), seed=int(seed),
        noisy_rmse=float(np.sqrt(np.mean((noisy - truth) ** 2))),
        projected_rmse=float(np.sqrt(np.mean((final - truth) ** 2))),
        degenerate_k=k == 0,
    )


def plain_gaussian_sigma(A):
    """Isotropic covariance ``max_e ||a_e||^2 * I``, feasible for every column."""
    a = A.entries if isinstance(A, QueryMatrix) else np.asarray(A, dtype=float)
    return float(np.max(np.sum(a * a, axis=0))) * np.eye(a.shape[0])


def plain_gaussian_trials(A, x, pp, trials, seed, stream=None, noise_scale_override=None):
    """Noisy answers ``Ax + w`` for ``trials`` independent isotropic draws."""
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    x = _check_histogram(A, x)
    c = pp.c if noise_scale_override is None else float(noise_scale_override)
    scale = math.sqrt(A.max_column_norm_sq())
    rng = noise_rng(seed, stream)
    w = (c * scale) * rng.standard_normal((trials, A.m))
    truth = A.entries @ x.counts.astype(float)
    return truth, w


def run_plain_gaussian(A, x, pp, seed, noise_scale_override=None, stream=None):
    """Baseline: independent Gaussian noise of std ``c * max_e ||a_e||`` per query."""
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    truth, w = plain_gaussian_trials(A, x, pp, 1, seed, stream=stream,
                                     noise_scale_override=noise_scale_override)
    noisy = truth + w[0]
    rmse = float(np.sqrt(np.mean(w[0] ** 2)))
    return MechanismOutput(noisy=noisy, projected=np.zeros(0), final=noisy, noise=w[0],
                           projector_rank=0, fw_residual=0.0, seed=int(seed),
                           noisy_rmse=rmse, projected_rmse=rmse)
