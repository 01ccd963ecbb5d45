"""Dense symmetric-matrix kernels.

Every eigenvalue computation in the package goes through :func:`sym_eig`, which
returns eigenpairs sorted in non-increasing order with a fixed sign convention
on the eigenvectors so that results are reproducible run to run.
"""

from dataclasses import dataclass

import numpy as np

ASYMMETRY_TOL = 1e-12
PSD_TOL = 1e-9
JACOBI_SWEEPS = 100


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, largest eigenvalue first.

    Column ``i`` of ``vectors`` is paired with ``values[i]``.
    """

    values: np.ndarray
    vectors: np.ndarray
    source_dim: int

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def _check_symmetric(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if S.size and np.max(np.abs(S - S.T)) > ASYMMETRY_TOL * scale:
        raise SpectralError("matrix is not symmetric")
    return 0.5 * (S + S.T)


def jacobi_eigh(S, tol=1e-12, max_sweeps=JACOBI_SWEEPS):
    """Cyclic Jacobi eigensolver.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius norm
    drops below ``tol * ||S||_F``. Returns unsorted ``(values, vectors, sweeps)``.

    Raises
    ------
    SpectralError
        If the threshold is not met within ``max_sweeps`` sweeps.
    """
    a = np.array(S, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * np.linalg.norm(a)
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= threshold:
            return np.diag(a).copy(), v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    raise SpectralError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def _fix_signs(vectors):
    # first entry that is clearly nonzero gets a positive sign
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.flatnonzero(np.abs(col) > 1e-12)
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def sym_eig(S, method="lapack"):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    S : array_like
        Symmetric real matrix (asymmetry up to 1e-12 relative is tolerated).
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls ``numpy.linalg.eigh``; ``"jacobi"`` uses the
        in-house cyclic Jacobi solver.

    Returns
    -------
    EigenDecomposition
    """
    S = _check_symmetric(S)
    n = S.shape[0]
    if n == 0:
        return EigenDecomposition(np.zeros(0), np.zeros((0, 0)), 0)
    if method == "lapack":
        vals, vecs = np.linalg.eigh(S)
    elif method == "jacobi":
        vals, vecs, _ = jacobi_eigh(S)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(-vals, kind="stable")
    return EigenDecomposition(vals[order], _fix_signs(vecs[:, order]), n)


def psd_eig(S, method="lapack"):
    """Like :func:`sym_eig` but for PSD input; small negative eigenvalues are
    clamped to zero, anything below ``-1e-9 * lambda_max`` is an error."""
    eig = sym_eig(S, method=method)
    vals = eig.values
    if vals.size:
        top = max(float(vals[0]), 0.0)
        if vals[-1] < -PSD_TOL * top or (top == 0.0 and vals[-1] < 0.0):
            raise SpectralError(f"matrix is not PSD (eigenvalue {vals[-1]:.3e})")
        vals = np.maximum(vals, 0.0)
    return EigenDecomposition(vals, eig.vectors, eig.source_dim)


def ky_fan_norm(S, k):
    """Sum of the ``k`` largest eigenvalues of a PSD matrix."""
    S = np.asarray(S, dtype=float)
    if not 1 <= k <= S.shape[0]:
        raise SpectralError(f"k={k} out of range for dimension {S.shape[0]}")
    return float(np.sum(psd_eig(S).values[:k]))


def trace_norm(M):
    """Nuclear norm: the sum of singular values, via the eigenvalues of the
    smaller Gram matrix."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    gram = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    vals = np.maximum(sym_eig(gram).values, 0.0)
    return float(np.sum(np.sqrt(vals)))


def sigma_min(M):
    """Smallest singular value ``min ||Mx|| / ||x||`` over the columns of M.

    A matrix with more columns than rows has a nontrivial kernel, so the
    result is exactly zero in that case.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    rows, cols = M.shape
    if cols < 1:
        raise SpectralError("sigma_min needs at least one column")
    if cols > rows:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[-1])


def psd_power(S, p, eig=None):
    """Matrix power ``V diag(lambda**p) V^T`` of a PSD matrix.

    Negative powers require ``lambda_min >= 1e-12 * lambda_max``.
    """
    if eig is None:
        eig = psd_eig(S)
    vals = eig.values
    if p < 0:
        if vals.size == 0 or vals[-1] <= 0 or vals[-1] < 1e-12 * vals[0]:
            raise SpectralError("matrix too close to singular for a negative power")
        powered = vals**p
    elif p == 0.5:
        powered = np.sqrt(vals)
    else:
        powered = vals**p
    out = (eig.vectors * powered) @ eig.vectors.T
    return 0.5 * (out + out.T)
