"""
Designing the noise covariance
==============================

The projection mechanism adds Gaussian noise whose covariance Sigma must
satisfy a_e^T Sigma^-1 a_e <= 1 for every column a_e of the workload. Among
those, we want the one with the smallest sum of its k largest eigenvalues.
This script solves that program for two workloads and reads off the
certificate that comes with the solution.
"""

import numpy as np

from dpwo import QueryMatrix, gen_interval_queries, optimize_covariance

# For the identity workload the answer is known in closed form: Sigma = I,
# so the Ky Fan k-norm equals k.
design = optimize_covariance(QueryMatrix(np.eye(8)), n=6, epsilon=0.5)
print("identity: k =", design.k, " kyfan =", round(design.kyfan_value, 6))

# The solver works on the dual side: a probability vector q over the columns.
# Squaring the dual value h_k gives a lower bound on the primal value, and the
# relative difference is the reported gap.
print("identity: h_k^2 =", round(design.hk_value ** 2, 6), " gap =", design.gap)

# %%
# Interval queries on a line of 12 points: 78 queries, far from isotropic.
A = gen_interval_queries(12)
design = optimize_covariance(A, n=8, epsilon=0.5)
print("\nintervals: m =", A.m, " u =", A.u, " k =", design.k)
print("kyfan =", round(design.kyfan_value, 4), " h_k^2 =", round(design.hk_value ** 2, 4))
print("relative gap =", f"{design.gap:.2e}", " dual iterations =", design.dual.iterations_used)

# The eigenvalues of Sigma fall off quickly, so most noise energy sits in a
# few directions. The mechanism later removes exactly those directions.
print("top eigenvalues of Sigma:", np.round(design.eig.values[:6], 3))

# Every column is exactly on or inside the constraint ellipsoid.
a = A.entries
quad = np.einsum("ie,ie->e", a, np.linalg.solve(design.sigma, a))
print("max a^T Sigma^-1 a =", quad.max())

# Columns that carry dual weight are the tight ones.
support = np.flatnonzero(design.dual.q > 1e-6)
print("columns with dual weight:", support.tolist())
print("their constraint values:", np.round(quad[support], 6).tolist())
