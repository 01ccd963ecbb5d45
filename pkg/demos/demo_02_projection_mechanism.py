"""
One run of the projection mechanism
===================================

Noisy answers are split along the top-k eigenvectors of the noise
covariance. The top part is kept as is. The rest is replaced by its least
squares fit inside the set of answer vectors a database of size n can
produce, which is cheap to compute with Frank-Wolfe.
"""

import numpy as np

from dpwo import PrivacyParams, gen_histogram, gen_random_counting, optimize_covariance
from dpwo.mechanism import run_projection_mechanism, support_function_residual, top_k_projector

A = gen_random_counting(40, 30, 0.5, seed=1)
n = 6
pp = PrivacyParams(epsilon=1.0, delta=1e-6)
x = gen_histogram(A.u, n, "uniform_random", seed=1)
design = optimize_covariance(A, n, pp.epsilon)
print("noise multiplier c =", round(pp.c, 4), " k =", design.k)

out = run_projection_mechanism(A, x, design, pp, seed=0)
print("rmse of noisy answers    :", round(out.noisy_rmse, 3))
print("rmse after the projection:", round(out.projected_rmse, 3))
print("Frank-Wolfe gap          :", f"{out.fw_residual:.2e}")

# %%
# The error splits into two orthogonal pieces.
truth = A.answer(x)
P = top_k_projector(design)
comp = np.eye(A.m) - P
top = np.sum((P @ (out.noisy - truth)) ** 2)
rest = np.sum((out.projected - comp @ truth) ** 2)
print("\n||final - Ax||^2 =", round(float(np.sum((out.final - truth) ** 2)), 3),
      "=", round(float(top), 3), "+", round(float(rest), 3))

# The regression part of the error is at most four times the smaller of two
# quantities: the raw noise energy left in the complement, and n times the
# largest correlation of that noise with a projected column.
w = out.noise
print("noise energy in the complement:", round(float(np.sum((comp @ w) ** 2)), 3))
print("n * max_e |<(I-P)w, a_e>|     :", round(float(n * support_function_residual(w, A.entries, comp)), 3))

# %%
# With the noise switched off (a test hook, not private) the true answers
# come back, up to the Frank-Wolfe tolerance.
quiet = run_projection_mechanism(A, x, design, pp, seed=0, noise_scale_override=0.0)
print("\nzero-noise squared error:", f"{np.sum((quiet.final - truth) ** 2):.2e}")
