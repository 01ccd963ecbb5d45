"""
Small databases: projection against plain Gaussian noise
========================================================

When the database is much smaller than the number of queries, the answer
vector is constrained to a small polytope, and projecting onto it removes
most of the noise. We compare the error of the projection mechanism with the
error of independent Gaussian noise on every query for a few database sizes.
"""

from dpwo import BenchmarkConfig, gen_random_counting, run_benchmark

A = gen_random_counting(200, 50, 0.5, seed=9)
print(f"{'n':>4} {'k':>3} {'projection':>11} {'plain':>9} {'ratio':>7} {'bound':>8}")
for n in (2, 5, 10, 20):
    report = run_benchmark(BenchmarkConfig(workload=A, n=n, epsilon=1.0, delta=1e-6, seed=0,
                                           trials=200, lower_bound="none"))
    proj = report.projection_error.rmse_per_query
    plain = report.plain_gaussian_error.rmse_per_query
    print(f"{n:>4} {report.instance['k']:>3} {proj:>11.3f} {plain:>9.3f} "
          f"{proj / plain:>7.3f} {report.theory_bound:>8.3f}")

# The plain Gaussian error does not depend on n. The projection error grows
# with n (k = floor(eps n) directions are kept unprojected) and stays well
# below the plain error while n is small compared to m. The last column is
# the constant-free bound, so projection / bound is the empirical constant.
