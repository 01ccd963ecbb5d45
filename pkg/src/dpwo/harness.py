"""Monte Carlo error estimation and end-to-end benchmarks.

The error of a mechanism is a supremum over all databases of size at most
``n``; here it is approximated by a finite set of histograms (point masses,
which are the extreme points of the scaled l1 ball, plus a few random ones
for large universes). The approximation never exceeds the true supremum.

Every histogram gets its own noise stream derived from ``(seed, index)``, so
results do not depend on how evaluations are scheduled across threads.
"""

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .covariance import optimize_covariance
from .lower_bound import (MAX_BRUTEFORCE_UNIVERSE, dual_certificate_bound, spec_lb_bruteforce,
                          spec_lb_greedy)
from .mechanism import (PrivacyParams, noise_multiplier, plain_gaussian_trials,
                        projection_trials)
from .workload import Histogram, QueryMatrix, gen_histogram

POINT_MASS_LIMIT = 64
RANDOM_HISTOGRAMS = 16
Z95 = 1.959963984540054

CSV_FIELDS = (
    "m", "u", "n", "epsilon", "delta", "k", "seed", "trials",
    "projection_rmse", "projection_ci", "plain_gaussian_rmse", "plain_gaussian_ci",
    "theory_bound", "empirical_constant", "kyfan_value", "hk_value", "gap",
    "spec_lb", "spec_lb_method", "active_case", "case1_raw", "case2",
)


def thread_count():
    """Worker threads for trial evaluation, capped by ``DPWO_THREADS``."""
    env = os.environ.get("DPWO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))


class ProjectionMechanism:
    """Handle running the projection mechanism for a fixed design."""

    name = "projection"

    def __init__(self, design, pp, noise_scale_override=None, max_iters=2000, tol=None):
        self.design = design
        self.pp = pp
        self.noise_scale_override = noise_scale_override
        self.max_iters = max_iters
        self.tol = tol

    def squared_errors(self, A, x, trials, seed, stream):
        batch = projection_trials(A, x, self.design, self.pp, trials, seed, stream=stream,
                                  noise_scale_override=self.noise_scale_override,
                                  max_iters=self.max_iters, tol=self.tol)
        return batch.squared_errors


class PlainGaussianMechanism:
    """Handle for the isotropic Gaussian baseline."""

    name = "plain_gaussian"

    def __init__(self, pp, noise_scale_override=None):
        self.pp = pp
        self.noise_scale_override = noise_scale_override

    def squared_errors(self, A, x, trials, seed, stream):
        _, w = plain_gaussian_trials(A, x, self.pp, trials, seed, stream=stream,
                                     noise_scale_override=self.noise_scale_override)
        return np.einsum("ij,ij->i", w, w)


@dataclass
class ErrorEstimate:
    rmse_per_query: float
    trials: int
    per_histogram: list
    worst_histogram_id: int
    ci_halfwidth: float
    squared_errors: list = field(default=None, repr=False)

    def to_dict(self):
        return {
            "rmse_per_query": float(self.rmse_per_query),
            "trials": int(self.trials),
            "per_histogram": [[int(h), float(r)] for h, r in self.per_histogram],
            "worst_histogram_id": int(self.worst_histogram_id),
            "ci_halfwidth": float(self.ci_halfwidth),
        }


def default_histogram_set(u, n, seed=0):
    """Point masses ``n e_j`` on every element when ``u <= 64``; otherwise 64
    random point masses and 16 uniformly random histograms."""
    if u <= POINT_MASS_LIMIT:
        return [gen_histogram(u, n, "point_mass", element=j) for j in range(u)]
    rng = np.random.default_rng([int(seed), 1])
    elements = np.sort(rng.choice(u, size=POINT_MASS_LIMIT, replace=False))
    out = [gen_histogram(u, n, "point_mass", element=int(j)) for j in elements]
    out += [gen_histogram(u, n, "uniform_random", seed=[int(seed), 2, i])
            for i in range(RANDOM_HISTOGRAMS)]
    return out


def _rmse_and_halfwidth(sq, m):
    per_query = sq / m
    mean = float(np.mean(per_query))
    rmse = math.sqrt(mean)
    if len(per_query) < 2 or rmse == 0.0:
        return rmse, 0.0
    se = float(np.std(per_query, ddof=1)) / math.sqrt(len(per_query))
    return rmse, Z95 * se / (2.0 * rmse)


def estimate_error(mech, A, n, trials, histogram_set=None, seed=0, threads=None):
    """Estimate ``sup_x (E ||Ax - M(x)||^2 / m)^{1/2}`` over a finite histogram set.

    Parameters
    ----------
    mech : ProjectionMechanism or PlainGaussianMechanism
        Anything with a ``squared_errors(A, x, trials, seed, stream)`` method.
    A : QueryMatrix
    n : int
    trials : int
        Independent runs per histogram.
    histogram_set : list of Histogram, optional
        Defaults to :func:`default_histogram_set`.
    seed : int
    threads : int, optional
        Defaults to :func:`thread_count`.

    Returns
    -------
    ErrorEstimate
        ``ci_halfwidth`` is the delta-method 95% half-width of the worst
        histogram's RMSE.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    if histogram_set is None:
        histogram_set = default_histogram_set(A.u, n, seed)
    for x in histogram_set:
        if x.size > n:
            raise ValueError(f"histogram of size {x.size} exceeds n={n}")

    def run(i):
        x = histogram_set[i]
        if x.n != n:
            x = Histogram(x.counts, n)
        return mech.squared_errors(A, x, trials, seed, i)

    workers = threads or thread_count()
    idx = range(len(histogram_set))
    if workers > 1 and len(histogram_set) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sq = list(pool.map(run, idx))
    else:
        sq = [run(i) for i in idx]

    stats = [_rmse_and_halfwidth(s, A.m) for s in sq]
    rmses = [r for r, _ in stats]
    worst = int(np.argmax(rmses))
    return ErrorEstimate(rmse_per_query=rmses[worst], trials=int(trials),
                         per_histogram=[(i, r) for i, r in enumerate(rmses)],
                         worst_histogram_id=worst, ci_halfwidth=stats[worst][1],
                         squared_errors=sq)


def theory_bound(c, m, sigma_eigs, k, u, delta):
    """Constant-free error bound for the projection mechanism:
    ``sqrt(c^2/m * sum_{i<=k} sigma_i) * (1 + sqrt(log u) / sqrt(log 1/delta))^{1/2}``."""
    top = float(np.sum(np.asarray(sigma_eigs)[:k]))
    factor = 1.0 + math.sqrt(math.log(u)) / math.sqrt(math.log(1.0 / delta))
    return math.sqrt(c * c / m * top) * math.sqrt(factor)


@dataclass
class BenchmarkConfig:
    workload: QueryMatrix
    n: int
    epsilon: float
    delta: float
    seed: int = 0
    trials: int = 1000
    max_iters: int = 2000
    tol: float = 1e-6
    fw_max_iters: int = 2000
    fw_tol: float = None
    histograms: list = None
    lower_bound: str = "auto"


@dataclass
class BenchmarkReport:
    instance: dict
    projection_error: ErrorEstimate
    plain_gaussian_error: ErrorEstimate
    theory_bound: float
    kyfan_value: float
    hk_value: float
    gap: float
    certificate: object
    wall_times: dict = field(default_factory=dict)

    @property
    def empirical_constant(self):
        return self.projection_error.rmse_per_query / self.theory_bound

    def to_dict(self, include_timings=False):
        out = {
            "instance": dict(self.instance),
            "projection_error": self.projection_error.to_dict(),
            "plain_gaussian_error": self.plain_gaussian_error.to_dict(),
            "theory_bound": float(self.theory_bound),
            "empirical_constant": float(self.empirical_constant),
            "kyfan_value": float(self.kyfan_value),
            "hk_value": float(self.hk_value),
            "gap": float(self.gap),
            "certificate": self.certificate.to_dict(),
        }
        if include_timings:
            out["wall_times"] = {k: float(v) for k, v in self.wall_times.items()}
        return out

    def scalar_row(self):
        cert = self.certificate.to_dict()
        inst = self.instance
        return {
            "m": inst["m"], "u": inst["u"], "n": inst["n"], "epsilon": inst["epsilon"],
            "delta": inst["delta"], "k": inst["k"], "seed": inst["seed"], "trials": inst["trials"],
            "projection_rmse": self.projection_error.rmse_per_query,
            "projection_ci": self.projection_error.ci_halfwidth,
            "plain_gaussian_rmse": self.plain_gaussian_error.rmse_per_query,
            "plain_gaussian_ci": self.plain_gaussian_error.ci_halfwidth,
            "theory_bound": self.theory_bound,
            "empirical_constant": self.empirical_constant,
            "kyfan_value": self.kyfan_value, "hk_value": self.hk_value, "gap": self.gap,
            "spec_lb": cert["value"], "spec_lb_method": cert["method"],
            "active_case": cert["case"], "case1_raw": cert["case1_raw"], "case2": cert["case2"],
        }


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {exc}")
        self.stage = stage


def run_benchmark(config):
    """Optimize the covariance, evaluate both mechanisms and compute the
    lower-bound certificate. Output content depends only on ``config``."""
    A = config.workload if isinstance(config.workload, QueryMatrix) else QueryMatrix(config.workload)
    times = {}

    def stage(name, fn):
        start = time.perf_counter()
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        finally:
            times[name] = time.perf_counter() - start

    pp = stage("params", lambda: PrivacyParams(config.epsilon, config.delta))
    design = stage("optimize", lambda: optimize_covariance(
        A, config.n, config.epsilon, max_iters=config.max_iters, tol=config.tol))
    hists = config.histograms or default_histogram_set(A.u, config.n, config.seed)
    proj = stage("projection", lambda: estimate_error(
        ProjectionMechanism(design, pp, max_iters=config.fw_max_iters, tol=config.fw_tol),
        A, config.n, config.trials, hists, config.seed))
    plain = stage("plain_gaussian", lambda: estimate_error(
        PlainGaussianMechanism(pp), A, config.n, config.trials, hists, config.seed))

    def certify():
        method = config.lower_bound
        if method == "auto":
            method = "bruteforce" if A.u <= MAX_BRUTEFORCE_UNIVERSE else "greedy"
        k = design.k
        if method == "bruteforce":
            lb = spec_lb_bruteforce(A, k)
        elif method == "greedy":
            lb = spec_lb_greedy(A, min(k, A.u))
        else:
            lb = None
        return dual_certificate_bound(design, config.epsilon, config.n, A=A, spec_lb=lb)

    cert = stage("certificate", certify)
    bound = theory_bound(noise_multiplier(config.epsilon, config.delta), A.m, design.eig.values,
                         design.k, A.u, config.delta)
    instance = {"m": A.m, "u": A.u, "n": int(config.n), "epsilon": float(config.epsilon),
                "delta": float(config.delta), "k": int(design.k), "seed": int(config.seed),
                "trials": int(config.trials)}
    return BenchmarkReport(instance=instance, projection_error=proj, plain_gaussian_error=plain,
                           theory_bound=bound, kyfan_value=design.kyfan_value,
                           hk_value=design.hk_value, gap=design.gap, certificate=cert,
                           wall_times=times)


def report_json(report, include_timings=False):
    return json.dumps(report.to_dict(include_timings=include_timings), indent=2, sort_keys=True)


def report_csv(report):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    row = report.scalar_row()
    writer.writerow({k: "" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                     for k in CSV_FIELDS})
    return buf.getvalue()


def write_report(report, path, format="json", include_timings=False):
    """Serialize a :class:`BenchmarkReport` as JSON or as a one-row CSV."""
    if format == "json":
        payload = report_json(report, include_timings) + "\n"
    elif format == "csv":
        payload = report_csv(report)
    else:
        raise ValueError(f"unknown report format {format!r}")
    with open(path, "w") as fh:
        fh.write(payload)
