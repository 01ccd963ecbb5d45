"""Query workloads, histograms and the sensitivity polytope.

A workload of linear queries over a universe ``U`` is stored as a dense
``m x u`` query matrix whose column ``e`` holds the answers contributed by one
copy of universe element ``e``. A database is a histogram ``x`` of
nonnegative integer counts, so the true answers are ``A @ x``.
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class QueryMatrix:
    entries: np.ndarray
    row_labels: tuple = None
    col_labels: tuple = None
    rank_verified: bool = False

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise WorkloadError(f"query matrix must be non-empty 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise WorkloadError("query matrix has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        for name, size in (("row_labels", a.shape[0]), ("col_labels", a.shape[1])):
            labels = getattr(self, name)
            if labels is not None:
                labels = tuple(str(s) for s in labels)
                if len(labels) != size:
                    raise WorkloadError(f"{name} has {len(labels)} entries, expected {size}")
                object.__setattr__(self, name, labels)

    @property
    def m(self):
        """Number of queries."""
        return self.entries.shape[0]

    @property
    def u(self):
        """Universe size."""
        return self.entries.shape[1]

    def column(self, e):
        return self.entries[:, e]

    def rank(self, tol=None):
        return int(np.linalg.matrix_rank(self.entries, tol=tol))

    def check_rank(self):
        """Return a copy flagged as full row rank, or raise if it is not."""
        r = self.rank()
        if r != self.m:
            raise WorkloadError(f"query matrix has rank {r} < {self.m} queries")
        return replace(self, rank_verified=True)

    def answer(self, x):
        counts = x.counts if isinstance(x, Histogram) else np.asarray(x)
        return self.entries @ counts

    def max_column_norm_sq(self):
        return float(np.max(np.sum(self.entries**2, axis=0)))

    def __eq__(self, other):
        if not isinstance(other, QueryMatrix):
            return NotImplemented
        return (self.entries.shape == other.entries.shape
                and bool(np.array_equal(self.entries, other.entries)))

    __hash__ = None


@dataclass(frozen=True)
class Histogram:
    counts: np.ndarray
    n: int

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise WorkloadError("histogram must be a 1-D vector")
        if c.dtype.kind == "f":
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise WorkloadError("histogram counts must be integers")
        elif c.dtype.kind not in "iub":
            raise WorkloadError("histogram counts must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise WorkloadError("histogram counts must be nonnegative")
        if int(self.n) < 0:
            raise WorkloadError("size bound n must be nonnegative")
        if int(c.sum()) > int(self.n):
            raise WorkloadError(f"histogram has {int(c.sum())} elements, above the bound n={self.n}")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "n", int(self.n))

    @property
    def u(self):
        return self.counts.shape[0]

    @property
    def size(self):
        return int(self.counts.sum())


@dataclass(frozen=True)
class SensitivityPolytopeView:
    """The symmetric convex hull of the (optionally projected) columns of A.

    With ``projector`` set to ``P`` the vertices are ``±(I - P) a_e``; the
    scaled polytope ``n K`` is the set of answer vectors reachable by
    databases of size at most ``n``.
    """

    workload: QueryMatrix
    projector: np.ndarray = field(default=None)

    def generators(self):
        a = self.workload.entries
        if self.projector is None:
            return a
        return a - self.projector @ a

    def vertices(self, n=1):
        g = n * self.generators()
        return np.hstack([g, -g]).T

    def support(self, w, n=1):
        """Support function ``max_{z in nK} <w, z>``."""
        return n * float(np.max(np.abs(np.asarray(w) @ self.generators())))


def _infer_format(path, fmt):
    if fmt is not None:
        return fmt.lower()
    return "json" if Path(path).suffix.lower() == ".json" else "csv"


def load_matrix(path, format=None):
    """Read a dense query matrix from CSV (no header) or JSON.

    The JSON layout is ``{"rows": m, "cols": u, "data": [row-major values]}``.
    """
    fmt = _infer_format(path, format)
    text = Path(path).read_text()
    if fmt == "json":
        try:
            obj = json.loads(text)
            rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
        except (ValueError, KeyError, TypeError) as exc:
            raise WorkloadError(f"malformed JSON matrix: {exc}") from exc
        if rows < 1:
            raise WorkloadError("no rows")
        if len(data) != rows * cols:
            raise WorkloadError(f"expected {rows * cols} values, found {len(data)}")
        try:
            values = np.array([float(v) for v in data], dtype=float)
        except (TypeError, ValueError) as exc:
            raise WorkloadError(f"non-numeric value in data: {exc}") from exc
        if not np.all(np.isfinite(values)):
            raise WorkloadError("non-finite entry in matrix")
        return QueryMatrix(values.reshape(rows, cols),
                           row_labels=obj.get("row_labels"), col_labels=obj.get("col_labels"))
    if fmt != "csv":
        raise WorkloadError(f"unknown matrix format {fmt!r}")

    rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    if not rows:
        raise WorkloadError("no rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise WorkloadError(f"ragged rows: row {i + 1} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise WorkloadError(f"non-numeric at ({i + 1},{j + 1})") from None
            if not math.isfinite(value):
                raise WorkloadError(f"non-finite at ({i + 1},{j + 1})")
            out[i, j] = value
    return QueryMatrix(out)


def save_matrix(A, path, format=None):
    """Write ``A`` so that :func:`load_matrix` reproduces it bit for bit."""
    fmt = _infer_format(path, format)
    if not isinstance(A, QueryMatrix):
        A = QueryMatrix(A)
    a = A.entries
    if fmt == "json":
        obj = {"rows": A.m, "cols": A.u, "data": [float(v) for v in a.ravel()]}
        if A.row_labels is not None:
            obj["row_labels"] = list(A.row_labels)
        if A.col_labels is not None:
            obj["col_labels"] = list(A.col_labels)
        payload = json.dumps(obj)
    elif fmt == "csv":
        payload = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in a)
    else:
        raise WorkloadError(f"unknown matrix format {fmt!r}")
    with open(path, "w") as fh:
        fh.write(payload)


def load_histogram(path, n=None):
    """Read a histogram stored as one CSV line of ``u`` integers."""
    text = Path(path).read_text().strip()
    if not text:
        raise WorkloadError("empty histogram file")
    counts = []
    for j, cell in enumerate(text.split(",")):
        cell = cell.strip()
        try:
            counts.append(int(cell))
        except ValueError:
            raise WorkloadError(f"histogram entry {j + 1} is not an integer: {cell!r}") from None
    counts = np.array(counts, dtype=np.int64)
    return Histogram(counts, int(counts.sum()) if n is None else n)


def save_histogram(x, path):
    with open(path, "w") as fh:
        fh.write(",".join(str(int(c)) for c in x.counts) + "\n")


def gen_random_counting(m, u, density=0.5, seed=0):
    """Random counting workload: each entry is 1 with probability ``density``."""
    if m < 1 or u < 1:
        raise WorkloadError("m and u must be positive")
    if not 0.0 < density <= 1.0:
        raise WorkloadError(f"density must lie in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    return QueryMatrix((rng.random((m, u)) < density).astype(float))


def gen_interval_queries(u):
    """All ``u(u+1)/2`` range-counting queries on a line of ``u`` points,
    ordered by interval length and then by left endpoint."""
    if u < 1:
        raise WorkloadError("u must be positive")
    rows, labels = [], []
    for length in range(1, u + 1):
        for i in range(u - length + 1):
            row = np.zeros(u)
            row[i:i + length] = 1.0
            rows.append(row)
            labels.append(f"[{i + 1},{i + length}]")
    return QueryMatrix(np.array(rows), row_labels=labels)


def gen_histogram(u, n, mode="uniform_random", element=0, seed=0):
    """Histogram of a size-``n`` database.

    ``mode="point_mass"`` puts all ``n`` copies on universe element ``element``
    (0-based); ``mode="uniform_random"`` draws ``n`` elements uniformly.
    """
    if n < 0:
        raise WorkloadError("n must be nonnegative")
    if mode == "point_mass":
        if not 0 <= element < u:
            raise WorkloadError(f"element {element} out of range for universe of size {u}")
        counts = np.zeros(u, dtype=np.int64)
        counts[element] = n
    elif mode == "uniform_random":
        rng = np.random.default_rng(seed)
        counts = rng.multinomial(n, np.full(u, 1.0 / u)).astype(np.int64)
    else:
        raise WorkloadError(f"unknown histogram mode {mode!r}")
    return Histogram(counts, n)
