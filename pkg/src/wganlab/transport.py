"""Optimal transport on finite point sets, plus 1-D and duality oracles."""
import csv
import itertools
import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from wganlab._backend import kernels
from wganlab.numerics import ShapeError, as_matrix

MARGINAL_TOL = 1e-9
LIP_TOL = 1e-9
TIE_TOL = 1e-12


@dataclass
class Coupling:
    """Weighted pairs ``(i, j, w)`` between point sets A and B."""
    pairs: list

    def check(self, n_a, n_b, tol=MARGINAL_TOL):
        row = np.zeros(n_a)
        col = np.zeros(n_b)
        for i, j, w in self.pairs:
            if w <= 0:
                raise ValueError(f"coupling weight {w} for pair ({i}, {j}) is not positive")
            row[i] += w
            col[j] += w
        if np.max(np.abs(row - 1.0 / n_a)) > tol or np.max(np.abs(col - 1.0 / n_b)) > tol:
            raise ValueError("coupling marginals are not uniform")


def pairwise_distances(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2))


def hungarian(cost):
    """Exact minimum-cost perfect assignment.

    Among optimal assignments the lexicographically smallest permutation is
    returned; "optimal" means every used entry is tight under the solver's
    dual potentials to within ``TIE_TOL`` times the cost scale.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    row_to_col, u, v = kernels.solve_assignment(cost)
    tol = TIE_TOL * max(1.0, float(np.abs(cost).max()))
    tight = (cost - u[:, None] - v[None, :]) <= tol
    # one tight entry per row means the optimum is unique
    if tight.sum() > n:
        row_to_col = _lexicographic_matching(tight, row_to_col)
    # exactly rounded, so the total does not depend on row order
    total = math.fsum(cost[np.arange(n), row_to_col])
    return row_to_col, total


def _lexicographic_matching(tight, match):
    """Lexicographically smallest perfect matching in the tight subgraph,
    starting from the perfect matching ``match``."""
    n = len(match)
    match = match.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[match] = np.arange(n)
    adj = [np.flatnonzero(tight[i]) for i in range(n)]
    fixed_col = np.zeros(n, dtype=bool)
    for i in range(n):
        for j in adj[i]:
            if j >= match[i]:
                break
            if fixed_col[j]:
                continue
            path = _alternating_path(adj, match, owner, fixed_col, i, owner[j], j, match[i])
            if path is None:
                continue
            # row k takes column c along the path; then i takes j
            for k, c in path:
                match[k] = c
                owner[c] = k
            match[i] = j
            owner[j] = i
            break
        fixed_col[match[i]] = True
    return match


def _alternating_path(adj, match, owner, fixed_col, i, start_row, banned, target):
    """Re-seat ``start_row`` (which loses column ``banned``) using tight
    edges, ending on the freed column ``target``. Rows ``<= i`` stay put."""
    prev = {start_row: None}
    queue = deque([start_row])
    while queue:
        k = queue.popleft()
        for c in adj[k]:
            if fixed_col[c] or c == banned or c == match[k]:
                continue
            if c == target:
                path = [(k, c)]
                while prev[k] is not None:
                    pk, pc = prev[k]
                    path.append((pk, pc))
                    k = pk
                return path
            k2 = owner[c]
            if k2 <= i or k2 in prev:
                continue
            prev[k2] = (k, c)
            queue.append(k2)
    return None


def emd_empirical(a, b):
    """W1 between the uniform empirical measures on two equal-size sets."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"point sets differ in shape: {a.shape} vs {b.shape}")
    _, total = hungarian(pairwise_distances(a, b))
    return total / a.shape[0]


def brute_force_emd(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"point sets differ in shape: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n > 8:
        raise ValueError("brute force limited to n <= 8")
    return brute_force_assignment(pairwise_distances(a, b)) / n


def brute_force_assignment(cost):
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    rows = np.arange(n)
    return min(float(cost[rows, list(perm)].sum()) for perm in itertools.permutations(range(n)))


@dataclass
class DualityReport:
    primal: float
    dual: float
    gap: float
    lipschitz_feasible: bool
    exhausted_pairs: bool


def duality_report(mu_points, mu_values, nu_points, nu_values, coupling):
    """Primal transport cost of ``coupling`` against the critic gap
    ``mean f(mu) - mean f(nu)``, with Lipschitz and exhaustion checks."""
    mu_points = as_matrix(np.asarray(mu_points, dtype=np.float64).reshape(len(mu_values), -1))
    nu_points = as_matrix(np.asarray(nu_points, dtype=np.float64).reshape(len(nu_values), -1))
    mu_values = np.asarray(mu_values, dtype=np.float64)
    nu_values = np.asarray(nu_values, dtype=np.float64)
    coupling.check(len(mu_values), len(nu_values))
    primal = sum(w * float(np.linalg.norm(mu_points[i] - nu_points[j])) for i, j, w in coupling.pairs)
    dual = float(mu_values.mean() - nu_values.mean())
    pts = np.vstack([mu_points, nu_points])
    vals = np.concatenate([mu_values, nu_values])
    feasible = bool(np.all(np.abs(vals[:, None] - vals[None, :]) <= pairwise_distances(pts, pts) + LIP_TOL))
    exhausted = all(
        abs(abs(mu_values[i] - nu_values[j]) - float(np.linalg.norm(mu_points[i] - nu_points[j]))) <= LIP_TOL
        for i, j, _ in coupling.pairs)
    return DualityReport(primal, dual, primal - dual, feasible, exhausted)


def load_duality_fixture(path):
    """Read ``{"mu": {"points", "values"}, "nu": {...}, "coupling": [[i, j, w], ...]}``."""
    with open(path) as fh:
        doc = json.load(fh)
    return (doc["mu"]["points"], doc["mu"]["values"], doc["nu"]["points"], doc["nu"]["values"],
            Coupling([(int(i), int(j), float(w)) for i, j, w in doc["coupling"]]))


def w1_1d_cdf(grid, density_a, density_b, norm_tol=1e-6):
    """W1 on the line as the trapezoid integral of ``|F_a - F_b|``."""
    grid = np.asarray(grid, dtype=np.float64)
    pa = np.asarray(density_a, dtype=np.float64)
    pb = np.asarray(density_b, dtype=np.float64)
    if not (grid.shape == pa.shape == pb.shape):
        raise ShapeError("grid and densities must have equal length")
    if np.any(pa < 0) or np.any(pb < 0):
        raise ValueError("densities must be non-negative")
    dx = np.diff(grid)
    ca = np.concatenate([[0.0], np.cumsum(0.5 * (pa[1:] + pa[:-1]) * dx)])
    cb = np.concatenate([[0.0], np.cumsum(0.5 * (pb[1:] + pb[:-1]) * dx)])
    if abs(ca[-1] - 1.0) > norm_tol or abs(cb[-1] - 1.0) > norm_tol:
        raise ValueError(f"densities integrate to {ca[-1]:.8f} and {cb[-1]:.8f}, not 1")
    gap = np.abs(ca - cb)
    return float((0.5 * (gap[1:] + gap[:-1]) * dx).sum())


def trapezoid(grid, values):
    grid = np.asarray(grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    return float((0.5 * (values[1:] + values[:-1]) * np.diff(grid)).sum())


def normal_pdf(x, mean=0.0, std=1.0):
    z = (x - mean) / std
    return np.exp(-0.5 * z * z) / (std * math.sqrt(2.0 * math.pi))


def gaussian_mixture_w1_closed_form():
    """E_nu|x| - E_mu|x| for mu = N(0,1), nu = N(-1,1)/2 + N(1,1)/2."""
    return (math.sqrt(2.0 / math.pi) * math.exp(-0.5) + math.erf(1.0 / math.sqrt(2.0))
            - math.sqrt(2.0 / math.pi))


def min_gradient_norm_two_directions(v, v_prime):
    """Smallest ||g|| with g.v = g.v' = 1 for unit vectors v, v'."""
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(v_prime, dtype=np.float64)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9 or abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise ValueError("directions must be unit vectors")
    c = float(v @ w)
    if c <= -1.0 + 1e-9:
        raise ValueError("antipodal directions: no gradient has unit slope along both")
    return math.sqrt(2.0 / (1.0 + c))


def read_points_csv(path):
    """Read a point CSV (optional non-numeric header). Raises ``ValueError``
    naming the 1-based row of the first malformed line."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not f.strip() for f in rec):
                continue
            try:
                rows.append([float(f) for f in rec])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ValueError(f"{path}: malformed row {lineno}: {rec!r}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(f"{path}: row {lineno} has {len(rows[-1])} fields, expected {len(rows[0])}")
    if not rows:
        raise ValueError(f"{path}: no points")
    return np.array(rows, dtype=np.float64)


def write_points_csv(path, points, header=("x", "y")):
    points = as_matrix(points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(header[: points.shape[1]])
        for row in points:
            w.writerow([repr(float(x)) for x in row])
