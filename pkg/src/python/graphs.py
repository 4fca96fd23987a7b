import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from joblib import Parallel, delayed

from config import BOUNDS_RESOLUTION, GRAPH_CASES, GRAPHON_SUBCELLS
from streams import check_seed, stream

logger = logging.getLogger(__name__)

ROW_BLOCK = 256


class GraphonEvaluationError(ValueError):
    """A graphon produced a non-finite value."""


class GraphonDomainError(ValueError):
    """A graphon or sampling parameter is outside the admissible range."""


@dataclass(frozen=True)
class Graphon:
    """Bounded nonnegative function W(x, y) on the unit square.

    kind is 'uniform' (constant p), 'grid' (piecewise constant on an s x s
    mesh) or 'callable' (vectorized func(x, y)).
    """
    kind: str
    p: float = 0.0
    values: Optional[np.ndarray] = None
    func: Optional[Callable] = None
    symmetric: bool = True
    bound_c1: float = 0.0
    bound_c2: float = 0.0

    @classmethod
    def uniform(cls, p):
        if not 0.0 <= p:
            raise GraphonDomainError(f"uniform graphon needs p >= 0, got {p}")
        return cls(kind='uniform', p=float(p), symmetric=True, bound_c1=float(p), bound_c2=float(p))

    @classmethod
    def grid(cls, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise GraphonDomainError("grid graphon needs a square s x s array")
        if not np.all(np.isfinite(values)):
            raise GraphonEvaluationError("grid graphon has non-finite values")
        if np.any(values < 0):
            raise GraphonDomainError("graphon values must be nonnegative")
        values.setflags(write=False)
        partial = cls(kind='grid', values=values, symmetric=bool(np.array_equal(values, values.T)))
        c1, c2 = estimate_integrability_bounds(partial)
        return cls(kind='grid', values=values, symmetric=partial.symmetric, bound_c1=c1, bound_c2=c2)

    @classmethod
    def from_callable(cls, func, symmetric=None):
        partial = cls(kind='callable', func=func, symmetric=False)
        if symmetric is None:
            mesh = (np.arange(33) + 0.5) / 33
            x, y = np.meshgrid(mesh, mesh, indexing='ij')
            symmetric = bool(np.allclose(partial.evaluate(x, y), partial.evaluate(y, x), rtol=0, atol=1e-14))
        partial = cls(kind='callable', func=func, symmetric=symmetric)
        c1, c2 = estimate_integrability_bounds(partial)
        return cls(kind='callable', func=func, symmetric=symmetric, bound_c1=c1, bound_c2=c2)

    def evaluate(self, x, y):
        """Vectorized W(x, y)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.kind == 'uniform':
            return np.full(np.broadcast(x, y).shape, self.p)
        if self.kind == 'grid':
            s = self.values.shape[0]
            ix = np.minimum((x * s).astype(np.int64), s - 1)
            iy = np.minimum((y * s).astype(np.int64), s - 1)
            out = self.values[ix, iy]
        else:
            out = np.asarray(self.func(x, y), dtype=np.float64)
            out = np.broadcast_to(out, np.broadcast(x, y).shape)
        if not np.all(np.isfinite(out)):
            raise GraphonEvaluationError("graphon evaluation returned a non-finite value")
        if np.any(out < 0):
            raise GraphonDomainError("graphon values must be nonnegative")
        return out

    def value_range(self):
        if self.kind == 'uniform':
            return self.p, self.p
        if self.kind == 'grid':
            return float(self.values.min()), float(self.values.max())
        return None


@dataclass(frozen=True)
class GraphRecipe:
    """Parameters of one of the three uniform graph constructions."""
    case: str
    n: int
    p: float = 1.0
    gamma: float = 0.3
    seed: int = 0
    directed: bool = False

    def __post_init__(self):
        if self.case not in GRAPH_CASES:
            raise GraphonDomainError(f"unknown graph case '{self.case}'")
        if self.n < 2:
            raise GraphonDomainError("a graph needs n >= 2 nodes")
        if not 0.0 < self.p <= 1.0:
            raise GraphonDomainError(f"p must lie in (0, 1], got {self.p}")
        if self.case == 'random_sparse' and not 0.0 < self.gamma < 0.5:
            raise GraphonDomainError(f"gamma must lie in (0, 1/2), got {self.gamma}")
        check_seed(self.seed)


@dataclass(frozen=True)
class WeightMatrix:
    """Immutable n x n nonnegative weights with scaling factor alpha_n.

    storage is 'constant' (lazy uniform token), 'dense' or 'sparse' (CSR).
    """
    n: int
    storage: str
    data: object
    alpha_n: float
    kind: str
    symmetric: bool
    seed: int = 0
    gamma: Optional[float] = None
    directed: bool = False
    provenance: Dict = field(default_factory=dict)

    @property
    def is_constant(self):
        return self.storage == 'constant'

    @property
    def constant_value(self):
        if not self.is_constant:
            raise ValueError("weights are not a constant token")
        return float(self.data)

    def to_dense(self):
        """Expanded dense copy."""
        if self.storage == 'constant':
            return np.full((self.n, self.n), float(self.data))
        if self.storage == 'sparse':
            return self.data.toarray()
        return np.array(self.data)

    def matvec(self, v):
        """W @ v, keeping the constant token lazy."""
        if self.storage == 'constant':
            return np.full(v.shape, float(self.data) * np.sum(v))
        return self.data @ v

    def nonzero_entries(self):
        """(rows, cols, weights) of stored nonzeros, 0-based, sorted by (i, j)."""
        if self.storage == 'sparse':
            coo = self.data.tocoo()
            rows, cols, vals = coo.row, coo.col, coo.data
        else:
            dense = self.to_dense()
            rows, cols = np.nonzero(dense)
            vals = dense[rows, cols]
        order = np.lexsort((cols, rows))
        return rows[order], cols[order], vals[order]

    def edge_count(self):
        """Stored edges: pairs i <= j for symmetric weights, ordered pairs otherwise."""
        rows, cols, _ = self.nonzero_entries()
        if self.symmetric:
            return int(np.count_nonzero(rows <= cols))
        return int(rows.size)

    def density_summary(self):
        return {
            'n': self.n,
            'kind': self.kind,
            'alpha_n': self.alpha_n,
            'edge_count': self.edge_count(),
            'seed': self.seed,
            'gamma': self.gamma,
            'symmetric': self.symmetric,
        }

    def export_coordinate_list(self, path):
        """Write one 'i j w' line per nonzero, 1-based, sorted by (i, j)."""
        rows, cols, vals = self.nonzero_entries()
        df = pd.DataFrame({'i': rows + 1, 'j': cols + 1, 'w': vals})
        df.to_csv(path, sep=' ', header=False, index=False)

    def export_density_summary(self, path):
        with open(path, 'w') as f:
            json.dump(self.density_summary(), f, indent=2)


def _cell_points(n, i, s):
    """Midpoints of the s subcells of I_i^n (0-based i)."""
    return (i + (np.arange(s) + 0.5) / s) / n


def graphon_average(W, n, i, j, subcells=GRAPHON_SUBCELLS):
    """n^2 times the integral of W over I_i^n x I_j^n (1-based i, j)."""
    if not (1 <= i <= n and 1 <= j <= n):
        raise IndexError(f"cell ({i}, {j}) outside [1, {n}]^2")
    if W.kind == 'uniform':
        return W.p
    x = _cell_points(n, i - 1, subcells)
    y = _cell_points(n, j - 1, subcells)
    xx, yy = np.meshgrid(x, y, indexing='ij')
    return float(np.mean(W.evaluate(xx, yy)))


def _average_rows(W, n, rows, subcells, cap=None):
    """Cell averages for a block of rows; cap truncates W before averaging."""
    s = subcells
    x = (rows[:, None] + (np.arange(s)[None, :] + 0.5) / s) / n
    y = (np.arange(n)[:, None] + (np.arange(s)[None, :] + 0.5) / s) / n
    vals = W.evaluate(x.reshape(-1)[:, None], y.reshape(-1)[None, :])
    if cap is not None:
        vals = np.minimum(vals, cap)
    return vals.reshape(rows.size, s, n, s).mean(axis=(1, 3))


def _all_averages(W, n, subcells, cap=None):
    blocks = [np.arange(start, min(start + ROW_BLOCK, n)) for start in range(0, n, ROW_BLOCK)]
    return np.vstack([_average_rows(W, n, rows, subcells, cap) for rows in blocks])


def build_deterministic_dense(W, n, subcells=GRAPHON_SUBCELLS):
    """Deterministic dense weights w_ij = <W>_ij."""
    if n < 2:
        raise GraphonDomainError("a graph needs n >= 2 nodes")
    provenance = {'graphon': W.kind, 'subcells': subcells}
    if W.kind == 'uniform':
        return WeightMatrix(n=n, storage='constant', data=W.p, alpha_n=1.0,
                            kind='deterministic_dense', symmetric=True, provenance=provenance)
    dense = _all_averages(W, n, subcells)
    dense.setflags(write=False)
    return WeightMatrix(n=n, storage='dense', data=dense, alpha_n=1.0,
                        kind='deterministic_dense', symmetric=W.symmetric, provenance=provenance)


def _probability_rows(W, n, rows, subcells, alpha_n, sparse):
    if W.kind == 'uniform':
        value = alpha_n * min(1.0 / alpha_n, W.p) if sparse else W.p
        return np.full((rows.size, n), value)
    cap = 1.0 / alpha_n if sparse else None
    probs = _average_rows(W, n, rows, subcells, cap)
    if sparse:
        probs = alpha_n * probs
    elif probs.max(initial=0.0) > 1.0:
        raise GraphonDomainError("random dense sampling needs graphon values in [0, 1]")
    return probs


def _sample_block(W, n, rows, seed, subcells, alpha_n, sparse, directed):
    probs = _probability_rows(W, n, rows, subcells, alpha_n, sparse)
    hit_rows, hit_cols = [], []
    for k, i in enumerate(rows):
        draws = stream(seed, 'graph', index=int(i)).random(n)
        hits = np.nonzero(draws < probs[k])[0]
        if not directed:
            hits = hits[hits >= i]
        hit_rows.append(np.full(hits.size, i, dtype=np.int64))
        hit_cols.append(hits)
    return np.concatenate(hit_rows), np.concatenate(hit_cols)


def _sample(W, n, seed, subcells, alpha_n, sparse, directed, threads):
    seed = check_seed(seed)
    if W.kind != 'callable':
        low, high = W.value_range()
        if low < 0 or (not sparse and high > 1.0):
            raise GraphonDomainError("random dense sampling needs graphon values in [0, 1]")
    blocks = [np.arange(start, min(start + ROW_BLOCK, n)) for start in range(0, n, ROW_BLOCK)]
    parts = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_sample_block)(W, n, rows, seed, subcells, alpha_n, sparse, directed)
        for rows in blocks
    )
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    if not directed:
        off = rows != cols
        rows, cols = np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]])
    matrix = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    matrix.sort_indices()
    return matrix


def sample_random_dense(W, n, seed, directed=False, subcells=GRAPHON_SUBCELLS, threads=1):
    """Random dense graph: w_ij = 1 with probability <W>_ij."""
    matrix = _sample(W, n, seed, subcells, 1.0, False, directed, threads)
    dense = matrix.toarray()
    dense.setflags(write=False)
    logger.debug("random dense sample n=%d seed=%d edges=%d", n, seed, matrix.nnz)
    return WeightMatrix(n=n, storage='dense', data=dense, alpha_n=1.0, kind='random_dense',
                        symmetric=not directed, seed=seed, directed=directed,
                        provenance={'graphon': W.kind, 'subcells': subcells})


def sample_random_sparse(W, n, gamma, seed, directed=False, subcells=GRAPHON_SUBCELLS, threads=1):
    """Random sparse graph: w_ij = 1 with probability alpha_n <min(1/alpha_n, W)>_ij."""
    if not 0.0 < gamma < 0.5:
        raise GraphonDomainError(f"gamma must lie in (0, 1/2), got {gamma}")
    alpha_n = float(n) ** (-gamma)
    matrix = _sample(W, n, seed, subcells, alpha_n, True, directed, threads)
    logger.debug("random sparse sample n=%d gamma=%g seed=%d edges=%d", n, gamma, seed, matrix.nnz)
    return WeightMatrix(n=n, storage='sparse', data=matrix, alpha_n=alpha_n, kind='random_sparse',
                        symmetric=not directed, seed=seed, gamma=gamma, directed=directed,
                        provenance={'graphon': W.kind, 'subcells': subcells, 'gamma': gamma})


def build_graph(recipe, W=None, threads=1):
    """Weights for a recipe; W defaults to the uniform graphon p."""
    W = W if W is not None else Graphon.uniform(recipe.p)
    if recipe.case == 'complete':
        return build_deterministic_dense(W, recipe.n)
    if recipe.case == 'random_dense':
        return sample_random_dense(W, recipe.n, recipe.seed, directed=recipe.directed, threads=threads)
    return sample_random_sparse(W, recipe.n, recipe.gamma, recipe.seed,
                                directed=recipe.directed, threads=threads)


def estimate_integrability_bounds(W, resolution=BOUNDS_RESOLUTION) -> Tuple[float, float]:
    """(sup_y int |W| dx, sup_x int |W| dy) on a resolution-point mesh.

    The integrated variable uses midpoints, the supremum runs over a mesh that
    includes both endpoints.
    """
    if W.kind == 'uniform':
        return W.p, W.p
    mids = (np.arange(resolution) + 0.5) / resolution
    ends = np.linspace(0.0, 1.0, resolution)
    c1 = np.abs(W.evaluate(mids[:, None], ends[None, :])).mean(axis=0).max()
    c2 = np.abs(W.evaluate(ends[:, None], mids[None, :])).mean(axis=1).max()
    return float(c1), float(c2)
