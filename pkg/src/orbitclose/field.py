"""Vector fields with exact derivatives: parsing, jets, Lie derivatives,
and Lipschitz-constant estimation over boxes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import expr as ex
from .errors import (ArityError, DimensionMismatch, DomainError,
                     OrderUnsupported)
from .jets import Dual1, Jet, multi_indices

_DEFAULT_NAMES = {1: ("x",), 2: ("x", "y"), 3: ("x", "y", "z")}


def default_coord_names(dimension):
    if dimension in _DEFAULT_NAMES:
        return _DEFAULT_NAMES[dimension]
    return tuple(f"x{i + 1}" for i in range(dimension))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in chart coordinates."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.lo.shape != self.hi.shape or np.any(self.hi < self.lo):
            raise ValueError("invalid box bounds")

    @property
    def dimension(self):
        return self.lo.size

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def enlarged(self, margin):
        return Box(self.lo - margin, self.hi + margin)

    def grid(self, per_axis):
        """Cartesian sample grid, ``per_axis`` points per axis (int or list)."""
        if np.isscalar(per_axis):
            per_axis = [int(per_axis)] * self.dimension
        axes = [np.linspace(self.lo[i], self.hi[i], per_axis[i])
                for i in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @staticmethod
    def around(points, margin=0.0):
        pts = np.asarray(points, dtype=float)
        return Box(pts.min(axis=0) - margin, pts.max(axis=0) + margin)


@dataclass(frozen=True)
class FieldSpec:
    """A parsed vector field. Immutable; evaluation is pure and reentrant."""

    name: str
    dimension: int
    components: tuple
    coord_names: tuple
    parameters: dict
    time_dependent: bool
    r_max: int = 3
    _value_fn: object = dc_field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.components) != self.dimension:
            raise ArityError(
                f"{len(self.components)} components for dimension {self.dimension}")
        fn = ex.compile_components(self.components, self.dimension, self.parameters)
        object.__setattr__(self, "_value_fn", fn)

    # -- evaluation -----------------------------------------------------

    def value(self, x, t=0.0):
        try:
            return np.array(self._value_fn(*x, t), dtype=float)
        except (ValueError, ZeroDivisionError, OverflowError) as e:
            raise DomainError(f"{self.name}: {e} at x={np.asarray(x)}, t={t}") from e

    def jet_components(self, x, t, order, include_time=False):
        """Each component as a Jet seeded in the spatial coordinates (and
        optionally time as the last variable)."""
        n = self.dimension
        nv = n + 1 if include_time else n
        coords = [Jet.variable(x[i], i, nv, order) for i in range(n)]
        tj = Jet.variable(t, n, nv, order) if include_time else float(t)
        try:
            return [self._as_jet(ex.eval_expr(c, coords, tj, self.parameters), nv, order)
                    for c in self.components]
        except DomainError as e:
            raise DomainError(f"{self.name}: {e}") from e

    @staticmethod
    def _as_jet(v, nvars, order):
        return v if isinstance(v, Jet) else Jet.constant(v, nvars, order)

    def jacobian(self, x, t=0.0):
        """Spatial Jacobian dX (order-1 jets on the fast dual-number path)."""
        n = self.dimension
        coords = [Dual1.variable(x[i], i, n) for i in range(n)]
        J = np.empty((n, n))
        for i, c in enumerate(self.components):
            v = ex.eval_expr(c, coords, float(t), self.parameters)
            J[i] = v.g if isinstance(v, Dual1) else 0.0
        return J

    def time_derivative(self, x, t=0.0):
        """dX/dt at fixed x (zero for autonomous fields)."""
        if not self.time_dependent:
            return np.zeros(self.dimension)
        tj = Dual1.variable(t, 0, 1)
        out = np.zeros(self.dimension)
        for i, c in enumerate(self.components):
            v = ex.eval_expr(c, [float(xi) for xi in x], tj, self.parameters)
            out[i] = v.g[0] if isinstance(v, Dual1) else 0.0
        return out

    def to_source(self):
        return ex.components_to_source(self.components)


def parse_field(source, dimension, name="field", coord_names=None,
                parameters=None, r_max=3):
    """Parse a bracketed component list into a validated FieldSpec."""
    if coord_names is None:
        coord_names = default_coord_names(dimension)
    if len(coord_names) != dimension:
        raise ArityError(f"{len(coord_names)} coordinate names for dimension {dimension}")
    parameters = dict(parameters or {})
    comps = ex.parse_component_list(source, coord_names, parameters.keys())
    if len(comps) != dimension:
        raise ArityError(f"{len(comps)} components for dimension {dimension}")
    time_dep = any(ex.depends_on_time(c) for c in comps)
    return FieldSpec(name=name, dimension=dimension, components=comps,
                     coord_names=tuple(coord_names), parameters=parameters,
                     time_dependent=time_dep, r_max=r_max)


# --------------------------------------------------------------------------
# FieldJet: dense multi-index table of mixed partials (spatial + time)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldJet:
    point: np.ndarray
    time: float
    order: int
    value: np.ndarray
    indices: tuple          # multi-indices over n spatial slots + 1 time slot
    table: np.ndarray       # shape (len(indices), n); entries are true partials

    def partial(self, alpha):
        a = tuple(alpha)
        try:
            k = self.indices.index(a)
        except ValueError:
            raise KeyError(f"multi-index {a} beyond order {self.order}") from None
        return self.table[k]

    def jacobian(self):
        n = self.point.size
        J = np.empty((n, n))
        for j in range(n):
            e = [0] * (n + 1)
            e[j] = 1
            J[:, j] = self.partial(e)
        return J


def eval_jet(spec, point, time, order):
    """All mixed partials (spatial and time) of the field through ``order``.

    Derivatives come from forward jet arithmetic on the expression tree and
    are exact for analytic expressions.
    """
    if order > spec.r_max:
        raise OrderUnsupported(f"order {order} > r_max {spec.r_max}")
    point = np.asarray(point, dtype=float)
    jets = spec.jet_components(point, time, order, include_time=True)
    n = spec.dimension
    idx = multi_indices(n + 1, order)
    table = np.empty((len(idx), n))
    for k, alpha in enumerate(idx):
        for i in range(n):
            table[k, i] = jets[i].partial(alpha)
    value = np.array([j.value for j in jets])
    return FieldJet(point=point, time=float(time), order=order, value=value,
                    indices=idx, table=table)


# --------------------------------------------------------------------------
# Lie derivatives via nested brackets on jet-fields
# --------------------------------------------------------------------------

def lie_bracket_jets(h_jets, x_jets):
    """[h, X] = dX.h - dh.X on lists of component jets; drops one order."""
    n = len(x_jets)
    order = x_jets[0].order
    out = []
    for i in range(n):
        acc = Jet(x_jets[i].nvars, order - 1, {})
        for j in range(n):
            acc = acc + x_jets[i].diff(j) * h_jets[j].truncate(order - 1)
            acc = acc - h_jets[i].diff(j) * x_jets[j].truncate(order - 1)
        out.append(acc)
    return out


def lie_derivative(X, hs, point, time=0.0):
    """Iterated Lie derivative L_{h_q} ... L_{h_1} X at (point, time).

    Empty ``hs`` returns X(point, time) itself.
    """
    q = len(hs)
    for h in hs:
        if h.dimension != X.dimension:
            raise DimensionMismatch(
                f"{h.name} has dimension {h.dimension}, expected {X.dimension}")
    if q > X.r_max:
        raise OrderUnsupported(f"{q} nested brackets > r_max {X.r_max}")
    point = np.asarray(point, dtype=float)
    if q == 0:
        return X.value(point, time)
    cur = X.jet_components(point, time, q)
    h_jets = [h.jet_components(point, time, q) for h in hs]
    for k in range(q):
        trunc = [hj.truncate(cur[0].order) for hj in h_jets[k]]
        cur = lie_bracket_jets(trunc, cur)
    return np.array([j.value for j in cur])


def iterated_directional(jets, directions):
    """d^q X contracted with constant unit vectors h_1..h_q.

    Equals the iterated Lie derivative when every h is a constant field.
    ``jets``: component jets of order >= q (spatial seeds only).
    """
    cur = jets
    for h in directions:
        nxt = []
        for ji in cur:
            acc = Jet(ji.nvars, ji.order - 1, {})
            for j, hj in enumerate(h):
                if hj != 0.0:
                    acc = acc + ji.diff(j) * float(hj)
            nxt.append(acc)
        cur = nxt
    return np.array([j.value for j in cur])


# --------------------------------------------------------------------------
# Lipschitz estimation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzEstimate:
    region: Box
    per_order: tuple
    L: float
    sample_count: int


def _derivative_matrix(jets, n, m):
    """Flattened (n, n^m) matrix of the order-m spatial derivative tensor."""
    A = np.empty((n, n ** m))
    for flat in range(n ** m):
        alpha = [0] * (n + 0)
        f = flat
        for _ in range(m):
            alpha[f % n] += 1
            f //= n
        col = flat
        for i in range(n):
            A[i, col] = jets[i].partial(tuple(alpha))
    return A


def _spectral_norm(A, iterations=50):
    """Power iteration on the flattened tensor (via the n x n Gram matrix)."""
    B = A @ A.T
    if not np.any(B):
        return 0.0
    v = np.ones(B.shape[0]) / math.sqrt(B.shape[0])
    for _ in range(iterations):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return float(math.sqrt(v @ B @ v))


def estimate_lipschitz(spec, region, order, grid, time=0.0):
    """Sup over a sample grid of the operator norms of the derivative tensors
    of orders 1..order+1; per_order[q] bounds the variation of the order-q
    derivative, L is their max."""
    if np.isscalar(grid):
        grid_list = [int(grid)] * region.dimension
    else:
        grid_list = [int(g) for g in grid]
    if any(g < 2 for g in grid_list):
        raise ValueError("grid must be >= 2 per axis")
    pts = region.grid(grid_list)
    n = spec.dimension
    per_order = np.zeros(order + 1)
    for x in pts:
        jets = spec.jet_components(x, time, order + 1)
        for q in range(order + 1):
            A = _derivative_matrix(jets, n, q + 1)
            per_order[q] = max(per_order[q], _spectral_norm(A))
    return LipschitzEstimate(region=region, per_order=tuple(per_order),
                             L=float(per_order.max()), sample_count=len(pts))
