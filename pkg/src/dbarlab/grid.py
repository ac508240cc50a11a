"""Truncated-box grids, (0,q)-form fields and the weighted measure.

Real axes are ordered (x_1, y_1, x_2, y_2) and arrays are row-major over
them. Functions (q=0) and (0,2)-forms live on the full grid; (0,1)-forms
vanish on the outer boundary layer and are stacked over interior points
only. Stacked vectors put components outer, grid points inner.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .weights import WeightSpec, eval_weight


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"n must be 1 or 2, got {self.n}")
        if int(self.N) != self.N or self.N < 9 or self.N % 2 == 0:
            raise ConfigurationError(f"N must be an odd integer >= 9, got {self.N}")
        if not self.L > 0:
            raise ConfigurationError(f"L must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2 * self.L / (self.N - 1)

    @property
    def P(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @property
    def cell_volume(self) -> float:
        return self.h ** (2 * self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.N)

    @cached_property
    def points(self) -> np.ndarray:
        """Complex coordinates of every grid point, shape ``(P, n)``."""
        mesh = np.meshgrid(*([self.axis] * (2 * self.n)), indexing="ij")
        cols = [mesh[2 * j] + 1j * mesh[2 * j + 1] for j in range(self.n)]
        return np.stack([c.ravel() for c in cols], axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.points) ** 2, axis=-1))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(1, -1),) * (2 * self.n)] = True
        return m.ravel()

    @cached_property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    @property
    def P_int(self) -> int:
        return (self.N - 2) ** (2 * self.n)

    def n_components(self, q: int) -> int:
        return {0: 1, 1: self.n, 2: self.n * (self.n - 1) // 2}[q]

    def dofs(self, q: int) -> int:
        per = self.P_int if q == 1 else self.P
        return self.n_components(q) * per

    def index_set(self, q: int) -> np.ndarray:
        """Full-grid point index of each stacked entry for degree q."""
        pts = self.interior_index if q == 1 else np.arange(self.P)
        return np.tile(pts, self.n_components(q))

    def to_dict(self) -> dict:
        return {"n": self.n, "L": self.L, "N": self.N}


def build_grid(n: int, L: float, N: int) -> GridSpec:
    return GridSpec(int(n), float(L), int(N))


@dataclass(frozen=True)
class FormField:
    """Coefficients of a (0,q)-form, ``components`` has shape ``(ncomp, P)``."""

    q: int
    grid: GridSpec
    components: np.ndarray

    def __post_init__(self):
        ncomp = self.grid.n_components(self.q)
        if self.components.shape != (ncomp, self.grid.P):
            raise PreconditionError(
                f"degree {self.q} field on this grid needs shape {(ncomp, self.grid.P)}, "
                f"got {self.components.shape}"
            )

    @classmethod
    def zeros(cls, q: int, grid: GridSpec) -> "FormField":
        return cls(q, grid, np.zeros((grid.n_components(q), grid.P), dtype=complex))

    @classmethod
    def from_components(cls, q: int, grid: GridSpec, comps) -> "FormField":
        """Build a field, zeroing (0,1)-form coefficients on the boundary layer."""
        arr = np.array(comps, dtype=complex).reshape(grid.n_components(q), grid.P)
        if q == 1:
            arr[:, ~grid.interior_mask] = 0
        return cls(q, grid, arr)

    @classmethod
    def from_function(cls, q: int, grid: GridSpec, fn) -> "FormField":
        """Sample ``fn(points) -> (ncomp, P)`` on the grid."""
        return cls.from_components(q, grid, fn(grid.points))

    def stacked(self) -> np.ndarray:
        if self.q == 1:
            return self.components[:, self.grid.interior_index].ravel()
        return self.components.ravel().copy()

    @classmethod
    def from_stacked(cls, q: int, grid: GridSpec, vec) -> "FormField":
        vec = np.asarray(vec, dtype=complex)
        if vec.shape != (grid.dofs(q),):
            raise PreconditionError(f"stacked vector for degree {q} needs length {grid.dofs(q)}")
        ncomp = grid.n_components(q)
        comps = np.zeros((ncomp, grid.P), dtype=complex)
        if q == 1:
            comps[:, grid.interior_index] = vec.reshape(ncomp, grid.P_int)
        else:
            comps[:] = vec.reshape(ncomp, grid.P)
        return cls(q, grid, comps)

    def vanishes_on_boundary(self, layers: int = 1) -> bool:
        m = np.zeros(self.grid.shape, dtype=bool)
        sl = (slice(layers, -layers),) * (2 * self.grid.n)
        m[sl] = True
        return bool(np.all(self.components[:, ~m.ravel()] == 0))

    def __add__(self, other: "FormField") -> "FormField":
        return FormField(self.q, self.grid, self.components + other.components)

    def __sub__(self, other: "FormField") -> "FormField":
        return FormField(self.q, self.grid, self.components - other.components)

    def __mul__(self, c) -> "FormField":
        return FormField(self.q, self.grid, self.components * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class WeightedMeasure:
    """Point masses ``exp(-phi(p)) * h^{2n}``, kept as logarithms.

    ``log_w`` avoids underflow for fast-growing weights; ratios of masses are
    formed from differences of logarithms.
    """

    grid: GridSpec
    log_w: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_weight(cls, spec: WeightSpec, grid: GridSpec) -> "WeightedMeasure":
        if spec.n != grid.n:
            raise ConfigurationError("weight and grid dimensions differ")
        phi = eval_weight(spec, grid.points)
        return cls(grid, -phi + 2 * grid.n * np.log(grid.h), phi)

    @classmethod
    def uniform(cls, grid: GridSpec) -> "WeightedMeasure":
        phi = np.zeros(grid.P)
        return cls(grid, phi + 2 * grid.n * np.log(grid.h), phi)

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.log_w)

    def log_w_stacked(self, q: int) -> np.ndarray:
        return self.log_w[self.grid.index_set(q)]

    def w_stacked(self, q: int) -> np.ndarray:
        return np.exp(self.log_w_stacked(q))

    def sqrt_w_stacked(self, q: int) -> np.ndarray:
        return np.exp(0.5 * self.log_w_stacked(q))

    def to_half_density(self, f: FormField) -> np.ndarray:
        """Stacked ``W^{1/2} f``; the weighted norm of f is its Euclidean norm."""
        return self.sqrt_w_stacked(f.q) * f.stacked()

    def from_half_density(self, q: int, y, rel_floor: float = 1e-13) -> FormField:
        """Inverse of :meth:`to_half_density`.

        Entries with ``|y| < rel_floor * max|y|`` are below the resolution of
        ``y`` and are returned as zero; dividing them by a tiny mass would only
        amplify rounding noise.
        """
        y = np.asarray(y, dtype=complex)
        keep = np.abs(y) >= rel_floor * np.max(np.abs(y), initial=0.0)
        out = np.zeros_like(y)
        with np.errstate(over="ignore", invalid="ignore"):
            out[keep] = y[keep] * np.exp(-0.5 * self.log_w_stacked(q)[keep])
        out[~np.isfinite(out)] = 0
        return FormField.from_stacked(q, self.grid, out)


def weighted_inner(a: FormField, b: FormField, measure: WeightedMeasure) -> complex:
    """``sum_components sum_p a(p) conj(b(p)) w(p)``."""
    if a.q != b.q or a.grid != b.grid or a.grid != measure.grid:
        raise PreconditionError("fields must share degree and grid with the measure")
    # multiply by sqrt(w) on each side so large coefficients times tiny masses stay finite
    sw = np.exp(0.5 * measure.log_w)
    return complex(np.sum((a.components * sw) * np.conj(b.components * sw)))


def weighted_norm(a: FormField, measure: WeightedMeasure) -> float:
    return float(np.sqrt(max(weighted_inner(a, a, measure).real, 0.0)))


def truncation_mass(spec: WeightSpec, grid: GridSpec, extend: float = 2.0) -> float:
    """Fraction of the ``e^{-phi}`` mass lying outside the box.

    Estimated by a Riemann sum with the grid spacing over a box ``extend``
    times larger, so mass beyond that box is ignored.
    """
    M = int(np.ceil(extend * grid.L / grid.h))
    axis = grid.h * np.arange(-M, M + 1)
    mesh = np.meshgrid(*([axis] * (2 * grid.n)), indexing="ij")
    z = np.stack([(mesh[2 * j] + 1j * mesh[2 * j + 1]).ravel() for j in range(grid.n)], axis=-1)
    phi = eval_weight(spec, z)
    inside = np.all(np.abs(np.stack([m.ravel() for m in mesh], axis=-1)) <= grid.L + 1e-12, axis=-1)
    lo = phi.min()
    mass = np.exp(-(phi - lo))
    total = mass.sum()
    return float(mass[~inside].sum() / total)
