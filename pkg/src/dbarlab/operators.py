"""Discrete dbar-complex: central-difference dbar, exact weighted adjoints, box Laplacian."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigurationError, PreconditionError
from .grid import FormField, GridSpec, WeightedMeasure, weighted_inner
from .weights import WeightSpec, eval_gradient

# exp() overflows just above 709
_MAX_LOG_RATIO = 700.0


@dataclass(frozen=True)
class WeightedOperator:
    """Sparse map between stacked form vectors of degree ``source`` -> ``target``."""

    matrix: sp.csr_matrix
    source: int
    target: int
    grid: GridSpec
    name: str = ""
    adjoint_of: str | None = None

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, f: FormField) -> FormField:
        if f.q != self.source or f.grid != self.grid:
            raise PreconditionError(f"{self.name} expects a degree-{self.source} field on its grid")
        return FormField.from_stacked(self.target, self.grid, self.matrix @ f.stacked())

    def __matmul__(self, other: "WeightedOperator") -> "WeightedOperator":
        if other.target != self.source:
            raise PreconditionError("degree mismatch in operator product")
        return WeightedOperator(
            (self.matrix @ other.matrix).tocsr(), other.source, self.target, self.grid,
            f"{self.name}*{other.name}",
        )

    def __add__(self, other: "WeightedOperator") -> "WeightedOperator":
        if (other.source, other.target) != (self.source, self.target):
            raise PreconditionError("degree mismatch in operator sum")
        return WeightedOperator(
            (self.matrix + other.matrix).tocsr(), self.source, self.target, self.grid,
            f"{self.name}+{other.name}",
        )


# -- stencils --------------------------------------------------------------

def _central_1d(N: int, h: float) -> sp.csr_matrix:
    # values beyond the grid are treated as zero
    off = np.ones(N - 1) / (2 * h)
    return sp.diags([-off, off], [-1, 1], format="csr")


@lru_cache(maxsize=16)
def _partials(grid: GridSpec) -> tuple[sp.csr_matrix, ...]:
    """Central first differences along each real axis, full grid -> full grid."""
    d = _central_1d(grid.N, grid.h)
    naxes = 2 * grid.n
    out = []
    for a in range(naxes):
        left = sp.identity(grid.N**a, format="csr")
        right = sp.identity(grid.N ** (naxes - a - 1), format="csr")
        out.append(sp.kron(sp.kron(left, d), right, format="csr"))
    return tuple(out)


def dzbar(grid: GridSpec, j: int) -> sp.csr_matrix:
    """``d/dzbar_j = (d/dx_j + i d/dy_j) / 2`` on the full grid (j 0-based)."""
    p = _partials(grid)
    return (0.5 * (p[2 * j] + 1j * p[2 * j + 1])).tocsr()


def dz(grid: GridSpec, j: int) -> sp.csr_matrix:
    p = _partials(grid)
    return (0.5 * (p[2 * j] - 1j * p[2 * j + 1])).tocsr()


@lru_cache(maxsize=16)
def _embedding(grid: GridSpec) -> sp.csr_matrix:
    """Interior points -> full grid (zero extension)."""
    idx = grid.interior_index
    return sp.csr_matrix((np.ones(len(idx)), (idx, np.arange(len(idx)))), shape=(grid.P, grid.P_int))


@lru_cache(maxsize=16)
def dbar0_matrix(grid: GridSpec) -> sp.csr_matrix:
    restrict = _embedding(grid).T.tocsr()
    return sp.vstack([restrict @ dzbar(grid, j) for j in range(grid.n)], format="csr")


@lru_cache(maxsize=16)
def dbar1_matrix(grid: GridSpec) -> sp.csr_matrix:
    if grid.n == 1:
        return sp.csr_matrix((0, grid.dofs(1)), dtype=complex)
    E = _embedding(grid)
    # (1,2)-coefficient: d u_2/dzbar_1 - d u_1/dzbar_2
    return sp.hstack([-(dzbar(grid, 1) @ E), dzbar(grid, 0) @ E], format="csr")


def dbar_operator(grid: GridSpec, q: int) -> WeightedOperator:
    if q == 0:
        return WeightedOperator(dbar0_matrix(grid), 0, 1, grid, "dbar0")
    if q == 1:
        return WeightedOperator(dbar1_matrix(grid), 1, 2, grid, "dbar1")
    raise ConfigurationError("dbar is defined here for q = 0, 1")


def dbar_0(f: FormField, grid: GridSpec | None = None) -> FormField:
    grid = grid or f.grid
    return dbar_operator(grid, 0).apply(f)


def dbar_1(u: FormField, grid: GridSpec | None = None) -> FormField:
    grid = grid or u.grid
    return dbar_operator(grid, 1).apply(u)


# -- adjoints ----------------------------------------------------------------

def discrete_adjoint(
    A: WeightedOperator, measure_src: WeightedMeasure, measure_tgt: WeightedMeasure | None = None
) -> WeightedOperator:
    """``W_src^{-1} A^H W_tgt``: adjoint of A for the weighted inner products.

    Entries are scaled by ``exp(log w_tgt - log w_src)`` so that fast-growing
    weights do not underflow the individual masses.
    """
    measure_tgt = measure_tgt or measure_src
    lw_src = measure_src.log_w_stacked(A.source)
    lw_tgt = measure_tgt.log_w_stacked(A.target)
    AH = A.matrix.conj().T.tocoo()
    # AH rows index A.source dofs, columns index A.target dofs
    expo = lw_tgt[AH.col] - lw_src[AH.row]
    if expo.size and expo.max() > _MAX_LOG_RATIO:
        raise ConfigurationError(
            f"weight changes by e^{expo.max():.0f} between neighbouring points; refine the grid or shrink L"
        )
    data = AH.data * np.exp(expo)
    M = sp.csr_matrix((data, (AH.row, AH.col)), shape=AH.shape)
    return WeightedOperator(M, A.target, A.source, A.grid, f"{A.name}*", adjoint_of=A.name)


@dataclass(frozen=True)
class DbarComplex:
    spec: WeightSpec
    grid: GridSpec
    measure: WeightedMeasure
    d0: WeightedOperator
    d0_star: WeightedOperator
    d1: WeightedOperator
    d1_star: WeightedOperator


@lru_cache(maxsize=8)
def dbar_complex(spec: WeightSpec, grid: GridSpec) -> DbarComplex:
    if spec.n != grid.n:
        raise ConfigurationError("weight and grid dimensions differ")
    measure = WeightedMeasure.from_weight(spec, grid)
    d0 = dbar_operator(grid, 0)
    d1 = dbar_operator(grid, 1)
    return DbarComplex(spec, grid, measure, d0, discrete_adjoint(d0, measure), d1, discrete_adjoint(d1, measure))


def assemble_box_laplacian(spec: WeightSpec, grid: GridSpec) -> WeightedOperator:
    """``dbar0 dbar0* + dbar1* dbar1`` on (0,1)-forms."""
    c = dbar_complex(spec, grid)
    box = c.d0 @ c.d0_star
    if grid.n > 1:
        box = box + c.d1_star @ c.d1
    return WeightedOperator(box.matrix, 1, 1, grid, "box")


def dbar_star_formula(u: FormField, spec: WeightSpec | None, grid: GridSpec | None = None) -> FormField:
    """Pointwise ``-sum_j (du_j/dz_j - dphi/dz_j * u_j)`` with central differences.

    ``spec=None`` stands for the zero weight.
    """
    grid = grid or u.grid
    if u.q != 1:
        raise PreconditionError("dbar_star_formula acts on (0,1)-forms")
    if spec is None:
        g = np.zeros((grid.P, grid.n), dtype=complex)
    else:
        g = eval_gradient(spec, grid.points)
    out = np.zeros(grid.P, dtype=complex)
    for j in range(grid.n):
        out -= dz(grid, j) @ u.components[j] - g[:, j] * u.components[j]
    return FormField(0, grid, out[None, :])


def q_form(u: FormField, v: FormField, spec: WeightSpec, grid: GridSpec | None = None) -> complex:
    """Dirichlet form ``<dbar u, dbar v> + <dbar* u, dbar* v>`` with the exact discrete adjoint."""
    grid = grid or u.grid
    c = dbar_complex(spec, grid)
    val = weighted_inner(c.d0_star.apply(u), c.d0_star.apply(v), c.measure)
    if grid.n > 1:
        val += weighted_inner(c.d1.apply(u), c.d1.apply(v), c.measure)
    return val


# -- export ------------------------------------------------------------------

def export_matrix_market(op: WeightedOperator, path) -> None:
    scipy.io.mmwrite(str(path), op.matrix, comment=f"{op.name}: degree {op.source} -> {op.target}")


def export_field_csv(f: FormField, path) -> None:
    """Rows ``index,re,im`` over the stacked vector of f."""
    v = f.stacked()
    with open(path, "w") as fh:
        fh.write("index,re,im\n")
        for i, z in enumerate(v):
            fh.write(f"{i},{float(z.real)!r},{float(z.imag)!r}\n")
