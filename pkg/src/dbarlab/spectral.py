"""Low-lying spectrum of the box Laplacian, the Neumann operator, and lower bounds.

Everything runs on the symmetrized matrix ``S = W^{1/2} A W^{-1/2}``, which
is Hermitian for an operator A that is self-adjoint in the weighted inner
product. A vector ``y`` in these coordinates is the half-density
``W^{1/2} u`` of a form u, so Euclidean norms of y are weighted norms of u.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import ConfigurationError, SolverError
from .grid import FormField, GridSpec, WeightedMeasure
from .operators import WeightedOperator
from .weights import WeightSpec, lowest_levi_eigenvalue

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    k: int = 8
    tol: float = 1e-8
    max_iter: int = 60
    dense_fallback_dim: int = 2500
    shift: float = 1e-2
    seed: int = 0
    block_size: int | None = None
    thresholds: tuple[float, ...] = (1.0, 2.0, 5.0, 10.0)
    # unknowns whose diagonal entry exceeds stiffness_cap times the smallest
    # one are frozen at zero in the eigensolve (residuals use the full matrix)
    stiffness_cap: float = 1e6

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if not 0 < self.tol <= 1e-4:
            raise ConfigurationError("tol must lie in (0, 1e-4]")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not self.shift > 0:
            raise ConfigurationError("shift must be positive")

    def to_dict(self) -> dict:
        return {
            "k": self.k, "tol": self.tol, "max_iter": self.max_iter,
            "dense_fallback_dim": self.dense_fallback_dim, "shift": self.shift,
            "seed": self.seed, "block_size": self.block_size, "thresholds": list(self.thresholds),
            "stiffness_cap": self.stiffness_cap,
        }


@dataclass(frozen=True)
class EigenPair:
    lam: float
    y: np.ndarray = field(repr=False)
    residual: float

    def form(self, measure: WeightedMeasure) -> FormField:
        """Eigenform coefficients, normalized so that ``||u||_phi = 1``."""
        return measure.from_half_density(1, self.y)


@dataclass
class SpectrumReport:
    eigenpairs: list[EigenPair]
    neumann_norm_estimate: float
    lower_bound_margin: float
    inf_mu: float
    h: float
    counts_below: dict[float, int]
    multiplicities: list[tuple[float, int]]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.eigenpairs])

    @property
    def lambda_min(self) -> float:
        return self.eigenpairs[0].lam

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [p.lam for p in self.eigenpairs],
            "residuals": [p.residual for p in self.eigenpairs],
            "neumann_norm_estimate": self.neumann_norm_estimate,
            "lower_bound_margin": self.lower_bound_margin,
            "lower_bound_slack": lower_bound_slack(self.h),
            "inf_mu": self.inf_mu,
            "counts_below": {repr(float(t)): c for t, c in self.counts_below.items()},
            "multiplicities": [[lam, m] for lam, m in self.multiplicities],
        }


# -- symmetrization and oracles ----------------------------------------------

def symmetrize(op: WeightedOperator, measure: WeightedMeasure) -> sp.csr_matrix:
    """``W^{1/2} A W^{-1/2}`` for an operator on degree-``op.source`` forms."""
    if op.source != op.target:
        raise ConfigurationError("symmetrize needs an operator from a space to itself")
    lw = measure.log_w_stacked(op.source)
    A = op.matrix.tocoo()
    data = A.data * np.exp(0.5 * (lw[A.row] - lw[A.col]))
    return sp.csr_matrix((data, (A.row, A.col)), shape=A.shape)


def hermitian_part(S: sp.spmatrix) -> sp.csr_matrix:
    return (0.5 * (S + S.conj().T)).tocsr()


def hermitian_defect(S: sp.spmatrix) -> float:
    D = S - S.conj().T
    return float(abs(D).max()) if D.nnz else 0.0


def dense_oracle(op: WeightedOperator, measure: WeightedMeasure, max_dim: int = 2500,
                 vectors: bool = False):
    """Full spectrum by direct Hermitian diagonalization of the symmetrized matrix."""
    S = symmetrize(op, measure)
    return dense_spectrum(S, max_dim, vectors)


def dense_spectrum(S, max_dim: int = 2500, vectors: bool = False):
    dim = S.shape[0]
    if dim > max_dim:
        raise ConfigurationError(f"dimension {dim} exceeds dense oracle limit {max_dim}")
    M = S.toarray() if sp.issparse(S) else np.asarray(S)
    M = 0.5 * (M + M.conj().T)
    if vectors:
        return np.linalg.eigh(M)
    return np.linalg.eigvalsh(M)


# -- block Lanczos on the shifted inverse ----------------------------------

def _orthonormalize(X: np.ndarray, basis: list[np.ndarray], rng) -> np.ndarray:
    """Orthonormalize the columns of X against ``basis`` (twice) and each other."""
    for _ in range(2):
        for Q in basis:
            X = X - Q @ (Q.conj().T @ X)
    Qx, R = np.linalg.qr(X)
    # replace numerically dependent directions with fresh random ones
    weak = np.abs(np.diag(R)) < 1e-10 * max(1.0, np.abs(np.diag(R)).max(initial=0.0))
    if np.any(weak):
        Qx[:, weak] = rng.standard_normal((X.shape[0], int(weak.sum())))
        for _ in range(2):
            for Q in basis:
                Qx = Qx - Q @ (Q.conj().T @ Qx)
        Qx, _ = np.linalg.qr(Qx)
    return Qx


def _block_lanczos(apply_inv, dim: int, k: int, b: int, tol_fn, max_blocks: int, rng):
    """Block Krylov tridiagonalization of the (Hermitian) operator ``apply_inv``.

    Full reorthogonalization against every previous block. Returns Ritz
    values (descending), Ritz vectors and residual estimates for the top k.
    """
    X = rng.standard_normal((dim, b)) + 1j * rng.standard_normal((dim, b))
    Q = _orthonormalize(X, [], rng)
    basis = [Q]
    V = np.empty((dim, 0), dtype=complex)
    AV = np.empty((dim, 0), dtype=complex)
    T = np.empty((0, 0), dtype=complex)
    theta = vecs = res = None
    for it in range(max_blocks):
        Qn = basis[-1]
        Z = apply_inv(Qn)
        # grow the projected matrix by one block row and column
        top = V.conj().T @ Z
        corner = Qn.conj().T @ Z
        T = np.block([[T, top], [top.conj().T, corner]])
        V = np.hstack([V, Qn])
        AV = np.hstack([AV, Z])
        Th = 0.5 * (T + T.conj().T)
        theta, s = np.linalg.eigh(Th)
        order = np.argsort(theta)[::-1]
        theta, s = theta[order], s[:, order]
        kk = min(k, len(theta))
        vecs = V @ s[:, :kk]
        R = AV @ s[:, :kk] - vecs * theta[:kk]
        res = np.linalg.norm(R, axis=0)
        if np.all(res <= tol_fn(theta[:kk])) and kk == k:
            break
        if V.shape[1] + b > dim:
            break
        # next block: the part of Z orthogonal to everything so far
        Q = _orthonormalize(Z, basis, rng)
        basis.append(Q)
    return theta[: len(res)], vecs, res


def smallest_eigenpairs(op: WeightedOperator, measure: WeightedMeasure,
                        cfg: SolverConfig = SolverConfig()) -> list[EigenPair]:
    S = hermitian_part(symmetrize(op, measure))
    d = S.diagonal().real
    dmin = max(d.min(), np.finfo(float).tiny)
    # widen the active region until the full-operator residual passes
    cap = cfg.stiffness_cap
    while True:
        active = d <= cap * dmin
        try:
            return smallest_eigenpairs_sym(S, cfg, None if active.all() else active)
        except _FrozenRegionError as exc:
            log.info("stiffness cap %.3g: residual %.3g on the full operator", cap, exc.best_residual)
        cap *= 100.0


class _FrozenRegionError(SolverError):
    """Eigenpairs converged on the active region but not on the full operator."""


_LANCZOS_TOL = 1e-5
_MIN_GUARD = 4
_STALL_WINDOW = 8


def _factor(S: sp.spmatrix, sigma: float):
    """Sparse LU of ``S - sigma I`` for sigma below the spectrum.

    The shifted matrix is Hermitian positive definite, so diagonal pivots are
    stable; they also keep the strong grading of stiff weights intact, which
    partial pivoting would mix.
    """
    A = (S - sigma * sp.identity(S.shape[0], format="csc")).tocsc()
    return sla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                    options={"SymmetricMode": True})


def smallest_eigenpairs_sym(S: sp.spmatrix, cfg: SolverConfig = SolverConfig(),
                            active: np.ndarray | None = None) -> list[EigenPair]:
    """k smallest eigenpairs of a Hermitian PSD sparse matrix.

    Shift-invert block Lanczos around ``-shift``, followed by subspace
    iteration with Rayleigh-Ritz at a shift re-centred below the lowest
    Ritz value. If ``active`` is given, the iteration runs on that principal
    submatrix and vectors are zero elsewhere; the reported residual
    ``||S y - lam y||`` is always recomputed with the full matrix.
    """
    S_full = S.tocsr()
    if active is not None and not np.all(active):
        idx = np.flatnonzero(active)
        S = S_full[idx][:, idx]
    else:
        idx = None
    dim = S.shape[0]
    k = min(cfg.k, dim)
    b = cfg.block_size or min(k, 8)
    rng = np.random.default_rng(cfg.seed)
    sigma = -cfg.shift
    S = S.tocsc()
    lu = _factor(S, sigma)

    def apply_inv(X):
        return lu.solve(np.ascontiguousarray(X))

    # ||S y - lam y|| ~ ||r_inv|| / theta^2 after one inverse step; the
    # subspace iteration below polishes, so the Krylov phase stops early
    lanczos_tol = max(cfg.tol, _LANCZOS_TOL)

    def tol_fn(theta):
        lam = 1 / theta + sigma
        return lanczos_tol * np.maximum(1.0, np.abs(lam)) * theta**2

    max_blocks = max(2, cfg.max_iter)
    # guard vectors keep the k-th Ritz value away from the edge of the block;
    # clustered spectra need several of them
    kk = min(k + max(b, _MIN_GUARD), dim)
    theta, Y, res_inv = _block_lanczos(apply_inv, dim, kk, b, tol_fn, max_blocks, rng)

    # Re-centre the shift just below the lowest Ritz value: clustered
    # eigenvalues separate in the inverse only when the shift is close.
    lam_est = 1 / theta + sigma
    res_est = float(res_inv[0] / theta[0] ** 2)
    delta = max(1e-4 * max(1.0, abs(lam_est[0])), 2 * res_est)
    sigma2 = lam_est[0] - delta
    if sigma2 > sigma:
        sigma = sigma2
        lu = _factor(S, sigma)

    # Subspace iteration with Rayleigh-Ritz on span{(S - sigma)^{-1} Y}. A
    # subspace that ends inside a cluster of nearly equal eigenvalues barely
    # converges, so a stalled iteration gets extra random directions.
    budget = max(10, cfg.max_iter)
    m_max = min(dim, max(4 * kk, kk + 32))
    best = np.inf
    history: list[float] = []
    grown, since = 0, 0
    while True:
        Z = apply_inv(Y)
        Qz, _ = np.linalg.qr(Z)
        H = Qz.conj().T @ (S @ Qz)
        H = 0.5 * (H + H.conj().T)
        lam, s = np.linalg.eigh(H)
        Y = Qz @ s
        R = S @ Y[:, :k] - Y[:, :k] * lam[:k]
        res = np.linalg.norm(R, axis=0)
        worst = float(np.max(res / np.maximum(1.0, np.abs(lam[:k]))))
        best = min(best, worst)
        if worst <= cfg.tol:
            break
        history.append(worst)
        since += 1
        stalled = len(history) > _STALL_WINDOW and history[-1] > 0.1 * history[-1 - _STALL_WINDOW]
        if stalled and grown < 3 and Y.shape[1] < m_max:
            extra = min(Y.shape[1], m_max - Y.shape[1])
            X = rng.standard_normal((dim, extra)) + 1j * rng.standard_normal((dim, extra))
            Y = np.hstack([Y, X])
            log.debug("subspace stalled at %.3g; growing to %d vectors", worst, Y.shape[1])
            grown, since, history = grown + 1, 0, []
        elif since >= budget:
            raise SolverError(f"eigenpairs did not reach tol={cfg.tol}", best_residual=best)
    Y = Y[:, :k]
    if idx is not None:
        Yf = np.zeros((S_full.shape[0], k), dtype=complex)
        Yf[idx] = Y
        Y = Yf
        res = np.linalg.norm(S_full @ Y - Y * lam[:k], axis=0)
        worst = float(np.max(res / np.maximum(1.0, np.abs(lam[:k]))))
        if worst > cfg.tol:
            raise _FrozenRegionError("residual on the full operator exceeds tol",
                              best_residual=worst)
    return _ordered_pairs(lam[:k], Y, res, cfg.tol)


def _phase_fix(y: np.ndarray) -> np.ndarray:
    mag = np.abs(y)
    idx = int(np.argmax(mag > 1e-8 * mag.max()))
    return y * np.exp(-1j * np.angle(y[idx]))


def _ordered_pairs(lam, Y, res, tol) -> list[EigenPair]:
    pairs = [EigenPair(float(l), _phase_fix(Y[:, i]), float(r)) for i, (l, r) in enumerate(zip(lam, res))]
    pairs.sort(key=lambda p: p.lam)
    ctol = 1e-10
    # within a cluster of equal eigenvalues order by the phase-fixed vector
    out, cluster = [], []
    for p in pairs:
        if cluster and abs(p.lam - cluster[0].lam) > ctol * max(1.0, abs(p.lam)):
            out.extend(sorted(cluster, key=_vector_key))
            cluster = []
        cluster.append(p)
    out.extend(sorted(cluster, key=_vector_key))
    return out


def _vector_key(p: EigenPair):
    head = p.y[: min(16, len(p.y))]
    return tuple(np.round(np.concatenate([head.real, head.imag]), 10))


def multiplicities(values, rel_tol: float = 1e-7) -> list[tuple[float, int]]:
    out: list[list] = []
    for v in sorted(values):
        if out and abs(v - out[-1][0]) <= rel_tol * max(1.0, abs(v)):
            out[-1][1] += 1
        else:
            out.append([float(v), 1])
    return [(v, m) for v, m in out]


# -- Neumann operator ---------------------------------------------------------

def conjugate_gradient(matvec, b: np.ndarray, tol: float, max_iter: int, precond=None):
    """Preconditioned CG for a Hermitian positive definite operator.

    Stops when ``||b - A x|| <= tol ||b||``; raises SolverError if a search
    direction has non-positive curvature or max_iter is exhausted.
    """
    x = np.zeros_like(b)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = np.vdot(r, z).real
    best = 1.0
    for _ in range(max_iter):
        Ap = matvec(p)
        curv = np.vdot(p, Ap).real
        if curv <= 0:
            raise SolverError("operator is not positive definite along a search direction",
                              best_residual=best)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        best = min(best, rel)
        if rel <= tol:
            return x
        z = precond(r) if precond is not None else r
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations", best_residual=best)


def solve_sym(S: sp.spmatrix, g: np.ndarray, tol: float, max_iter: int | None = None) -> np.ndarray:
    """Solve ``S y = g`` by Jacobi-preconditioned CG."""
    d = S.diagonal().real
    if np.any(d <= 0):
        raise SolverError("non-positive diagonal; operator is not positive definite")
    inv_d = 1.0 / d
    return conjugate_gradient(lambda v: S @ v, g, tol, max_iter or 20 * S.shape[0],
                              precond=lambda r: inv_d * r)


def apply_neumann(f: FormField, op: WeightedOperator, measure: WeightedMeasure,
                  tol: float = 1e-10) -> FormField:
    """``u`` with ``||box u - f||_phi <= tol ||f||_phi``."""
    S = hermitian_part(symmetrize(op, measure))
    g = measure.to_half_density(f)
    y = solve_sym(S, g, tol)
    return measure.from_half_density(1, y, rel_floor=0.0)


def neumann_norm_power(S: sp.spmatrix, iters: int = 200, tol: float = 1e-10, seed: int = 0) -> float:
    """Largest eigenvalue of ``S^{-1}`` by power iteration with CG solves.

    The Rayleigh quotient is reported; its error is the square of the
    vector error, which matters when the lowest eigenvalues cluster.
    """
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(S.shape[0]) + 1j * rng.standard_normal(S.shape[0])
    y /= np.linalg.norm(y)
    est = 0.0
    for _ in range(iters):
        z = solve_sym(S, y, tol)
        est = float(np.vdot(y, z).real)
        # stop on the eigen-residual; a small change per step alone is
        # also what a tight cluster produces long before convergence
        if np.linalg.norm(z - est * y) <= 1e-8 * est:
            break
        y = z / np.linalg.norm(z)
    return est


# -- lower bounds ----------------------------------------------------------------

def lower_bound_slack(h: float) -> float:
    return 5 * h**2 + 1e-8


def inf_mu_on_grid(spec: WeightSpec, grid: GridSpec) -> float:
    return float(lowest_levi_eigenvalue(spec, grid.points[grid.interior_index]).min())


def lower_bound_check(report: SpectrumReport | float, spec: WeightSpec, grid: GridSpec) -> float:
    """``lambda_min - inf_grid mu``; acceptable when >= ``-lower_bound_slack(h)``."""
    lam = report.lambda_min if isinstance(report, SpectrumReport) else float(report)
    return lam - inf_mu_on_grid(spec, grid)


def spectrum_report(spec: WeightSpec, grid: GridSpec, op: WeightedOperator, measure: WeightedMeasure,
                    cfg: SolverConfig = SolverConfig()) -> SpectrumReport:
    pairs = smallest_eigenpairs(op, measure, cfg)
    lam = np.array([p.lam for p in pairs])
    inf_mu = inf_mu_on_grid(spec, grid)
    lam_min = float(lam[0])
    return SpectrumReport(
        eigenpairs=pairs,
        neumann_norm_estimate=1.0 / lam_min if lam_min > 0 else float("inf"),
        lower_bound_margin=lam_min - inf_mu,
        inf_mu=inf_mu,
        h=grid.h,
        counts_below={float(t): int(np.sum(lam < t)) for t in cfg.thresholds},
        multiplicities=multiplicities(lam, rel_tol=max(10 * cfg.tol, 1e-9)),
    )
