"""Energy identity checks, tail masses, translation defects and the compactness probe.

Tail masses and weighted norms are evaluated from half-density vectors
``sqrt(w) * u`` so that rapidly growing weights never form ``|u|^2`` and
``w`` separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConfigurationError, PreconditionError
from .grid import FormField, GridSpec, WeightedMeasure, weighted_norm
from .operators import assemble_box_laplacian, dbar_1, dbar_star_formula, dzbar, q_form
from .spectral import EigenPair, SolverConfig, SpectrumReport, spectrum_report
from .weights import DOUBLE_STAR, ConditionVerdict, WeightSpec, check_condition, levi_matrix, lowest_levi_eigenvalue

FormKind = Literal["gaussian_bump", "polynomial_bump", "random_smooth"]
FORM_KINDS = ("gaussian_bump", "polynomial_bump", "random_smooth")


# -- test forms ------------------------------------------------------------------

def smooth_bump(r: np.ndarray, rho: float) -> np.ndarray:
    """``exp(1 - 1/(1 - (r/rho)^2))`` inside ``r < rho``, zero outside; equals 1 at r=0."""
    t = np.asarray(r, dtype=float) / rho
    out = np.zeros_like(t)
    m = t < 1
    out[m] = np.exp(1 - 1 / (1 - t[m] ** 2))
    return out


@dataclass(frozen=True)
class TestFormGenerator:
    """Seeded smooth (0,1)-forms supported in ``|z| < support * L``.

    With the default ``support = 0.5`` every form vanishes on the outer
    quarter of the box along each axis.
    """

    __test__ = False  # keep pytest from collecting this class

    seed: int = 0
    kind: FormKind = "random_smooth"
    support: float = 0.5
    modes: int = 3

    def __post_init__(self):
        if self.kind not in FORM_KINDS:
            raise ConfigurationError(f"unknown test form kind {self.kind!r}")
        if not 0 < self.support <= 0.75:
            raise ConfigurationError("support must lie in (0, 0.75]")

    def coefficients(self, n: int, index: int = 0):
        """Random parameters of form number ``index``; independent of the grid."""
        rng = np.random.default_rng([self.seed, index, n])
        if self.kind == "gaussian_bump":
            centre = rng.uniform(-0.3, 0.3, (n, 2))
            width = rng.uniform(0.2, 0.4)
            amp = rng.normal(size=n) + 1j * rng.normal(size=n)
            return ("gaussian_bump", centre, width, amp)
        if self.kind == "polynomial_bump":
            # coefficients of 1, z_j, zbar_j, z_j zbar_k per component
            c = rng.normal(size=(n, 1 + 2 * n + n * n)) + 1j * rng.normal(size=(n, 1 + 2 * n + n * n))
            return ("polynomial_bump", c)
        waves = rng.integers(-2, 3, size=(n, self.modes, 2, n))
        amp = rng.normal(size=(n, self.modes)) + 1j * rng.normal(size=(n, self.modes))
        return ("random_smooth", waves, amp)

    def values(self, z: np.ndarray, L: float, index: int = 0) -> np.ndarray:
        """Component values at points ``z`` of shape ``(P, n)``; returns ``(n, P)``."""
        n = z.shape[1]
        rho = self.support * L
        r = np.sqrt(np.sum(np.abs(z) ** 2, axis=1))
        b = smooth_bump(r, rho)
        par = self.coefficients(n, index)
        x = z / rho  # scale-free coordinates in the unit ball
        out = np.zeros((n, len(z)), dtype=complex)
        if par[0] == "gaussian_bump":
            _, centre, width, amp = par
            c = centre[:, 0] + 1j * centre[:, 1]
            g = np.exp(-np.sum(np.abs(x - c) ** 2, axis=1) / (2 * width**2))
            out[:] = amp[:, None] * g
        elif par[0] == "polynomial_bump":
            _, c = par
            basis = [np.ones(len(z))] + [x[:, j] for j in range(n)] + [np.conj(x[:, j]) for j in range(n)]
            basis += [x[:, j] * np.conj(x[:, k]) for j in range(n) for k in range(n)]
            out[:] = c @ np.array(basis)
        else:
            _, waves, amp = par
            for j in range(n):
                for m in range(waves.shape[1]):
                    kx, ky = waves[j, m]
                    phase = np.pi / 2 * (x.real @ kx + x.imag @ ky)
                    out[j] += amp[j, m] * np.exp(1j * phase)
        return out * b

    def form(self, grid: GridSpec, index: int = 0) -> FormField:
        return FormField.from_components(1, grid, self.values(grid.points, grid.L, index))

    def batch(self, grid: GridSpec, count: int) -> list[FormField]:
        return [self.form(grid, i) for i in range(count)]


# -- Kohn-Morrey -------------------------------------------------------------------

def _measure(spec: WeightSpec | None, grid: GridSpec) -> WeightedMeasure:
    return WeightedMeasure.uniform(grid) if spec is None else WeightedMeasure.from_weight(spec, grid)


def _check_interior(u: FormField, layers: int = 2):
    if u.q != 1:
        raise PreconditionError("expected a (0,1)-form")
    if not u.vanishes_on_boundary(layers):
        raise PreconditionError(f"form must vanish on the outer {layers} grid layers")


def kohn_morrey_sides(u: FormField, spec: WeightSpec | None, grid: GridSpec | None = None) -> dict:
    """Both sides of the energy identity for an interior-supported form.

    ``lhs = ||dbar u||^2 + ||dbar* u||^2`` (the adjoint by its pointwise
    formula), ``gradient = sum_jk ||du_j/dzbar_k||^2`` and
    ``levi = int <M u, u> e^{-phi}``. ``spec=None`` is the zero weight.
    """
    grid = grid or u.grid
    _check_interior(u)
    ms = _measure(spec, grid)
    lhs = weighted_norm(dbar_star_formula(u, spec, grid), ms) ** 2
    if grid.n > 1:
        lhs += weighted_norm(dbar_1(u), ms) ** 2
    sw = np.exp(0.5 * ms.log_w)
    grad = 0.0
    for j in range(grid.n):
        for k in range(grid.n):
            grad += float(np.sum(np.abs((dzbar(grid, k) @ u.components[j]) * sw) ** 2))
    levi = 0.0
    if spec is not None:
        H = levi_matrix(spec, grid.points)
        v = u.components * sw
        levi = float(np.einsum("pjk,jp,kp->", H, v, np.conj(v)).real)
    return {"lhs": lhs, "gradient": grad, "levi": levi}


def kohn_morrey_residual(u: FormField, spec: WeightSpec | None, grid: GridSpec | None = None) -> float:
    """``|lhs - (gradient + levi)|`` for the energy identity; zero up to O(h^2)."""
    s = kohn_morrey_sides(u, spec, grid)
    return abs(s["lhs"] - (s["gradient"] + s["levi"]))


def komo_inequality_margin(u: FormField, spec: WeightSpec | None, grid: GridSpec | None = None) -> float:
    """``lhs - levi``; nonnegative up to discretization error."""
    s = kohn_morrey_sides(u, spec, grid)
    return s["lhs"] - s["levi"]


def refinement_ratio(errors, hs) -> list[float]:
    """Error ratio per halving of h, ``2^p`` with p the observed order between levels."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    p = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    return list(2.0**p)


# -- tails and translations ---------------------------------------------------------

def _check_radius(R: float, grid: GridSpec):
    if not 0 < R < grid.L:
        raise ConfigurationError(f"R must lie in (0, L={grid.L}), got {R}")


def tail_mass_half_density(y: np.ndarray, R: float, grid: GridSpec, normalized: bool = True) -> float:
    """Mass of a stacked degree-1 half-density outside the ball of radius R."""
    _check_radius(R, grid)
    r = grid.radius[grid.index_set(1)]
    a2 = np.abs(y) ** 2
    tail = float(np.sum(a2[r > R]))
    if not normalized:
        return tail
    total = float(np.sum(a2))
    return tail / total if total > 0 else 0.0


def tail_mass(u: FormField, R: float, spec: WeightSpec, grid: GridSpec | None = None,
              normalized: bool = True) -> float:
    """Weighted mass of u outside ``|z| <= R``, as a fraction of ``||u||^2`` by default."""
    grid = grid or u.grid
    ms = WeightedMeasure.from_weight(spec, grid)
    return tail_mass_half_density(ms.to_half_density(u), R, grid, normalized)


def inf_mu_outside(spec: WeightSpec, grid: GridSpec, R: float) -> float:
    """Smallest Levi eigenvalue over interior grid points with ``|z| >= R``."""
    pts = grid.interior_index[grid.radius[grid.interior_index] >= R]
    if len(pts) == 0:
        return float("inf")
    return float(lowest_levi_eigenvalue(spec, grid.points[pts]).min())


@dataclass(frozen=True)
class TailBound:
    R: float
    tail: float  # unnormalized mass outside the ball
    q_value: float
    inf_mu: float
    bound: float  # q_value / inf_mu, inf when vacuous
    margin: float
    vacuous: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("R", "tail", "q_value", "inf_mu", "bound", "margin", "vacuous")}


def _tail_bound(tail: float, q: float, R: float, spec: WeightSpec, grid: GridSpec) -> TailBound:
    inf_mu = inf_mu_outside(spec, grid, R)
    vacuous = not inf_mu > 1e-14
    bound = float("inf") if vacuous else q / inf_mu
    return TailBound(R, tail, q, inf_mu, bound, bound - tail, vacuous)


def tail_bound_check(u: FormField, R: float, spec: WeightSpec, grid: GridSpec | None = None) -> TailBound:
    """``Q(u,u) / inf_{|z|>=R} mu - tail(u, R)``; nonnegative up to O(h^2)."""
    grid = grid or u.grid
    _check_radius(R, grid)
    q = float(q_form(u, u, spec, grid).real)
    return _tail_bound(tail_mass(u, R, spec, grid, normalized=False), q, R, spec, grid)


def eigenform_tail_bound(pair: EigenPair, R: float, spec: WeightSpec, grid: GridSpec) -> TailBound:
    """Tail bound for an eigenform rescaled to ``Q = 1`` (its tail mass is divided by lambda)."""
    if pair.lam <= 0:
        raise PreconditionError("eigenvalue must be positive to normalize Q = 1")
    tail = tail_mass_half_density(pair.y, R, grid) / pair.lam
    return _tail_bound(tail, 1.0, R, spec, grid)


def _grid_steps(shift, grid: GridSpec) -> np.ndarray:
    s = np.atleast_1d(np.asarray(shift, dtype=complex))
    if s.shape != (grid.n,):
        raise ConfigurationError(f"shift must have {grid.n} complex entries")
    real = np.stack([s.real, s.imag], axis=-1).ravel() / grid.h
    steps = np.rint(real)
    if np.max(np.abs(real - steps)) > 1e-9:
        raise ConfigurationError("shift must be a multiple of the grid spacing along every axis")
    return steps.astype(int)


def translation_defect(u: FormField, shift, R: float, spec: WeightSpec, grid: GridSpec | None = None) -> float:
    """``||u(. + shift) - u||`` over the ball ``|z| < R`` in the weighted norm."""
    grid = grid or u.grid
    _check_radius(R, grid)
    steps = _grid_steps(shift, grid)
    size = float(np.sqrt(np.sum(np.abs(np.atleast_1d(np.asarray(shift, dtype=complex))) ** 2)))
    if size >= grid.L - R:
        raise ConfigurationError("|shift| must be smaller than L - R")
    ms = WeightedMeasure.from_weight(spec, grid)
    inside = grid.radius < R
    sw = np.exp(0.5 * ms.log_w[inside])
    total = 0.0
    for c in u.components:
        arr = c.reshape(grid.shape)
        # u(z + shift) read at z: roll backwards; no wrap-around reaches the ball
        shifted = np.roll(arr, tuple(-steps), axis=tuple(range(arr.ndim))).ravel()
        total += float(np.sum(np.abs((shifted[inside] - c[inside]) * sw) ** 2))
    return float(np.sqrt(total))


# -- compactness probe -------------------------------------------------------------

@dataclass(frozen=True)
class ProbeConfig:
    radii: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)
    # tail radii as fractions of L
    tail_fractions: tuple[float, ...] = (1 / 6, 1 / 4, 1 / 3, 1 / 2)
    shift_steps: tuple[int, ...] = (1, 2, 4)
    samples_per_sphere: int = 64
    growth_floor: float = 10.0
    decay_factor: float = 0.1
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not all(0 < f < 1 for f in self.tail_fractions):
            raise ConfigurationError("tail fractions must lie in (0, 1)")
        if not 0 < self.decay_factor < 1:
            raise ConfigurationError("decay_factor must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "radii": list(self.radii), "tail_fractions": list(self.tail_fractions),
            "shift_steps": list(self.shift_steps), "samples_per_sphere": self.samples_per_sphere,
            "growth_floor": self.growth_floor, "decay_factor": self.decay_factor, "seed": self.seed,
            "solver": self.solver.to_dict(),
        }


@dataclass
class CompactnessDiagnosis:
    weight: str
    condition: ConditionVerdict
    eigenvalues: list[float]
    tail_table: list[dict]  # R, tail (max over eigenforms, Q = 1), bound, margin, vacuous
    translation_table: list[dict]  # shift, defect (max over eigenforms)
    verdict: Literal["compatible", "incompatible", "inconclusive"]
    tail_decay: float  # last tail / first tail
    reasons: list[str]
    spectrum: SpectrumReport | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "weight": self.weight,
            "condition": self.condition.to_dict(),
            "eigenvalues": list(self.eigenvalues),
            "tail_table": self.tail_table,
            "translation_table": self.translation_table,
            "verdict": self.verdict,
            "tail_decay": self.tail_decay,
            "reasons": list(self.reasons),
        }


def _non_increasing(v) -> bool:
    v = np.asarray(v)
    return bool(np.all(np.diff(v) <= 1e-12 * np.maximum(1.0, np.abs(v[:-1]))))


def compactness_probe(spec: WeightSpec, grid: GridSpec, cfg: ProbeConfig = ProbeConfig()) -> CompactnessDiagnosis:
    """Evidence for or against a compact Neumann operator at finite truncation.

    Compatible when the growth proxy for mu holds and the largest tail mass of
    the Q-normalized low eigenforms decays by ``decay_factor`` across the
    tail radii; incompatible when mu has a flat floor and the tails do not
    decay; inconclusive otherwise. The translation table is reported but does
    not enter the verdict.
    """
    cond = check_condition(spec, DOUBLE_STAR, cfg.radii, cfg.samples_per_sphere,
                           growth_floor=cfg.growth_floor, seed=cfg.seed)
    op = assemble_box_laplacian(spec, grid)
    ms = WeightedMeasure.from_weight(spec, grid)
    report = spectrum_report(spec, grid, op, ms, cfg.solver)
    pairs = [p for p in report.eigenpairs if p.lam > 0]

    tail_table = []
    for f in cfg.tail_fractions:
        R = f * grid.L
        rows = [eigenform_tail_bound(p, R, spec, grid) for p in pairs]
        worst = max(rows, key=lambda t: t.tail)
        tail_table.append({
            "R": R, "tail": worst.tail, "bound": worst.bound,
            "margin": min(t.margin for t in rows), "vacuous": worst.vacuous,
        })
    tails = [row["tail"] for row in tail_table]
    decay = tails[-1] / tails[0] if tails[0] > 0 else 0.0
    decaying = decay <= cfg.decay_factor and _non_increasing(tails)

    R_shift = cfg.tail_fractions[-1] * grid.L
    forms = [p.form(ms) for p in pairs]
    translation_table = []
    for s in cfg.shift_steps:
        size = s * grid.h
        if size >= grid.L - R_shift:
            continue
        shift = np.zeros(grid.n, dtype=complex)
        shift[0] = size
        d = max(translation_defect(u, shift, R_shift, spec, grid) for u in forms)
        translation_table.append({"shift": size, "defect": d})

    reasons = [f"growth proxy for mu: {cond.verdict}"]
    reasons.append(f"largest eigenform tail decays by factor {decay:.3g} over R")
    if cond.verdict == "holds" and decaying:
        verdict = "compatible"
    elif cond.verdict == "fails" and cond.flat_tail and not decaying:
        verdict = "incompatible"
    else:
        verdict = "inconclusive"
    return CompactnessDiagnosis(spec.label(), cond, [p.lam for p in report.eigenpairs], tail_table,
                                translation_table, verdict, float(decay), reasons, report)
