"""Plurisubharmonic weights built from |z_j|^{2m} and (|z|^2)^m terms.

Every term has a closed-form gradient and Levi matrix, so the complex
Hessian is available exactly at any point. Points are arrays of shape
``(..., n)``; all evaluators broadcast over the leading axes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError

STAR = "star"
DOUBLE_STAR = "double_star"


@dataclass(frozen=True)
class Term:
    """One summand ``a * |z_j|^{2m}`` (coordinate) or ``a * (|z|^2)^m`` (radial).

    ``j`` is 1-based, matching the usual z_1, z_2 labelling.
    """

    a: float
    kind: Literal["coordinate", "radial"]
    m: int
    j: int | None = None

    def to_dict(self) -> dict:
        d = {"a": self.a, "kind": self.kind, "m": self.m}
        if self.kind == "coordinate":
            d["j"] = self.j
        return d


@dataclass(frozen=True)
class WeightSpec:
    n: int
    terms: tuple[Term, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"n must be 1 or 2, got {self.n}")
        if not self.terms:
            raise ConfigurationError("weight needs at least one term")
        for t in self.terms:
            if not (t.a > 0 and np.isfinite(t.a)):
                raise ConfigurationError(f"term coefficient must be positive, got {t.a}")
            if int(t.m) != t.m or t.m < 1:
                raise ConfigurationError(f"term exponent m must be an integer >= 1, got {t.m}")
            if t.kind == "coordinate":
                if t.j is None or not 1 <= t.j <= self.n:
                    raise ConfigurationError(f"coordinate index j={t.j} out of range for n={self.n}")
            elif t.kind != "radial":
                raise ConfigurationError(f"unknown term kind {t.kind!r}")

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {"n": self.n, "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict, name: str = "") -> "WeightSpec":
        try:
            terms = tuple(
                Term(a=float(t["a"]), kind=t["kind"], m=int(t["m"]), j=t.get("j"))
                for t in d["terms"]
            )
            return cls(n=int(d["n"]), terms=terms, name=name or d.get("name", ""))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed weight spec: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WeightSpec":
        return cls.from_dict(json.loads(text))

    def scaled(self, c: float) -> "WeightSpec":
        return WeightSpec(self.n, tuple(Term(c * t.a, t.kind, t.m, t.j) for t in self.terms), self.name)

    def label(self) -> str:
        if self.name:
            return self.name
        parts = []
        for t in self.terms:
            base = f"|z{t.j}|" if t.kind == "coordinate" else "|z|"
            parts.append(f"{t.a:g}*{base}^{2 * t.m}")
        return " + ".join(parts)


def radial(n: int, m: int, a: float = 1.0, name: str = "") -> WeightSpec:
    return WeightSpec(n, (Term(a, "radial", m),), name)


def coordinate_sum(n: int, exponents: Sequence[int], a: float = 1.0, name: str = "") -> WeightSpec:
    """``a * sum_j |z_j|^{2 m_j}`` with ``m_j = exponents[j-1]``."""
    return WeightSpec(n, tuple(Term(a, "coordinate", m, j + 1) for j, m in enumerate(exponents)), name)


def _as_points(spec: WeightSpec, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if z.ndim == 0:
        z = z[None]
    if z.shape[-1] != spec.n:
        raise ConfigurationError(f"point dimension {z.shape[-1]} does not match n={spec.n}")
    return z


def eval_weight(spec: WeightSpec, z) -> np.ndarray:
    z = _as_points(spec, z)
    s = np.sum(np.abs(z) ** 2, axis=-1)
    out = np.zeros(z.shape[:-1])
    for t in spec.terms:
        if t.kind == "radial":
            out = out + t.a * s**t.m
        else:
            out = out + t.a * np.abs(z[..., t.j - 1]) ** (2 * t.m)
    return out


def eval_gradient(spec: WeightSpec, z) -> np.ndarray:
    """Holomorphic derivatives ``d phi / d z_j``, shape ``(..., n)``."""
    z = _as_points(spec, z)
    zb = np.conj(z)
    s = np.sum(np.abs(z) ** 2, axis=-1)
    g = np.zeros(z.shape, dtype=complex)
    for t in spec.terms:
        if t.kind == "radial":
            g += (t.a * t.m * s ** (t.m - 1))[..., None] * zb
        else:
            j = t.j - 1
            g[..., j] += t.a * t.m * zb[..., j] * np.abs(z[..., j]) ** (2 * (t.m - 1))
    return g


def levi_matrix(spec: WeightSpec, z) -> np.ndarray:
    """Levi matrix ``d^2 phi / dz_j dzbar_k``, shape ``(..., n, n)``."""
    z = _as_points(spec, z)
    n = spec.n
    s = np.sum(np.abs(z) ** 2, axis=-1)
    H = np.zeros(z.shape[:-1] + (n, n), dtype=complex)
    eye = np.eye(n)
    for t in spec.terms:
        if t.kind == "radial":
            H += (t.a * t.m * s ** (t.m - 1))[..., None, None] * eye
            if t.m >= 2:
                # entry (j, k) carries z_k * conj(z_j)
                outer = np.conj(z)[..., :, None] * z[..., None, :]
                H += (t.a * t.m * (t.m - 1) * s ** (t.m - 2))[..., None, None] * outer
        else:
            j = t.j - 1
            H[..., j, j] += t.a * t.m**2 * np.abs(z[..., j]) ** (2 * (t.m - 1))
    return H


def hermitian_min_eig(H: np.ndarray) -> np.ndarray:
    """Lowest eigenvalue of 1x1 or 2x2 Hermitian matrices in closed form."""
    n = H.shape[-1]
    if n == 1:
        return H[..., 0, 0].real.copy()
    if n != 2:
        raise ConfigurationError("closed-form eigenvalue only for n <= 2")
    a = H[..., 0, 0].real
    d = H[..., 1, 1].real
    b2 = np.abs(H[..., 0, 1]) ** 2
    mean = 0.5 * (a + d)
    rad = np.sqrt((0.5 * (a - d)) ** 2 + b2)
    top = mean + rad
    det = a * d - b2
    # mean - rad cancels when the matrix is nearly singular; det/top does not
    with np.errstate(invalid="ignore", divide="ignore"):
        alt = det / np.where(top > 0, top, 1.0)
    return np.where((rad > 0.5 * np.abs(mean)) & (top > 0), alt, mean - rad)


@dataclass(frozen=True)
class LeviEval:
    point: np.ndarray
    gradient: np.ndarray
    levi: np.ndarray
    mu: float


def eval_levi(spec: WeightSpec, z) -> LeviEval:
    z = _as_points(spec, z)
    if z.ndim != 1:
        raise ConfigurationError("eval_levi takes a single point; use levi_matrix for batches")
    H = levi_matrix(spec, z)
    return LeviEval(point=z, gradient=eval_gradient(spec, z), levi=H, mu=float(hermitian_min_eig(H)))


def lowest_levi_eigenvalue(spec: WeightSpec, z) -> np.ndarray:
    return hermitian_min_eig(levi_matrix(spec, z))


def finite_difference_levi(spec: WeightSpec, z, h: float = 1e-3) -> np.ndarray:
    """Levi matrix from central differences of phi in real coordinates.

    Second-order accurate; shares nothing with the closed forms except
    :func:`eval_weight`.
    """
    if not h > 0:
        raise ConfigurationError("step h must be positive")
    z = _as_points(spec, z)
    n = spec.n
    x = np.concatenate([z.real, z.imag], axis=-1)  # (x_1..x_n, y_1..y_n)

    def phi(xr):
        return eval_weight(spec, xr[..., :n] + 1j * xr[..., n:])

    dim = 2 * n
    D2 = np.zeros(z.shape[:-1] + (dim, dim))
    f0 = phi(x)
    for a in range(dim):
        ea = np.zeros(dim)
        ea[a] = h
        D2[..., a, a] = (phi(x + ea) - 2 * f0 + phi(x - ea)) / h**2
        for b in range(a + 1, dim):
            eb = np.zeros(dim)
            eb[b] = h
            v = (phi(x + ea + eb) - phi(x + ea - eb) - phi(x - ea + eb) + phi(x - ea - eb)) / (4 * h**2)
            D2[..., a, b] = D2[..., b, a] = v
    H = np.zeros(z.shape[:-1] + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            xj, yj, xk, yk = j, n + j, k, n + k
            H[..., j, k] = 0.25 * (
                D2[..., xj, xk] + D2[..., yj, yk] + 1j * (D2[..., xj, yk] - D2[..., yj, xk])
            )
    return H


# -- sphere sampling and growth conditions --------------------------------

def sphere_samples(n: int, radius: float, count: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic quasi-uniform points on the sphere |z| = radius.

    Returns ``(points, is_axis)``. For n = 2 a fixed share of points is placed
    on the coordinate circles {z_2 = 0} and {z_1 = 0}, where coordinate-type
    weights degenerate; the rest come from a scrambled Halton sequence in
    Hopf coordinates.
    """
    if n == 1:
        if count < 8:
            raise ConfigurationError("samples_per_sphere must be >= 8")
        off = np.random.default_rng(seed).random()
        theta = 2 * np.pi * (np.arange(count) + off) / count
        return (radius * np.exp(1j * theta))[:, None], np.ones(count, dtype=bool)
    if count < 16:
        raise ConfigurationError("samples_per_sphere must be >= 16 for n = 2")
    n_axis = max(4, count // 8)
    n_bulk = count - 2 * n_axis
    ang = 2 * np.pi * (np.arange(n_axis) + 0.5) / n_axis
    c = radius * np.exp(1j * ang)
    zero = np.zeros(n_axis, dtype=complex)
    axis_pts = np.concatenate([np.stack([c, zero], -1), np.stack([zero, c], -1)])
    u = qmc.Halton(d=3, scramble=True, seed=seed).random(n_bulk)
    r1 = radius * np.sqrt(u[:, 0])
    r2 = radius * np.sqrt(1 - u[:, 0])
    bulk = np.stack([r1 * np.exp(2j * np.pi * u[:, 1]), r2 * np.exp(2j * np.pi * u[:, 2])], -1)
    pts = np.concatenate([axis_pts, bulk])
    is_axis = np.zeros(len(pts), dtype=bool)
    is_axis[: 2 * n_axis] = True
    return pts, is_axis


@dataclass(frozen=True)
class ConditionVerdict:
    condition: str
    radii: tuple[float, ...]
    inf_per_radius: tuple[float, ...]
    axis_mu: tuple[float, ...]
    verdict: Literal["holds", "fails", "inconclusive"]
    margin: float
    floor: float
    growth_floor: float

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "radii": list(self.radii),
            "inf_per_radius": list(self.inf_per_radius),
            "axis_mu": list(self.axis_mu),
            "verdict": self.verdict,
            "margin": self.margin,
            "floor": self.floor,
            "growth_floor": self.growth_floor,
        }

    @property
    def flat_tail(self) -> bool:
        """True when inf mu is constant over the last three radii."""
        last = np.asarray(self.inf_per_radius[-3:])
        return bool(np.ptp(last) <= 1e-9 * max(1.0, float(np.max(np.abs(last)))))


def _increasing(v: np.ndarray) -> bool:
    return bool(np.all(np.diff(v) > 1e-9 * np.maximum(1.0, np.abs(v[:-1]))))


def check_condition(
    spec: WeightSpec,
    which: str,
    radii: Sequence[float],
    samples_per_sphere: int = 64,
    floor: float = 1e-6,
    growth_floor: float = 10.0,
    seed: int = 0,
) -> ConditionVerdict:
    """Finite-ladder proxy for liminf mu > 0 (``star``) or mu -> inf (``double_star``)."""
    radii = tuple(float(r) for r in radii)
    if len(radii) < 3:
        raise ConfigurationError("need at least 3 radii")
    if not all(b > a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ConfigurationError("radii must be positive and strictly increasing")
    if which not in (STAR, DOUBLE_STAR):
        raise ConfigurationError(f"unknown condition {which!r}")
    infs, axis = [], []
    for r in radii:
        pts, is_axis = sphere_samples(spec.n, r, samples_per_sphere, seed)
        mu = lowest_levi_eigenvalue(spec, pts)
        infs.append(float(mu.min()))
        axis.append(float(mu[is_axis].min()))
    v = np.asarray(infs)
    last3 = v[-3:]
    if which == STAR:
        margin = float(last3.min() - floor)
        if margin >= 0:
            verdict = "holds"
        elif v[-1] < floor:
            verdict = "fails"
        else:
            verdict = "inconclusive"
    else:
        margin = float(v[-1] - growth_floor)
        if _increasing(last3):
            verdict = "holds" if margin > 0 else "inconclusive"
        else:
            verdict = "fails"
    return ConditionVerdict(which, radii, tuple(infs), tuple(axis), verdict, margin, floor, growth_floor)
