"""Boundary certificates for large-Hessian plurisubharmonic families on model domains.

Only sampled boundary points (where the defining function vanishes) and a
finite list of scale parameters M are checked; certificates state this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigurationError, SamplingError
from .weights import WeightSpec, eval_gradient, eval_weight, hermitian_min_eig, levi_matrix, radial

PASS_TOL = 1e-10
BOUNDARY_TOL = 1e-10


# -- domains -------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSpec:
    """Ball(radius), Ellipsoid(semi-axes) or the p-ball ``|z1|^2 + |z2|^{2p} < 1``."""

    kind: Literal["ball", "ellipsoid", "pball"]
    n: int = 2
    radius: float = 1.0
    semi_axes: tuple[float, ...] = ()
    p: int = 1

    def __post_init__(self):
        if self.kind not in ("ball", "ellipsoid", "pball"):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.n not in (1, 2):
            raise ConfigurationError("n must be 1 or 2")
        if self.kind != "ball" and self.n != 2:
            raise ConfigurationError(f"{self.kind} domains are defined for n = 2")
        if self.kind == "ball" and not self.radius > 0:
            raise ConfigurationError("radius must be positive")
        if self.kind == "ellipsoid" and (len(self.semi_axes) != self.n or min(self.semi_axes) <= 0):
            raise ConfigurationError("ellipsoid needs n positive semi-axes")
        if self.kind == "pball" and (int(self.p) != self.p or self.p < 1):
            raise ConfigurationError("p must be an integer >= 1")

    @classmethod
    def ball(cls, radius: float = 1.0, n: int = 2) -> "DomainSpec":
        return cls("ball", n, radius=float(radius))

    @classmethod
    def ellipsoid(cls, *semi_axes: float) -> "DomainSpec":
        return cls("ellipsoid", len(semi_axes), semi_axes=tuple(float(a) for a in semi_axes))

    @classmethod
    def pball(cls, p: int) -> "DomainSpec":
        return cls("pball", 2, p=int(p))

    def rho(self, z) -> np.ndarray:
        """Defining function, negative inside."""
        z = np.atleast_2d(np.asarray(z, dtype=complex))
        a2 = np.abs(z) ** 2
        if self.kind == "ball":
            return np.sum(a2, axis=-1) / self.radius**2 - 1
        if self.kind == "ellipsoid":
            return np.sum(a2 / np.asarray(self.semi_axes) ** 2, axis=-1) - 1
        return a2[:, 0] + a2[:, 1] ** self.p - 1

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.kind == "ball":
            d["radius"] = self.radius
        elif self.kind == "ellipsoid":
            d["semi_axes"] = list(self.semi_axes)
        else:
            d["p"] = self.p
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        kind = d["kind"]
        if kind == "ball":
            return cls.ball(d.get("radius", 1.0), d.get("n", 2))
        if kind == "ellipsoid":
            return cls.ellipsoid(*d["semi_axes"])
        if kind == "pball":
            return cls.pball(d["p"])
        raise ConfigurationError(f"unknown domain kind {kind!r}")


def _unit_directions(n: int, count: int) -> np.ndarray:
    """Deterministic quasi-uniform unit vectors in C^n."""
    if n == 1:
        t = 2 * np.pi * np.arange(count) / count
        return np.exp(1j * t)[:, None]
    # Hopf-type coordinates: |z1| = cos(eta), |z2| = sin(eta) with two phases
    k = np.arange(count) + 0.5
    golden = (np.sqrt(5) - 1) / 2
    s = k / count  # sin^2(eta) equidistributed gives uniform measure
    eta = np.arcsin(np.sqrt(s))
    a = 2 * np.pi * ((k * golden) % 1.0)
    b = 2 * np.pi * ((k * golden**2) % 1.0)
    return np.stack([np.cos(eta) * np.exp(1j * a), np.sin(eta) * np.exp(1j * b)], axis=-1)


def sample_boundary(domain: DomainSpec, count: int) -> np.ndarray:
    """``count`` boundary points, shape ``(count, n)``, with ``|rho| <= 1e-10``."""
    min_count = 4 if domain.n == 1 else 16
    if count < min_count:
        raise ConfigurationError(f"need at least {min_count} samples for n = {domain.n}")
    d = _unit_directions(domain.n, count)
    if domain.kind == "ball":
        pts = domain.radius * d
    elif domain.kind == "ellipsoid":
        pts = d * np.asarray(domain.semi_axes)
    else:
        pts = np.empty_like(d)
        for i, v in enumerate(d):
            f = lambda t, v=v: domain.rho(t * v)[0]  # noqa: E731
            try:
                # rho(0) = -1 and rho(2 * unit vector) > 0, so [0, 2] brackets the root
                t = brentq(f, 0.0, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            except (ValueError, RuntimeError) as exc:
                raise SamplingError(f"boundary root solve failed along ray {i}: {exc}") from exc
            pts[i] = t * v
    res = np.abs(domain.rho(pts))
    if res.max() > BOUNDARY_TOL:
        raise SamplingError(f"boundary residual {res.max():.2e} exceeds {BOUNDARY_TOL}", best_residual=float(res.max()))
    return pts


# -- weight families -------------------------------------------------------------

@dataclass(frozen=True)
class WeightFamily:
    """A map ``M -> phi_M`` built from a base weight.

    ``linear``: ``phi_M = M * base``; ``fixed``: ``phi_M = base`` for every M;
    ``log``: ``phi_M = log(1 + M * base)``.
    """

    base: WeightSpec
    mode: Literal["linear", "fixed", "log"] = "linear"
    name: str = ""

    def __post_init__(self):
        if self.mode not in ("linear", "fixed", "log"):
            raise ConfigurationError(f"unknown family mode {self.mode!r}")

    @property
    def label(self) -> str:
        return self.name or f"{self.mode}[{self.base.label()}]"

    def value(self, M: float, z) -> np.ndarray:
        psi = eval_weight(self.base, z)
        if self.mode == "linear":
            return M * psi
        if self.mode == "fixed":
            return psi
        return np.log1p(M * psi)

    def gradient(self, M: float, z) -> np.ndarray:
        """``d phi_M / d z_j``, shape ``(..., n)``."""
        g = eval_gradient(self.base, z)
        if self.mode == "linear":
            return M * g
        if self.mode == "fixed":
            return g
        psi = eval_weight(self.base, z)
        return (M / (1 + M * psi))[..., None] * g

    def hessian(self, M: float, z) -> np.ndarray:
        """Complex Hessian ``d^2 phi_M / dz_j dzbar_k``, shape ``(..., n, n)``."""
        H = levi_matrix(self.base, z)
        if self.mode == "linear":
            return M * H
        if self.mode == "fixed":
            return H
        psi = eval_weight(self.base, z)
        g = eval_gradient(self.base, z)
        d1 = M / (1 + M * psi)
        d2 = -(d1**2)
        # entry (j, k): g1 * H_jk + g2 * dpsi/dz_j * dpsi/dzbar_k
        outer = g[..., :, None] * np.conj(g)[..., None, :]
        return d1[..., None, None] * H + d2[..., None, None] * outer

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "mode": self.mode, "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightFamily":
        return cls(WeightSpec.from_dict(d["base"]), d.get("mode", "linear"), d.get("name", ""))


def scaled_modulus(n: int = 2) -> WeightFamily:
    """``phi_M = M |z|^2``."""
    return WeightFamily(radial(n, 1), "linear", "M|z|^2")


# -- checks ----------------------------------------------------------------------

def hessian_min_eigenvalues(family: WeightFamily, M: float, samples) -> np.ndarray:
    return hermitian_min_eig(family.hessian(M, samples))


def check_property_P(family: WeightFamily, M: float, samples) -> np.ndarray:
    """Per-sample margins ``lambda_min(Hessian phi_M) - M``; pass when all >= -1e-10."""
    return hessian_min_eigenvalues(family, M, samples) - M


def gradient_hessian_ratio(family: WeightFamily, M: float, samples) -> np.ndarray:
    """Per-sample ``g^H H^{-1} g``: the supremum over t of ``|sum g_j t_j|^2 / <H t, t>``.

    Samples where H is singular (relative to its size) give ``inf``.
    """
    H = family.hessian(M, samples)
    g = family.gradient(M, samples)
    out = np.empty(len(H))
    for i, (Hi, gi) in enumerate(zip(H, g)):
        w = np.linalg.eigvalsh(Hi)
        if w[0] <= 1e-12 * max(1.0, abs(w[-1])):
            # the ratio is unbounded unless g is orthogonal to the kernel; treat as unbounded
            out[i] = np.inf
            continue
        # Cauchy-Schwarz in the H inner product: sup = g^T H^{-1} conj(g)
        out[i] = float(np.real(gi @ np.linalg.solve(Hi, np.conj(gi))))
    return out


def minimal_C_tilde(family: WeightFamily, M: float, samples) -> float:
    """Smallest C with ``|sum g_j t_j|^2 <= C <H t, t>`` at every sample; ``inf`` if H is singular."""
    return float(np.max(gradient_hessian_ratio(family, M, samples)))


def brute_force_ratio(family: WeightFamily, M: float, z, directions: int = 10_000, seed: int = 0) -> float:
    """Maximum of ``|sum g_j t_j|^2 / <H t, t>`` over random directions t at a single point.

    When H is positive definite the directions are drawn uniformly on the
    H-unit sphere (``t = H^{-1/2} s``), which keeps the sampling efficient for
    anisotropic Hessians; only the raw ratio is evaluated.
    """
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    H = family.hessian(M, z)[0]
    g = family.gradient(M, z)[0]
    rng = np.random.default_rng(seed)
    n = len(g)
    t = rng.normal(size=(directions, n)) + 1j * rng.normal(size=(directions, n))
    w, V = np.linalg.eigh(H)
    if w[0] > 1e-12 * max(1.0, abs(w[-1])):
        t = t @ (V / np.sqrt(w)).T
    num = np.abs(t @ g) ** 2
    den = np.real(np.einsum("dj,jk,dk->d", np.conj(t), H, t))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 0, num / den, np.inf)
    return float(np.max(r))


@dataclass
class PropertyPCertificate:
    domain: dict
    family: str
    M_values: list[float]
    sample_count: int
    min_hessian_eig: list[float]
    margins: list[float]  # per M, min over samples of lambda_min - M
    C_tilde: list[float]  # per M, minimal constant
    P_holds: bool
    P_tilde_holds: bool
    P_margin: float
    C_max: float
    notes: list[str] = field(default_factory=list)
    per_sample: list[list[float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        def num(x):
            return x if np.isfinite(x) else repr(float(x))
        return {
            "domain": self.domain,
            "family": self.family,
            "M_values": list(self.M_values),
            "sample_count": self.sample_count,
            "min_hessian_eig": [num(v) for v in self.min_hessian_eig],
            "margins": [num(v) for v in self.margins],
            "C_tilde": [num(v) for v in self.C_tilde],
            "P_holds": self.P_holds,
            "P_tilde_holds": self.P_tilde_holds,
            "P_margin": num(self.P_margin),
            "C_max": self.C_max,
            "notes": list(self.notes),
        }


def certify(domain: DomainSpec, family: WeightFamily, M_list, count: int = 64,
            C_max: float = 10.0) -> PropertyPCertificate:
    """Aggregate the Hessian and gradient checks over ``M_list`` on ``count`` boundary samples."""
    if family.base.n != domain.n:
        raise ConfigurationError("family and domain dimensions differ")
    M_list = [float(M) for M in M_list]
    if not M_list or min(M_list) <= 0:
        raise ConfigurationError("M values must be positive")
    pts = sample_boundary(domain, count)
    mins, margins, Cs, per_sample = [], [], [], []
    for M in M_list:
        lam = hessian_min_eigenvalues(family, M, pts)
        per_sample.append(list(lam - M))
        mins.append(float(lam.min()))
        margins.append(float((lam - M).min()))
        Cs.append(minimal_C_tilde(family, M, pts))
    P_margin = min(margins)
    P_holds = P_margin >= -PASS_TOL
    C_worst = max(Cs)
    notes = [
        "checked only at sampled boundary points and the listed M values",
        "a neighbourhood of the boundary is not sampled",
    ]
    if np.isfinite(C_worst) and C_worst > C_max:
        notes.append(f"minimal constant {C_worst:.4g} exceeds C_max = {C_max}")
    return PropertyPCertificate(
        domain=domain.to_dict(), family=family.label, M_values=M_list, sample_count=len(pts),
        min_hessian_eig=mins, margins=margins, C_tilde=Cs, P_holds=bool(P_holds),
        P_tilde_holds=bool(P_holds and np.isfinite(C_worst) and C_worst <= C_max),
        P_margin=P_margin, C_max=C_max, notes=notes, per_sample=per_sample,
    )
