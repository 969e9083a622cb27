"""Radon measure models (density plus atoms) and certification of their growth conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import CannotCertify, PreconditionError, SingularityUnresolved
from .grid import GridDomain, GridFunction, ball_index, unit_ball_volume

DELTA_LATTICE = np.round(np.arange(0.05, 4.0 + 1e-9, 0.05), 2)


@dataclass(frozen=True)
class MeasureModel:
    """``mu = density dx + sum of atoms``.

    ``density`` is ``None``, ``"lebesgue"`` (constant ``scale``), ``"x2"``
    (``scale |x|^2``) or a nonnegative :class:`GridFunction`. Atoms are
    ``(point, mass)`` pairs. Certified constants are attached by
    :func:`certify_growth`.
    """

    d: int
    density: object = None
    scale: float = 1.0
    atoms: tuple = ()
    domain: GridDomain | None = None
    delta: float | None = None
    C: float | None = None
    D: float | None = None
    name: str = "measure"

    def __post_init__(self):
        if isinstance(self.density, GridFunction):
            if np.any(self.density.values < 0):
                raise ValueError("density must be nonnegative")
            object.__setattr__(self, "domain", self.domain or self.density.domain)
        elif self.density not in (None, "lebesgue", "x2"):
            raise ValueError(f"unknown density {self.density!r}")
        if self.scale < 0:
            raise ValueError("density scale must be nonnegative")
        atoms = tuple((tuple(float(v) for v in np.atleast_1d(p)), float(m)) for p, m in self.atoms)
        if any(m <= 0 for _, m in atoms):
            raise ValueError("atom masses must be positive")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def lebesgue(cls, d: int = 3, scale: float = 1.0, **kw) -> "MeasureModel":
        return cls(d, "lebesgue", scale, name=kw.pop("name", f"lebesgue(scale={scale})"), **kw)

    @classmethod
    def quadratic(cls, d: int = 3, scale: float = 1.0, **kw) -> "MeasureModel":
        return cls(d, "x2", scale, name=kw.pop("name", f"|x|^2(scale={scale})"), **kw)

    @classmethod
    def atom(cls, point, mass: float = 1.0, d: int | None = None, **kw) -> "MeasureModel":
        p = np.atleast_1d(np.asarray(point, float))
        return cls(d or len(p), None, 0.0, ((p, mass),), name=kw.pop("name", "atom"), **kw)

    @property
    def certified(self) -> bool:
        return None not in (self.delta, self.C, self.D)

    def scaled(self, alpha: float) -> "MeasureModel":
        dens = self.density * alpha if isinstance(self.density, GridFunction) else self.density
        atoms = tuple((p, alpha * m) for p, m in self.atoms)
        return replace(self, density=dens, scale=self.scale * alpha, atoms=atoms,
                       delta=None, C=None, D=None, name=f"{alpha}*{self.name}")

    def density_at(self, pts) -> np.ndarray:
        """Pointwise density (nearest node for grid densities, 0 outside the box)."""
        pts = np.atleast_2d(np.asarray(pts, float))
        if self.density is None:
            return np.zeros(len(pts))
        if self.density == "lebesgue":
            return np.full(len(pts), self.scale)
        if isinstance(self.density, str):
            return self.scale * np.sum(pts**2, axis=1)
        dom = self.density.domain
        idx = np.rint((pts + dom.L) / dom.h).astype(int)
        inside = np.all((idx >= 0) & (idx < dom.n), axis=1)
        out = np.zeros(len(pts))
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, dom.n - 1).T), dom.shape)
        out[inside] = self.density.flat[flat[inside]]
        return out

    def ball_measure(self, x, r: float) -> float:
        """``mu(B(x, r))``; exact for the analytic densities, midpoint sum for grid ones."""
        x = np.atleast_1d(np.asarray(x, float))
        total = 0.0
        if self.density == "lebesgue":
            total = self.scale * unit_ball_volume(self.d) * r**self.d
        elif self.density == "x2":
            # integral of |y|^2 over B(x, r) = omega r^d (|x|^2 + d r^2 / (d + 2))
            total = self.scale * unit_ball_volume(self.d) * r**self.d * (x @ x + self.d * r**2 / (self.d + 2))
        elif isinstance(self.density, GridFunction):
            dom = self.density.domain
            total = float(np.sum(self.density.flat[ball_index(dom, x, r)]) * dom.cell_volume)
        for p, m in self.atoms:
            if math.dist(p, x) <= r:
                total += m
        return float(total)

    def describe(self) -> dict:
        dens = self.density if isinstance(self.density, (str, type(None))) else "grid"
        return {"name": self.name, "d": self.d, "density": dens, "scale": self.scale,
                "atoms": [[list(p), m] for p, m in self.atoms],
                "delta": self.delta, "C": self.C, "D": self.D}


def ball_measure(mu: MeasureModel, x, r: float) -> float:
    return mu.ball_measure(x, r)


# ---------------------------------------------------------- certification


def growth_sample(d: int, size: int, seed: int = 0, center_box: float = 1.0,
                  r_range=(1e-3, 10.0), ratio_range=(1e-3, 1.0)):
    """Seeded triples ``(x, r, R)``: ``R`` log-uniform, ``r/R`` log-uniform below 1."""
    u = np.random.default_rng(seed).random((size, d + 2))
    x = center_box * (2 * u[:, :d] - 1)
    lr = np.log(r_range)
    R = np.exp(lr[0] + (lr[1] - lr[0]) * u[:, d])
    ls = np.log(ratio_range)
    s = np.exp(ls[0] + (ls[1] - ls[0]) * u[:, d + 1])
    return x, np.minimum(s, 1 - 1e-9) * R, R


@dataclass
class GrowthCertificate:
    delta: float
    C: float
    D: float
    D_raw: float
    witness: dict = field(default_factory=dict)

    def as_dict(self):
        return {"delta": self.delta, "C": self.C, "D": self.D, "D_raw": self.D_raw, "witness": self.witness}


def certify_growth(mu: MeasureModel, x, r, R, lattice=DELTA_LATTICE, stability: float = 1.05):
    """Fit ``(delta_mu, C_mu, D_mu)`` of the two growth conditions on triples.

    ``delta_mu`` is the largest lattice value whose constant
    ``max mu(B(x,r)) / ((r/R)^(d-2+delta) mu(B(x,R)))`` is scale-stable: the
    maximum over the small-ratio half of the sample exceeds the maximum over
    the large-ratio half by at most ``stability``. ``D_mu`` is the doubling
    ratio ``mu(B(x,2r)) / (mu(B(x,r)) + r^(d-2))`` rounded up to the lattice
    ``2^(j/4)``. Triples centered at each atom are added to the sample.
    Returns ``(certified_model, certificate)``.
    """
    x = np.atleast_2d(np.asarray(x, float))
    r, R = np.asarray(r, float).ravel(), np.asarray(R, float).ravel()
    if len(r) == 0:
        raise PreconditionError("empty certification sample")
    if np.any(r >= R):
        raise PreconditionError("need r < R on every triple")
    d = mu.d
    if mu.atoms:
        # the conditions hold for every center; atoms are the worst ones
        pts = np.array([p for p, _ in mu.atoms])
        x = np.concatenate([x] + [np.broadcast_to(p, (len(r), d)) for p in pts])
        r, R = np.tile(r, len(pts) + 1), np.tile(R, len(pts) + 1)
    small = np.array([mu.ball_measure(xi, ri) for xi, ri in zip(x, r)])
    big = np.array([mu.ball_measure(xi, Ri) for xi, Ri in zip(x, R)])
    ok = big > 0
    if not ok.any():
        raise CannotCertify("mu vanishes on every sampled ball")
    q, s = small[ok] / big[ok], r[ok] / R[ok]
    near = s >= np.median(s)
    chosen = None
    worst = None
    for delta in lattice:
        ratio = q / s ** (d - 2 + delta)
        c_near, c_far = ratio[near].max(), ratio[~near].max() if (~near).any() else 0.0
        if c_far <= stability * c_near:
            chosen = (float(delta), float(ratio.max()))
        elif worst is None:
            j = int(np.flatnonzero(ok)[np.argmax(ratio)])
            worst = {"x": x[j].tolist(), "r": float(r[j]), "R": float(R[j]), "delta": float(delta),
                     "ratio": float(ratio.max())}
    if chosen is None:
        raise CannotCertify(f"{mu.name}: no delta >= {lattice[0]} gives a scale-stable constant",
                            witness=worst)
    twice = np.array([mu.ball_measure(xi, 2 * ri) for xi, ri in zip(x, r)])
    dbl = twice / (small + r ** (d - 2))
    j = int(np.argmax(dbl))
    D_raw = max(1.0, float(dbl[j]))
    D = 2.0 ** (math.ceil(4 * math.log2(D_raw) - 1e-9) / 4)
    cert = GrowthCertificate(chosen[0], chosen[1], D, D_raw,
                             {"doubling": {"x": x[j].tolist(), "r": float(r[j]), "ratio": D_raw}})
    return replace(mu, delta=chosen[0], C=chosen[1], D=D), cert


# ------------------------------------------------------ integral estimates


@lru_cache(maxsize=None)
def _cube_singular_integral(a: float) -> float:
    """``int over [-1/2, 1/2]^3 of |u|^-a du`` for ``a < 3``.

    In spherical coordinates the radial part integrates to
    ``R(omega)^(3-a)/(3-a)`` with ``R`` the distance to the cube face; one
    of the 48 symmetric wedges is integrated numerically.
    """
    def f(phi, theta):
        u = np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])
        Rm = 0.5 / np.max(np.abs(u))
        return Rm ** (3 - a) / (3 - a) * math.sin(theta)

    # wedge 0 <= phi <= pi/4 (u_x >= u_y >= 0), z-face closer or x-face closer
    val, _ = integrate.dblquad(lambda th, ph: f(ph, th), 0, math.pi / 4,
                               0, lambda ph: math.atan(1 / math.cos(ph)), epsabs=1e-12, epsrel=1e-11)
    val2, _ = integrate.dblquad(lambda th, ph: f(ph, th), 0, math.pi / 4,
                                lambda ph: math.atan(1 / math.cos(ph)), math.pi / 2, epsabs=1e-12, epsrel=1e-11)
    return 16 * (val + val2)


@dataclass
class IntegralEstimate:
    power: int
    integral: float
    bound_scale: float
    C: float
    remainder: float

    def as_dict(self):
        return {"power": self.power, "integral": self.integral, "bound_scale": self.bound_scale,
                "C": self.C, "remainder": self.remainder}


def _singular_integral(mu: MeasureModel, x, R: float, a: int, nodes: int):
    d = mu.d
    h = R / nodes
    ax = np.arange(-nodes, nodes + 1) * h
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    off = np.stack([m.ravel() for m in mesh], axis=-1)
    dist = np.linalg.norm(off, axis=1)
    keep = (dist <= R) & (dist > 0)
    off, dist = off[keep], dist[keep]
    dens = mu.density_at(x + off)
    total = float(np.sum(dens / dist**a) * h**d)
    c0 = float(mu.density_at(x[None, :])[0])
    remainder = 0.0
    if c0 > 0:
        if d == 3:
            total += c0 * h ** (3 - a) * _cube_singular_integral(float(a))
        # the center cell sits inside the ball of radius h sqrt(d)/2
        rc = h * math.sqrt(d) / 2
        remainder = c0 * d * unit_ball_volume(d) * rc ** (d - a) / (d - a)
    for p, m in mu.atoms:
        dist_a = math.dist(p, x)
        if dist_a <= R:
            if dist_a == 0:
                raise SingularityUnresolved("an atom sits at the singular point")
            total += m / dist_a**a
    return total, remainder


def check_integral_estimates(mu: MeasureModel, x, R: float, nodes: int = 48) -> dict:
    """Empirical constants of ``int_B dmu/|y-x|^(d-2) <= C mu(B)/R^(d-2)`` and,
    when ``delta_mu > 1``, of the ``|y-x|^(d-1)`` version.

    The center node is excluded and the center cell added from a precomputed
    cube integral; the cell's enclosing-ball bound is kept as the remainder.
    """
    if not mu.certified:
        raise PreconditionError("measure must be certified first")
    x = np.atleast_1d(np.asarray(x, float))
    d = mu.d
    mass = mu.ball_measure(x, R)
    out = {}
    powers = [d - 2] + ([d - 1] if mu.delta > 1 else [])
    for a in powers:
        val, rem = _singular_integral(mu, x, R, a, nodes)
        if val > 0 and rem > 0.1 * val:
            raise SingularityUnresolved(f"center-cell bound {rem:.3g} exceeds 10% of {val:.3g}")
        scale = mass / R**a
        C = val / scale if scale > 0 else (0.0 if val == 0 else math.inf)
        out[a] = IntegralEstimate(a, val, scale, C, rem)
    return out


def check_extra_decay(mu: MeasureModel, rho, x0, R, N: float) -> dict:
    """Constant of ``mu(B(x0,R)) <= C R^(d-2) (1 + R/rho(x0))^N`` on a sample."""
    if not mu.certified:
        raise PreconditionError("measure must be certified first")
    if N < math.log2(mu.D) - 1e-12:
        raise PreconditionError(f"N={N} is below log2 D_mu = {math.log2(mu.D):.4g}")
    x0 = np.atleast_2d(np.asarray(x0, float))
    R = np.asarray(R, float).ravel()
    rv = np.asarray(rho(x0), float).ravel()
    mass = np.array([mu.ball_measure(p, r) for p, r in zip(x0, R)])
    ratio = mass / (R ** (mu.d - 2) * (1 + R / rv) ** N)
    j = int(np.argmax(ratio))
    return {"C": float(ratio[j]), "N": N, "witness": {"x0": x0[j].tolist(), "R": float(R[j])},
            "subcritical_C": float(ratio[R <= rv].max()) if np.any(R <= rv) else None}
