"""Critical radius functions: models, validation, coverings and ``rho_mu``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import NoBracket, NoFit, NonPositiveRho, PreconditionError
from .grid import GridDomain, GridFunction, ball_index

K0_LATTICE = np.round(np.arange(0.0, 8.0 + 1e-9, 0.25), 2)

# certified constant of the compatibility inequality for rho = min(1, 1/|x|)
# with k0 = 1: the worst case is |x| = 2, |y| = 1, giving C0 = 2/sqrt(3)
HARMONIC_C0 = 2.0 / math.sqrt(3.0)


@dataclass(frozen=True)
class CriticalRadius:
    """A positive radius function ``x -> rho(x)`` with its constants.

    ``func`` maps an ``(N, d)`` array of points to ``N`` radii. ``C0`` and
    ``k0`` are ``None`` until certified or fitted.
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str
    C0: float | None = None
    k0: float | None = None
    provenance: str = "builtin"
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        vals = np.asarray(self.func(pts), dtype=float).reshape(len(pts))
        return float(vals[0]) if single else vals

    def on_grid(self, domain: GridDomain) -> GridFunction:
        vals = self(domain.points())
        if np.any(~(vals > 0)):
            raise NonPositiveRho(f"{self.name}: non-positive radius on the grid")
        return GridFunction(domain, vals)

    def with_constants(self, C0: float, k0: float) -> "CriticalRadius":
        return replace(self, C0=float(C0), k0=float(k0))

    @property
    def certified(self) -> bool:
        return self.C0 is not None and self.k0 is not None

    def describe(self) -> dict:
        return {"name": self.name, "C0": self.C0, "k0": self.k0,
                "provenance": self.provenance, **self.params}


def _constant(rho0):
    return lambda pts: np.full(len(pts), rho0)


def _harmonic(pts):
    r = np.linalg.norm(pts, axis=1)
    return 1.0 / np.maximum(1.0, r)


def builtin_rho(kind: str, **params) -> CriticalRadius:
    """Named radius models.

    ``constant`` (param ``rho0``), ``harmonic_oscillator`` (``min(1, 1/|x|)``)
    or ``user`` (param ``func``, with optional ``check_points`` on which
    positivity is enforced).
    """
    if kind == "constant":
        rho0 = float(params.get("rho0", 1.0))
        if not rho0 > 0:
            raise NonPositiveRho(f"constant radius must be positive, got {rho0}")
        return CriticalRadius(_constant(rho0), "constant", 1.0, 0.0, "builtin", {"rho0": rho0})
    if kind == "harmonic_oscillator":
        return CriticalRadius(_harmonic, "harmonic_oscillator", HARMONIC_C0, 1.0, "builtin", {})
    if kind in ("user", "from_user"):
        func = params["func"]
        rho = CriticalRadius(func, params.get("name", "user"), params.get("C0"), params.get("k0"), "user", {})
        pts = params.get("check_points")
        if pts is not None:
            vals = rho(np.atleast_2d(pts))
            if np.any(~(vals > 0)):
                bad = np.atleast_2d(pts)[np.argmin(np.where(np.isnan(vals), -np.inf, vals))]
                raise NonPositiveRho(f"user radius is not positive at {bad.tolist()}")
        return rho
    raise ValueError(f"unknown critical radius kind {kind!r}")


# ------------------------------------------------------------ validation


@dataclass
class CriticalRadiusFit:
    C0: float
    k0: float
    binding_pair: tuple
    lattice: list
    C0_by_k0: dict

    def as_dict(self):
        return {"C0": self.C0, "k0": self.k0, "binding_pair": [list(map(float, p)) for p in self.binding_pair]}


def compatibility_constants(rho: CriticalRadius, x, y, k0: float):
    """Smallest ``C0`` making both sides of the compatibility inequality hold.

    Returns ``(C0_needed, lower_part, upper_part)`` per pair.
    """
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    rx, ry = rho(x), rho(y)
    t = np.linalg.norm(x - y, axis=1) / rx
    lower = rx * (1 + t) ** (-k0) / ry
    upper = ry / (rx * (1 + t) ** (k0 / (k0 + 1)))
    return np.maximum(np.maximum(lower, upper), 1.0), lower, upper


def validate_critical_radius(rho: CriticalRadius, x, y, k0_lattice=K0_LATTICE,
                             C0_cap: float = 2.0) -> CriticalRadiusFit:
    """Fit ``(C0, k0)`` of the two-sided compatibility inequality on pairs.

    ``k0`` is the smallest lattice value whose required ``C0`` stays within
    ``C0_cap``; ``C0`` is then the exact sample requirement (at least 1).
    Raises :class:`NoFit` with the worst pair if no lattice ``k0`` qualifies.
    """
    x, y = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(y, float))
    if len(x) == 0 or len(x) != len(y):
        raise PreconditionError("need a nonempty sample of pairs")
    for pts in (x, y):
        if np.any(~(rho(pts) > 0)):
            raise NonPositiveRho(f"{rho.name}: non-positive radius on the sample")
    table = {}
    best = None
    for k in k0_lattice:
        need, _, _ = compatibility_constants(rho, x, y, float(k))
        j = int(np.argmax(need))
        table[float(k)] = float(need[j])
        if best is None or need[j] < best[1]:
            best = (float(k), float(need[j]), j)
        if need[j] <= C0_cap:
            return CriticalRadiusFit(float(need[j]), float(k), (x[j], y[j]), list(map(float, k0_lattice)), table)
    k, c, j = best
    raise NoFit(f"{rho.name}: no k0 <= {max(k0_lattice)} keeps C0 <= {C0_cap} (best C0={c:.4g} at k0={k})",
                witness=(x[j].tolist(), y[j].tolist()), best={"k0": k, "C0": c})


def sample_pairs(d: int, size: int, radius: float, seed: int = 0):
    """Seeded pairs uniform in the cube ``[-radius, radius]^d``."""
    u = np.random.default_rng(seed).uniform(-radius, radius, size=(size, 2 * d))
    return u[:, :d], u[:, d:]


@dataclass
class NeighborRatio:
    ratio: float
    bounds: tuple
    holds: bool


def rho_sim_on_neighbors(rho: CriticalRadius, x, y) -> NeighborRatio:
    """``rho(x)/rho(y)`` for ``|x - y| <= rho(x)`` with the interval implied by the constants.

    With ``t = |x-y|/rho(x) <= 1`` the compatibility inequality gives
    ``(C0 2^(k0/(k0+1)))^-1 <= rho(x)/rho(y) <= C0 2^k0``.
    """
    if not rho.certified:
        raise PreconditionError("radius constants must be certified or fitted first")
    x, y = np.asarray(x, float), np.asarray(y, float)
    rx, ry = rho(x), rho(y)
    if np.linalg.norm(x - y) > rx * (1 + 1e-12):
        raise PreconditionError("points are farther apart than rho(x)")
    C0, k0 = rho.C0, rho.k0
    lo = 1.0 / (C0 * 2 ** (k0 / (k0 + 1)))
    hi = C0 * 2**k0
    ratio = rx / ry
    return NeighborRatio(ratio, (lo, hi), bool(lo * (1 - 1e-12) <= ratio <= hi * (1 + 1e-12)))


# -------------------------------------------------------------- covering


@dataclass
class CriticalCovering:
    centers: np.ndarray
    radii: np.ndarray
    sigmas: list
    overlaps: list
    C: float
    N1: float
    covered_fraction: float

    def as_dict(self):
        return {"n_centers": int(len(self.centers)), "sigmas": self.sigmas, "overlaps": self.overlaps,
                "C": self.C, "N1": self.N1, "covered_fraction": self.covered_fraction}


def build_covering(rho: CriticalRadius, domain: GridDomain, sigmas=(1, 2, 4, 8)) -> CriticalCovering:
    """Greedy first-fit covering of the grid by critical balls.

    Nodes are scanned in row-major order; an uncovered node becomes a center.
    The overlap of the dilated balls ``B(x_k, sigma rho(x_k))`` is then
    counted and fitted as ``C sigma^N1``.
    """
    pts = domain.points()
    rvals = rho(pts)
    if np.any(~(rvals > 0)):
        raise NonPositiveRho(f"{rho.name}: non-positive radius on the grid")
    covered = np.zeros(domain.size, dtype=bool)
    centers = []
    i = 0
    while True:
        free = np.flatnonzero(~covered[i:])
        if free.size == 0:
            break
        i += int(free[0])
        centers.append(i)
        covered[ball_index(domain, pts[i], rvals[i])] = True
    centers = np.asarray(centers)
    overlaps = []
    for s in sigmas:
        count = np.zeros(domain.size, dtype=np.int64)
        for k in centers:
            count[ball_index(domain, pts[k], s * rvals[k])] += 1
        overlaps.append(int(count.max()))
    ls, lo = np.log(np.asarray(sigmas, float)), np.log(np.asarray(overlaps, float))
    if len(sigmas) > 1 and np.ptp(ls) > 0:
        N1 = max(0.0, float(np.polyfit(ls, lo, 1)[0]))
    else:
        N1 = 0.0
    C = float(np.max(np.asarray(overlaps) / np.asarray(sigmas, float) ** N1))
    return CriticalCovering(pts[centers], rvals[centers], list(sigmas), overlaps, C, N1,
                            float(covered.mean()))


# ------------------------------------------------------- radius from a measure


def rho_from_measure(mu, x, r_lo: float | None = None, r_hi: float | None = None,
                     rtol: float = 1e-8, scan: int = 240) -> float:
    """``sup{r > 0 : mu(B(x, r)) / r^(d-2) <= 1}`` by scanning then bisection.

    The search window defaults to ``[h, 4L]`` of the measure's domain.
    Raises :class:`NoBracket` when the ratio never crosses 1 inside it.
    """
    d = mu.d
    if d < 3:
        raise PreconditionError("the measure-based radius needs d >= 3")
    x = np.asarray(x, dtype=float)
    dom = mu.domain
    r_lo = (dom.h if dom is not None else 1e-3) if r_lo is None else r_lo
    r_hi = (4 * dom.L if dom is not None else 1e3) if r_hi is None else r_hi

    def ratio(r):
        return mu.ball_measure(x, r) / r ** (d - 2)

    rs = np.geomspace(r_lo, r_hi, scan)
    vals = np.array([ratio(r) for r in rs])
    if vals[-1] <= 1.0:
        raise NoBracket(f"mu(B(x,r))/r^(d-2) <= 1 still at r={r_hi}; radius exceeds the window")
    below = np.flatnonzero(vals <= 1.0)
    if below.size == 0:
        raise NoBracket(f"mu(B(x,r))/r^(d-2) > 1 on the whole window [{r_lo}, {r_hi}]")
    j = int(below[-1])
    lo, hi = rs[j], rs[j + 1]
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ratio(mid) <= 1.0:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    val = ratio(r)
    if not 0.5 <= val <= 2.0:
        raise NoBracket(f"ratio at the computed radius is {val:.3g}, outside [1/2, 2]")
    return float(r)


def rho_from_measure_model(mu, **kw) -> CriticalRadius:
    """Wrap :func:`rho_from_measure` as a :class:`CriticalRadius` (constants unfitted)."""
    cache = {}

    def func(pts):
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            key = tuple(np.round(p, 12))
            if key not in cache:
                cache[key] = rho_from_measure(mu, p, **kw)
            out[i] = cache[key]
        return out

    return CriticalRadius(func, "from_measure", None, None, "from-measure", {"measure": mu.name})
