"""Weight-class constants over finite ball families and the structural checks on them.

Every class expression is written with ball averages, so the clipped volume
``|B|`` (node count times cell volume) cancels. A class constant is the
maximum of the expression over a recorded :class:`BallFamily`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .critical_radius import CriticalRadius
from .errors import DomainTooSmall, EmptyFamily, NegativeWeight, NoEta, ZeroWeightNode
from .grid import Ball, BallFamily, GridFunction, ball_index, unit_ball_volume

KINDS = ("Ap", "Ap_rho_theta", "Ap_loc", "H", "RH", "Doubling")
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class WeightClassSpec:
    kind: str
    p: float = 2.0
    theta: float = 0.0
    c: float = 0.0
    m: float = 0.0
    eta: float = 2.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown class kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if min(self.theta, self.c, self.m) < 0:
            raise ValueError("theta, c and m must be nonnegative")
        if self.kind == "RH" and not self.eta > 1:
            raise ValueError("reverse Holder exponent must exceed 1")
        if self.kind == "Doubling" and self.kappa < 1:
            raise ValueError("doubling exponent kappa must be >= 1")

    def params(self) -> dict:
        keys = {"Ap": ("p",), "Ap_rho_theta": ("p", "theta"), "Ap_loc": ("p",), "H": ("p", "c", "m"),
                "RH": ("eta", "c", "m"), "Doubling": ("kappa", "c", "m")}[self.kind]
        return {k: getattr(self, k) for k in keys}


@dataclass
class ClassReport:
    kind: str
    params: dict
    constant: float
    witness_ball: Ball
    family: dict
    divergence: bool
    per_ball: np.ndarray = field(default=None, repr=False)
    radii: np.ndarray = field(default=None, repr=False)
    witness_clip: float = 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params, "constant": self.constant,
                "witness_ball": self.witness_ball.as_dict(), "family": self.family,
                "divergence": self.divergence}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ClassReport":
        d = json.loads(text)
        wb = d["witness_ball"]
        return cls(d["kind"], d["params"], d["constant"], Ball(wb["center"], wb["radius"]),
                   d["family"], d["divergence"])


# ------------------------------------------------------------ ball stats


def positive_weight(w: GridFunction, strict: bool = False) -> np.ndarray:
    """Flat weight values, with zeros floored at ``1e-300`` (warned) unless ``strict``."""
    v = w.flat
    if np.any(v < 0):
        raise NegativeWeight("weight has negative nodes")
    if np.any(v == 0):
        if strict:
            raise ZeroWeightNode(f"{int(np.sum(v == 0))} nodes with zero weight")
        warnings.warn("zero weight nodes floored at 1e-300", RuntimeWarning, stacklevel=3)
        v = np.maximum(v, WEIGHT_FLOOR)
    return v


class BallStats:
    """Per-ball averages of powers of ``w`` and its minimum, computed once per family."""

    def __init__(self, w: GridFunction, family: BallFamily, strict: bool = False):
        if len(family) == 0:
            raise EmptyFamily("empty ball family")
        self.domain = w.domain
        self.values = positive_weight(w, strict)
        self.family = family
        self.index = [ball_index(self.domain, c, r) for c, r in zip(family.centers, family.radii)]
        self.count = np.array([len(i) for i in self.index])
        if np.any(self.count == 0):
            raise EmptyFamily("family contains balls without grid nodes")
        self._cache = {}

    def avg_pow(self, q: float) -> np.ndarray:
        """``avg_B w^q`` for every ball."""
        key = ("pow", float(q))
        if key not in self._cache:
            v = self.values if q == 1 else self.values**q
            self._cache[key] = np.array([v[i].sum() for i in self.index]) / self.count
        return self._cache[key]

    def minimum(self) -> np.ndarray:
        if "min" not in self._cache:
            self._cache["min"] = np.array([self.values[i].min() for i in self.index])
        return self._cache["min"]

    def t(self, rho: CriticalRadius) -> np.ndarray:
        """``r / rho(x)`` per ball."""
        key = ("t", id(rho))
        if key not in self._cache:
            self._cache[key] = self.family.radii / rho(self.family.centers)
        return self._cache[key]

    def mass(self, radii_scale: float = 1.0) -> np.ndarray:
        """``w(B)`` by midpoint sum, optionally for the balls scaled by ``radii_scale``."""
        if radii_scale == 1.0:
            return self.avg_pow(1) * self.count * self.domain.cell_volume
        return np.array([self.values[ball_index(self.domain, c, r * radii_scale)].sum()
                         for c, r in zip(self.family.centers, self.family.radii)]) * self.domain.cell_volume


def ap_product(stats: BallStats, p: float) -> np.ndarray:
    """``(avg w)^(1/p) (avg w^(-1/(p-1)))^((p-1)/p)``; for ``p = 1`` ``avg w / inf w``."""
    if p == 1:
        return stats.avg_pow(1) / stats.minimum()
    return stats.avg_pow(1) ** (1 / p) * stats.avg_pow(-1 / (p - 1)) ** ((p - 1) / p)


def exp_factor(t: np.ndarray, c: float, m: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(c * (1 + t) ** m)


def class_expression(stats: BallStats, rho: CriticalRadius, spec: WeightClassSpec) -> np.ndarray:
    """Normalized class expression per ball (``nan`` where the ball is not admissible)."""
    t = stats.t(rho)
    k = spec.kind
    if k in ("Ap", "Ap_loc"):
        val = ap_product(stats, spec.p)
        return np.where(t <= 1 + 1e-12, val, np.nan) if k == "Ap_loc" else val
    if k == "Ap_rho_theta":
        return ap_product(stats, spec.p) / (1 + t) ** spec.theta
    if k == "H":
        return ap_product(stats, spec.p) / exp_factor(t, spec.c, spec.m)
    if k == "RH":
        return stats.avg_pow(spec.eta) ** (1 / spec.eta) / stats.avg_pow(1) / exp_factor(t, spec.c, spec.m)
    # doubling: each ball B(x, R) against B(x, R 2^-j), j = 1..4
    d = stats.domain.d
    big = stats.mass()
    out = np.zeros(len(t))
    rho_x = stats.family.radii / t
    for j in range(1, 5):
        small = stats.mass(2.0**-j)
        ok = small > 0
        ratio = np.where(ok, big / np.where(ok, small, 1.0), np.nan)
        out = np.fmax(out, ratio / (2.0 ** (j * d * spec.kappa)) / exp_factor(stats.family.radii / rho_x, spec.c, spec.m))
    return out


def divergence_test(radii, values, bins: int | None = None) -> bool:
    """Super-polynomial growth of the per-ball expression along a dyadic radius ladder.

    Values are reduced to their maximum per dyadic radius bin. Growth is
    flagged when the log-log slopes over the last three rungs increase, the
    last slope is at least 1 and it is at least 1.5 times the slope two rungs
    earlier (a power law keeps its slope fixed, an exponential doubles it per
    rung).
    """
    radii, values = np.asarray(radii, float), np.asarray(values, float)
    ok = np.isfinite(values) & (values > 0)
    radii, values = radii[ok], values[ok]
    if len(radii) < 3:
        return False
    k = np.floor(np.log2(radii / radii.min()) + 1e-12).astype(int)
    levels = np.unique(k)
    if len(levels) < 4:
        return False
    peak = np.array([values[k == j].max() for j in levels])
    rad = np.array([radii[k == j].max() for j in levels])
    slopes = np.diff(np.log(peak)) / np.diff(np.log(rad))
    tail = slopes[-3:]
    return bool(np.all(np.diff(tail) > 0) and tail[-1] >= 1.0 and tail[-1] >= 1.5 * tail[0])


def class_constant(w: GridFunction, rho: CriticalRadius, spec: WeightClassSpec, family: BallFamily,
                   stats: BallStats | None = None, strict: bool = False) -> ClassReport:
    """Maximum of the class expression over ``family`` with its witness ball."""
    stats = stats or BallStats(w, family, strict)
    vals = class_expression(stats, rho, spec)
    if not np.any(np.isfinite(vals)):
        raise EmptyFamily(f"no admissible ball for class {spec.kind}")
    j = int(np.nanargmax(vals))
    ball = Ball(family.centers[j], family.radii[j])
    full = unit_ball_volume(w.domain.d) * family.radii[j] ** w.domain.d
    clip = max(0.0, 1 - stats.count[j] * w.domain.cell_volume / full)
    if spec.kind == "Ap_loc":
        div = False
    elif spec.kind == "Ap_rho_theta":
        # a fixed polynomial factor cannot change super-polynomial growth but
        # masks it on a bounded box, so the test runs on the undivided product
        div = divergence_test(family.radii, ap_product(stats, spec.p))
    else:
        div = divergence_test(family.radii, vals)
    return ClassReport(spec.kind, spec.params(), float(vals[j]), ball, family.descriptor(), div,
                       vals, family.radii, float(clip))


def refinement_study(w, rho, spec, family_factory, sizes=(1000, 2000, 4000)) -> dict:
    """Class constant across nested families; accepted when the last doubling moves it < 5%."""
    consts = [class_constant(w, rho, spec, family_factory(s)).constant for s in sizes]
    change = abs(consts[-1] - consts[-2]) / abs(consts[-2]) if consts[-2] else 0.0
    return {"sizes": list(sizes), "constants": consts, "last_change": change, "stable": change < 0.05}


# ---------------------------------------------- growth on B(0, 2 l) balls


def ap_rho_divergence(w: GridFunction, rho: CriticalRadius, p: float, ells) -> dict:
    """Normalized ``A_p`` product on ``B(0, 2l)`` along a list of ``l > 1``.

    Reports the product, the lower-bound ratio against
    ``l^-d (e^l - 1)^(1/p)`` (``l^-d e^l`` for ``p = 1``) and the increments
    of its logarithm per unit ``l``.
    """
    ells = np.asarray(ells, dtype=float)
    dom = w.domain
    if 2 * ells.max() > dom.L:
        raise DomainTooSmall(f"ball B(0, {2 * ells.max()}) exceeds the box half-width {dom.L}")
    fam = BallFamily(np.zeros((len(ells), dom.d)), 2 * ells, "dyadic", None, {"ells": ells.tolist()})
    prod = ap_product(BallStats(w, fam), p)
    ref = ells ** (-dom.d) * (np.expm1(ells) ** (1 / p) if p > 1 else np.exp(ells))
    logp = np.log(prod)
    incr = np.diff(logp) / np.diff(ells)
    slope = float(np.polyfit(ells, logp, 1)[0]) if len(ells) > 1 else math.nan
    return {"ells": ells.tolist(), "product": prod.tolist(), "lower_ratio": (prod / ref).tolist(),
            "c_fit": float(np.min(prod / ref)), "increments": incr.tolist(),
            "min_increment": float(incr.min()) if len(incr) else math.nan, "slope": slope}


# ---------------------------------------------------------- inclusions


def _poly_exp_sup(theta: float, c: float, m: float) -> float:
    """``sup_{s >= 1} s^theta exp(-c s^m)``."""
    if theta == 0:
        return math.exp(-c)
    if m == 0 or c == 0:
        return math.inf
    s_star = max(1.0, (theta / (c * m)) ** (1 / m))
    return s_star**theta * math.exp(-c * s_star**m)


def check_inclusions(w: GridFunction, rho: CriticalRadius, p: float, c: float, family: BallFamily,
                     thetas=(0.0, 1.0, 2.0, 4.0, 8.0), ms=(0.5, 1.0, 2.0)) -> dict:
    """A^{rho,theta}_p, H^{rho,m}_{p,c} and A^{rho,loc}_p constants on one family.

    Per ball: the H expression is at most ``sup_s s^theta e^{-c s^m}`` times
    the A^{rho,theta} expression, and on sub-critical balls the A^{rho,loc}
    expression is at most ``e^{c 2^m}`` times the H expression.
    """
    stats = BallStats(w, family)
    t = stats.t(rho)
    A = {th: class_constant(w, rho, WeightClassSpec("Ap_rho_theta", p=p, theta=th), family, stats) for th in thetas}
    H = {m: class_constant(w, rho, WeightClassSpec("H", p=p, c=c, m=m), family, stats) for m in ms}
    try:
        loc = class_constant(w, rho, WeightClassSpec("Ap_loc", p=p), family, stats)
    except EmptyFamily:
        loc = None
    per_ball_ok = True
    for th, ra in A.items():
        for m, rh in H.items():
            K = _poly_exp_sup(th, c, m)
            per_ball_ok &= bool(np.all(rh.per_ball <= K * ra.per_ball * (1 + 1e-12)))
    sub = t <= 1 + 1e-12
    if loc is not None:
        for m, rh in H.items():
            per_ball_ok &= bool(np.all(loc.per_ball[sub] <= math.exp(c * 2**m) * rh.per_ball[sub] * (1 + 1e-12)))
    A_finite = any(not r.divergence for r in A.values())
    H_finite = any(not r.divergence for r in H.values())
    return {"A_rho_theta": {th: r.to_dict() for th, r in A.items()},
            "H": {m: r.to_dict() for m, r in H.items()},
            "A_loc": loc.to_dict() if loc else None,
            "A_finite": A_finite, "H_finite": H_finite, "loc_finite": loc is not None,
            "A_divergent": not A_finite,
            "implications_hold": bool(per_ball_ok and (not A_finite or H_finite) and (not H_finite or loc is not None))}


# ------------------------------------------------------ structure lemmas


def dual_weight(w: GridFunction, p: float) -> GridFunction:
    """``sigma = w^(1 - p')`` = ``w^(-1/(p-1))``."""
    return w.with_values(positive_weight(w).reshape(w.domain.shape) ** (-1.0 / (p - 1)))


def structure_lemmas(w: GridFunction, rho: CriticalRadius, p: float, c: float, m: float,
                     family: BallFamily, qs=(None,), w1: GridFunction | None = None,
                     w2: GridFunction | None = None, c1: float = 2.0, c2: float = 0.0,
                     m1: float = 1.0, m2: float = 0.0) -> dict:
    """Monotonicity in p, duality, factorization and doubling, as per-ball checks."""
    if p <= 1:
        raise ValueError("duality needs p > 1")
    stats = BallStats(w, family)
    Hp = class_constant(w, rho, WeightClassSpec("H", p=p, c=c, m=m), family, stats)
    out = {"H_p": Hp.to_dict()}
    # (i) the A_q product never exceeds the A_p product when q >= p (both are >= 1)
    mono = []
    for q in (p + 0.5, 2 * p, 4 * p):
        Hq = class_constant(w, rho, WeightClassSpec("H", p=q, c=c, m=m), family, stats)
        mono.append({"q": q, "constant": Hq.constant,
                     "per_ball": bool(np.all(Hq.per_ball <= Hp.per_ball * (1 + 1e-12)))})
    out["monotone_in_p"] = mono
    # (ii) per ball, the A_{p'} product of sigma equals the A_p product of w
    pp = p / (p - 1)
    sigma = dual_weight(w, p)
    Hs = class_constant(sigma, rho, WeightClassSpec("H", p=pp, c=c, m=m), family)
    rel = np.max(np.abs(Hs.per_ball / Hp.per_ball - 1))
    out["duality"] = {"p_dual": pp, "constant_sigma": Hs.constant, "max_rel_gap": float(rel),
                      "identity": bool(rel < 1e-10),
                      "involution": bool(np.allclose(dual_weight(sigma, pp).values, w.values, rtol=1e-12))}
    # (iii) w1 w2^(1-p) with c = (c1 + (p-1) c2)/p, m = max(m1, m2)
    if w1 is not None:
        w2 = w2 if w2 is not None else GridFunction.constant(w.domain, 1.0)
        prod = w1.with_values(positive_weight(w1).reshape(w.domain.shape) * positive_weight(w2).reshape(w.domain.shape) ** (1 - p))
        cf, mf = (c1 + (p - 1) * c2) / p, max(m1, m2)
        H1 = class_constant(w1, rho, WeightClassSpec("H", p=1, c=c1, m=m1), family)
        H2 = class_constant(w2, rho, WeightClassSpec("H", p=1, c=c2, m=m2), family)
        Hf = class_constant(prod, rho, WeightClassSpec("H", p=p, c=cf, m=mf), family)
        bound = H1.constant ** (1 / p) * H2.constant ** ((p - 1) / p)
        out["factorization"] = {"c": cf, "m": mf, "constant": Hf.constant, "bound": bound,
                                "holds": bool(Hf.constant <= bound * (1 + 1e-9)), "divergence": Hf.divergence}
    # (iv) doubling with kappa = p and constant c p
    Dc = class_constant(w, rho, WeightClassSpec("Doubling", kappa=p, c=c * p, m=m), family, stats)
    out["doubling"] = {"kappa": p, "c": c * p, "constant": Dc.constant, "finite": bool(np.isfinite(Dc.constant))}
    return out


# ------------------------------------------------------- reverse Holder


ETA_LATTICE = np.round(np.arange(1.05, 2.0 + 1e-9, 0.05), 2)


def fit_rh_c(stats: BallStats, rho: CriticalRadius, eta: float, m: float,
             c_grid=np.round(np.arange(0.0, 10.0 + 1e-9, 0.05), 2), stability: float = 1.05):
    """Smallest ``c`` for which super-critical balls do not dominate the RH constant.

    Returns ``(c, constant)`` or ``None`` when no lattice ``c`` qualifies.
    """
    t = stats.t(rho)
    raw = stats.avg_pow(eta) ** (1 / eta) / stats.avg_pow(1)
    sub = t <= 1
    for c in c_grid:
        vals = raw / exp_factor(t, c, m)
        ref = vals[sub].max() if sub.any() else vals.min()
        if vals.max() <= stability * ref and not divergence_test(stats.family.radii, vals):
            return float(c), float(vals.max())
    return None


def reverse_holder_suite(w: GridFunction, rho: CriticalRadius, p: float, c: float, m: float,
                         family: BallFamily, etas=ETA_LATTICE, betas=ETA_LATTICE) -> dict:
    """Reverse Holder exponent and constant, then the openness step.

    For the first lattice ``eta`` with a fitted ``c*``: the per-ball identity
    ``A_q(w^eta) = RH(B)^(eta/q) A_p(w)^(eta p/q)``, ``q = eta(p-1)+1`` is
    checked, the resulting H_{q,c2} bound with ``c2 = (c* + c p) eta / q`` is
    verified per ball, and a ``beta > 1`` with finite RH_{eta beta, c*+c/eta}
    constant is searched.
    """
    stats = BallStats(w, family)
    t = stats.t(rho)
    table = {}
    found = None
    for eta in etas:
        fit = fit_rh_c(stats, rho, float(eta), m)
        table[float(eta)] = None if fit is None else {"c_star": fit[0], "constant": fit[1]}
        if fit is not None and found is None:
            found = (float(eta), *fit)
    if found is None:
        raise NoEta("no reverse Holder exponent on the lattice has a finite constant")
    eta, c_star, C_rh = found
    raw_rh = stats.avg_pow(eta) ** (1 / eta) / stats.avg_pow(1)
    q = eta * (p - 1) + 1
    Ap = ap_product(stats, p)
    weta = w.with_values(stats.values.reshape(w.domain.shape) ** eta)
    Aq = ap_product(BallStats(weta, family), q)
    ident = float(np.max(np.abs(Aq / (raw_rh ** (eta / q) * Ap ** (eta * p / q)) - 1)))
    c2 = (c_star + c * p) * eta / q
    m2 = max(m, m)
    C_h = float(np.max(Ap / exp_factor(t, c, m)))
    h_expr = Aq / exp_factor(t, c2, m2)
    per_ball = bool(np.all(h_expr <= C_rh ** (eta / q) * C_h ** (eta * p / q) * (1 + 1e-9)))
    c_tilde = c_star + c / eta
    beta_hit = None
    for beta in betas:
        e2 = eta * float(beta)
        vals = stats.avg_pow(e2) ** (1 / e2) / stats.avg_pow(1) / exp_factor(t, c_tilde, m2)
        if not divergence_test(family.radii, vals):
            beta_hit = {"beta": float(beta), "eta_beta": e2, "c_tilde": c_tilde, "constant": float(vals.max())}
            break
    mono = [v["constant"] for v in table.values() if v is not None]
    return {"eta": eta, "c_star": c_star, "constant": C_rh, "table": table,
            "openness": {"q": q, "c2": c2, "m2": m2, "identity_gap": ident, "per_ball": per_ball,
                         "beta": beta_hit},
            "raw_rh_by_eta": {float(e): float(np.max(stats.avg_pow(e) ** (1 / e) / stats.avg_pow(1))) for e in etas},
            "monotone_constants": mono}
