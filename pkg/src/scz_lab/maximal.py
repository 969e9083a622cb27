"""Local and exponential maximal operators, BMO(w), probe sets and the
Rubio de Francia iteration.

Suprema run over a radius ladder: dyadic radii ``h 2^k`` up to the box
diagonal, plus the critical radius ``rho(x)`` of each center. Ball averages
are node averages over the clipped ball. In one dimension they come from
extended-precision prefix sums; otherwise from disc correlations (direct for
small discs, FFT for large ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .critical_radius import CriticalRadius
from .errors import (NormEstimateZero, ParameterRelationViolated, PreconditionError,
                     WeightOutOfRange)
from .grid import BallFamily, GridDomain, GridFunction, ball_offsets, footprint_key, weighted_lp_norm

KINDS = ("local", "exp_centered", "exp_uncentered", "sharp_local")
_DIRECT_LIMIT = 2000
_GATHER_CHUNK = 2_000_000


def radius_ladder(domain: GridDomain) -> np.ndarray:
    """Dyadic radii ``h 2^k`` not exceeding ``2 L sqrt(d)``."""
    top = 2 * domain.L * math.sqrt(domain.d)
    k = int(math.floor(math.log2(top / domain.h) + 1e-12))
    return domain.h * 2.0 ** np.arange(k + 1)


@dataclass(frozen=True)
class MaximalSpec:
    kind: str
    c: float = 0.0
    m: float = 0.0
    ladder: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown maximal kind {self.kind!r}")
        if self.c < 0 or self.m < 0:
            raise ValueError("c and m must be nonnegative")
        if self.kind in ("local", "sharp_local") and (self.c or self.m):
            raise ValueError(f"{self.kind} takes no (c, m)")


# ------------------------------------------------------------- averaging


def _footprint(domain: GridDomain, radius: float) -> np.ndarray:
    offs = ball_offsets(domain, radius)
    k = int(np.abs(offs).max()) if len(offs) else 0
    fp = np.zeros((2 * k + 1,) * domain.d, dtype=bool)
    fp[tuple((offs + k).T)] = True
    return fp


class BallAverager:
    """Centered ball sums and counts on one grid, cached by disc footprint."""

    def __init__(self, domain: GridDomain):
        self.domain = domain
        self._counts = {}
        self._fps = {}

    def footprint(self, radius: float) -> np.ndarray:
        key = footprint_key(self.domain, radius)
        if key not in self._fps:
            self._fps[key] = _footprint(self.domain, radius)
        return self._fps[key]

    def _sum_nd(self, arr: np.ndarray, radius: float) -> np.ndarray:
        fp = self.footprint(radius)
        if fp.sum() <= _DIRECT_LIMIT:
            return ndimage.correlate(arr, fp.astype(float), mode="constant", cval=0.0)
        k = fp.shape[0] // 2
        n = self.domain.n
        if k >= n:
            crop = tuple(slice(k - (n - 1), k + n) for _ in range(self.domain.d))
            fp = fp[crop]
        return signal.fftconvolve(arr, fp.astype(float), mode="same")

    def sums(self, arr: np.ndarray, radius) -> tuple[np.ndarray, np.ndarray]:
        """Ball sums and node counts; ``radius`` is a scalar or one radius per node."""
        dom = self.domain
        arr = np.asarray(arr, dtype=float).reshape(dom.shape)
        if dom.d == 1:
            cs = np.concatenate([[0.0], np.cumsum(arr.astype(np.longdouble))])
            i = np.arange(dom.n)
            k = np.floor(np.broadcast_to(np.asarray(radius, float), (dom.n,)) / dom.h + 1e-9).astype(int)
            lo, hi = np.maximum(0, i - k), np.minimum(dom.n - 1, i + k)
            return np.asarray(cs[hi + 1] - cs[lo], dtype=float), (hi - lo + 1).astype(float)
        if np.ndim(radius) == 0:
            key = footprint_key(dom, radius)
            if key not in self._counts:
                self._counts[key] = np.rint(self._sum_nd(np.ones(dom.shape), radius))
            return self._sum_nd(arr, radius), self._counts[key]
        radius = np.asarray(radius, float).reshape(dom.shape)
        keys = np.floor((radius / dom.h + 1e-9) ** 2).astype(np.int64)
        s, c = np.zeros(dom.shape), np.zeros(dom.shape)
        for key in np.unique(keys):
            sel = keys == key
            r = float(radius[sel].flat[0])
            ss, cc = self.sums(arr, r)
            s[sel], c[sel] = ss[sel], cc[sel]
        return s, c

    def averages(self, arr, radius) -> np.ndarray:
        s, c = self.sums(arr, radius)
        return np.maximum(s, 0.0) / c if np.all(np.asarray(arr) >= 0) else s / c

    def uncentered_max(self, values: np.ndarray, radius) -> np.ndarray:
        """``x -> max{values[x'] : |x - x'| <= r(x')}``; ``-inf`` entries are ignored."""
        dom = self.domain
        values = np.asarray(values, float).reshape(dom.shape)
        if np.ndim(radius) == 0:
            return self._max_filter(values, float(radius))
        radius = np.asarray(radius, float).reshape(dom.shape)
        keys = np.floor((radius / dom.h + 1e-9) ** 2).astype(np.int64)
        out = np.full(dom.shape, -np.inf)
        for key in np.unique(keys):
            sel = keys == key
            part = np.where(sel, values, -np.inf)
            out = np.maximum(out, self._max_filter(part, float(radius[sel].flat[0])))
        return out

    def _max_filter(self, values, radius):
        dom = self.domain
        if radius >= dom.diameter:
            return np.full(dom.shape, values.max())
        if dom.d == 1:
            k = int(math.floor(radius / dom.h + 1e-9))
            return ndimage.maximum_filter1d(values, 2 * k + 1, mode="constant", cval=-np.inf)
        return ndimage.maximum_filter(values, footprint=self.footprint(radius), mode="constant", cval=-np.inf)


def _gather(arr: np.ndarray, offsets: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """``arr[node + offset]`` for each node (rows) and offset (columns); ``nan`` off the box."""
    K = int(np.abs(offsets).max()) if offsets.size else 0
    P = np.pad(arr, K, constant_values=np.nan)
    strides = np.array([int(np.prod(P.shape[i + 1:])) for i in range(arr.ndim)])
    base = np.ravel_multi_index(tuple((nodes + K).T), P.shape)
    return P.ravel()[base[:, None] + (offsets @ strides)[None, :]]


def oscillations(f: GridFunction, radius: float, nodes: np.ndarray | None = None,
                 best_constant: bool = False) -> np.ndarray:
    """``avg_B |f - f_B|`` for the balls of a fixed radius centered at ``nodes`` (flat indices).

    With ``best_constant`` the median replaces the mean, giving ``inf_a avg_B |f - a|``.
    """
    dom = f.domain
    offs = ball_offsets(dom, radius)
    nodes = np.arange(dom.size) if nodes is None else np.asarray(nodes)
    multi = np.stack(np.unravel_index(nodes, dom.shape), axis=-1)
    out = np.empty(len(nodes))
    step = max(1, _GATHER_CHUNK // max(1, len(offs)))
    for s in range(0, len(nodes), step):
        G = _gather(f.values, offs, multi[s:s + step])
        centre = np.nanmedian(G, axis=1) if best_constant else np.nanmean(G, axis=1)
        out[s:s + step] = np.nanmean(np.abs(G - centre[:, None]), axis=1)
    return out


# -------------------------------------------------------------- operators


def apply_maximal(f: GridFunction, rho: CriticalRadius, spec: MaximalSpec,
                  averager: BallAverager | None = None) -> GridFunction:
    """Nodewise supremum of the kind's expression over the radius ladder."""
    dom = f.domain
    av = averager or BallAverager(dom)
    absf = np.abs(f.values)
    rv = rho.on_grid(dom).values
    ladder = np.asarray(spec.ladder if spec.ladder is not None else radius_ladder(dom), float)
    if spec.kind == "sharp_local":
        return GridFunction(dom, _sharp_local(f, rv, ladder, av))
    best = np.zeros(dom.shape)
    rungs = [(float(r), float(r)) for r in ladder] + [(None, None)]
    for r, _ in rungs:
        radius = rv if r is None else r
        avg = av.averages(absf, radius)
        if spec.kind == "local":
            ok = np.ones(dom.shape, bool) if r is None else (r <= rv)
            best = np.maximum(best, av.uncentered_max(np.where(ok, avg, -np.inf), radius))
            continue
        t = np.ones(dom.shape) if r is None else r / rv
        val = avg * np.exp(-spec.c * (1 + t) ** spec.m)
        if spec.kind == "exp_centered":
            best = np.maximum(best, val)
        else:
            best = np.maximum(best, av.uncentered_max(val, radius))
    return GridFunction(dom, best)


def _sharp_local(f: GridFunction, rv: np.ndarray, ladder, av: BallAverager) -> np.ndarray:
    dom = f.domain
    flat_rho = rv.ravel()
    osc_best = np.zeros(dom.shape)
    for r in ladder:
        centres = np.flatnonzero(r < flat_rho)
        if centres.size == 0:
            continue
        vals = np.full(dom.size, -np.inf)
        vals[centres] = oscillations(f, float(r), centres)
        osc_best = np.maximum(osc_best, av.uncentered_max(vals.reshape(dom.shape), float(r)))
    crit = av.uncentered_max(av.averages(np.abs(f.values), rv), rv)
    return osc_best + crit


def compare_centered_uncentered(f: GridFunction, rho: CriticalRadius, c1: float, m1: float,
                                c2: float, m2: float) -> dict:
    """Ratio of the uncentered ``(c1, m1)`` operator to the centered ``(c2, m2)`` one.

    Requires ``m1 >= (k0+1) m2`` and ``c1 >= c2 (2 C0)^m2``.
    """
    if not rho.certified:
        raise PreconditionError("radius constants are required")
    if m1 < (rho.k0 + 1) * m2 - 1e-12 or c1 < c2 * (2 * rho.C0) ** m2 - 1e-12:
        raise ParameterRelationViolated(
            f"need m1 >= (k0+1) m2 and c1 >= c2 (2 C0)^m2; got m1={m1}, m2={m2}, c1={c1}, c2={c2}")
    av = BallAverager(f.domain)
    num = apply_maximal(f, rho, MaximalSpec("exp_uncentered", c1, m1), av).values
    den = apply_maximal(f, rho, MaximalSpec("exp_centered", c2, m2), av).values
    ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    j = int(np.argmax(ratio))
    return {"ratio": GridFunction(f.domain, ratio), "max_ratio": float(ratio.flat[j]),
            "argmax": f.domain.points()[j].tolist()}


# ----------------------------------------------------------------- BMO(w)


def bmo_norm(f: GridFunction, w: GridFunction, rho: CriticalRadius, ladder=None) -> dict:
    """Weighted BMO norm and the sharp-maximal equivalent.

    Oscillation part: ``max_B w * avg_B |f - f_B|`` over ladder balls with
    ``r < rho(center)``; average part: ``max_B w * avg_B |f|`` over critical
    balls. On the same ball set ``bmo <= ||M# f w||_inf <= 2 bmo``.
    """
    if np.any(w.values <= 0):
        raise PreconditionError("BMO(w) needs w > 0")
    dom = f.domain
    av = BallAverager(dom)
    rv = rho.on_grid(dom).values
    ladder = radius_ladder(dom) if ladder is None else np.asarray(ladder, float)
    wv = w.values
    osc_part = 0.0
    osc_best_const = 0.0
    for r in ladder:
        centres = np.flatnonzero(r < rv.ravel())
        if centres.size == 0:
            continue
        osc = oscillations(f, float(r), centres)
        med = oscillations(f, float(r), centres, best_constant=True)
        wmax = av._max_filter(wv, float(r)).ravel()[centres]
        osc_part = max(osc_part, float(np.max(osc * wmax)))
        osc_best_const = max(osc_best_const, float(np.max(med * wmax)))
    crit = av.averages(np.abs(f.values), rv)
    wmax_c = _centered_max(av, wv, rv)
    avg_part = float(np.max(crit * wmax_c))
    norm = max(osc_part, avg_part)
    sharp = _sharp_local(f, rv, ladder, av)
    sharp_norm = float(np.max(sharp * wv))
    return {"norm": norm, "osc_part": osc_part, "avg_part": avg_part, "osc_best_constant": osc_best_const,
            "sharp_norm": sharp_norm, "equivalence": sharp_norm / norm if norm > 0 else 1.0}


def _centered_max(av: BallAverager, values, radius_field):
    """``max`` of ``values`` over ``B(x, r(x))`` for every node."""
    dom = av.domain
    keys = np.floor((radius_field / dom.h + 1e-9) ** 2).astype(np.int64)
    out = np.empty(dom.shape)
    for key in np.unique(keys):
        sel = keys == key
        out[sel] = av._max_filter(values, float(radius_field[sel].flat[0]))[sel]
    return out


# --------------------------------------------------------------- probes


PROBE_KINDS = ("gaussians", "indicators", "dyadic_bumps")


def probe_set(domain: GridDomain, kind: str, size: int, seed: int = 0, box: float | None = None) -> list:
    """Seeded nonnegative probes; the first ``k`` probes of a larger set are the set of size ``k``."""
    if kind not in PROBE_KINDS:
        raise ValueError(f"unknown probe set {kind!r}")
    half = 0.8 * domain.L if box is None else box
    u = np.random.default_rng(seed).random((size, domain.d + 1))
    pts = domain.points()
    h = domain.h
    out = []
    for row in u:
        c = -half + 2 * half * row[: domain.d]
        dist = np.linalg.norm(pts - c, axis=1)
        if kind == "gaussians":
            width = math.exp(math.log(2 * h) + (math.log(domain.L / 2) - math.log(2 * h)) * row[-1])
            vals = np.exp(-0.5 * (dist / width) ** 2)
        elif kind == "indicators":
            r = math.exp(math.log(h) + (math.log(domain.L / 2) - math.log(h)) * row[-1])
            vals = (dist <= r).astype(float)
            if not vals.any():
                vals[np.argmin(dist)] = 1.0
        else:
            k = int(row[-1] * max(1, int(math.log2(domain.L / h))))
            r = 2 * h * 2.0**k
            vals = np.clip(1 - (dist / r) ** 2, 0, None)
            if not vals.any():
                vals[np.argmin(dist)] = 1.0
        out.append(GridFunction(domain, vals))
    return out


def empirical_operator_norm(T, p: float, w: GridFunction, probes) -> dict:
    """``max ||T f||_{L^p(w)} / ||f||_{L^p(w)}`` over the probes (a lower bound on the norm)."""
    ratios = []
    for f in probes:
        den = weighted_lp_norm(f, w, p)
        if den == 0:
            raise PreconditionError("probe with zero norm")
        ratios.append(weighted_lp_norm(T(f), w, p) / den)
    ratios = np.array(ratios)
    return {"value": float(ratios.max()), "ratios": ratios.tolist(), "argmax": int(np.argmax(ratios))}


def doubling_study(T, p, w, domain, kind="gaussians", base: int = 64, doublings: int = 3, seed: int = 0) -> dict:
    """Operator-norm lower bound on nested probe sets of size ``base 2^j``."""
    sizes = [base * 2**j for j in range(doublings + 1)]
    probes = probe_set(domain, kind, sizes[-1], seed)
    ratios = empirical_operator_norm(T, p, w, probes)["ratios"]
    values = [float(max(ratios[:s])) for s in sizes]
    growth = [values[i + 1] / values[i] - 1 for i in range(len(values) - 1)]
    return {"sizes": sizes, "norms": values, "growth": growth, "max_growth": max(growth),
            "stable": bool(max(growth) < 0.10), "probe_kind": kind, "seed": seed}


def maximal_boundedness_experiment(w: GridFunction, rho: CriticalRadius, p: float, c1: float, m1: float,
                                   family: BallFamily | None = None, probe_kind: str = "gaussians",
                                   base: int = 64, doublings: int = 3, seed: int = 0,
                                   c2_factor: float = 1.05, c2_dir2: float | None = None,
                                   m2_dir2: float | None = None) -> dict:
    """Both directions of the characterization of H classes by maximal boundedness.

    Direction 1 takes ``c2 = c2_factor * c1 (8 C0)^m1`` and checks probe-set
    stability of the centered operator's ``L^p(w)`` norm. Direction 2 takes a
    centered operator ``(c2', m2')`` whose norm is stable and certifies
    ``w`` in ``H^{rho, m1'}_{p, c1'}`` with ``m1' = (k0+1) m2'`` and
    ``c1' = c2' (2 C0)^m2'``.
    """
    from .weights import WeightClassSpec, class_constant

    dom = w.domain
    av = BallAverager(dom)
    C0, k0 = rho.C0, rho.k0
    c2 = c2_factor * c1 * (8 * C0) ** m1
    T1 = lambda f: apply_maximal(f, rho, MaximalSpec("exp_centered", c2, m1), av)
    dir1 = doubling_study(T1, p, w, dom, probe_kind, base, doublings, seed)
    dir1["c2"] = c2
    below = 0.5 * c1 * (8 * C0) ** m1
    Tb = lambda f: apply_maximal(f, rho, MaximalSpec("exp_centered", below, m1), av)
    info = doubling_study(Tb, p, w, dom, probe_kind, base, doublings, seed)
    info["c2"] = below
    c2b = c1 if c2_dir2 is None else c2_dir2
    m2b = m1 if m2_dir2 is None else m2_dir2
    T2 = lambda f: apply_maximal(f, rho, MaximalSpec("exp_centered", c2b, m2b), av)
    dir2_norm = doubling_study(T2, p, w, dom, probe_kind, base, doublings, seed)
    m1p, c1p = (k0 + 1) * m2b, c2b * (2 * C0) ** m2b
    family = family or BallFamily.random(dom, 2000, seed=seed, r_max=dom.L / 2, center_box=dom.L / 2)
    rep = class_constant(w, rho, WeightClassSpec("H", p=p, c=c1p, m=m1p), family)
    dir2 = {"c2": c2b, "m2": m2b, "norm_study": dir2_norm, "c1_prime": c1p, "m1_prime": m1p,
            "class_report": rep.to_dict(),
            "certified": bool(dir2_norm["stable"] and np.isfinite(rep.constant) and not rep.divergence)}
    return {"direction1": dir1, "below_threshold": info, "direction2": dir2,
            "passed": bool(dir1["stable"] and dir2["certified"])}


# ---------------------------------------------------- Rubio de Francia


@dataclass
class RdFResult:
    Rh: GridFunction
    terms: int
    norm_T: float
    probe_bound: float
    observed_ratio: float
    tail_norm_bound: float
    tail_field: GridFunction
    norms: dict

    def as_dict(self):
        return {"terms": self.terms, "norm_T": self.norm_T, "probe_bound": self.probe_bound,
                "observed_ratio": self.observed_ratio, "tail_norm_bound": self.tail_norm_bound, **self.norms}


def rdf_operator(w: GridFunction, rho: CriticalRadius, p: float, c1: float, m1: float,
                 averager: BallAverager | None = None):
    """``f -> M(f w^(-1/(p-1))) w^(1/(p-1))`` with the uncentered exponential operator."""
    av = averager or BallAverager(w.domain)
    spec = MaximalSpec("exp_uncentered", c1, m1)
    lo, hi = w.values ** (-1.0 / (p - 1)), w.values ** (1.0 / (p - 1))

    def T(f):
        return GridFunction(w.domain, apply_maximal(f * lo, rho, spec, av).values * hi)

    return T


def rdf_iteration(h: GridFunction, w: GridFunction, rho: CriticalRadius, p: float, c1: float, m1: float,
                  K: int = 12, probes=None, inflate: float = 1.5, averager: BallAverager | None = None) -> RdFResult:
    """Truncated series ``sum_{k<K} T^k h / (2 N)^k`` in ``L^p(w^(-1/(p-1)))``.

    ``N`` is ``inflate`` times the larger of the probe lower bound of the
    operator norm and the largest observed ratio ``||T^(k+1) h|| / ||T^k h||``,
    so the norm bound of the series holds by construction. The nodewise tail
    of the sublinearity estimate is ``T^K h / (2 N)^(K-1)``.
    """
    if K < 1:
        raise ValueError("need at least one term")
    if np.any(h.values < 0):
        raise PreconditionError("h must be nonnegative")
    dom = h.domain
    sigma = w.with_values(w.values ** (-1.0 / (p - 1)))
    T = rdf_operator(w, rho, p, c1, m1, averager)
    probes = probes if probes is not None else probe_set(dom, "gaussians", 8, seed=0)
    probe_bound = empirical_operator_norm(T, p, sigma, probes)["value"]
    if probe_bound == 0:
        raise NormEstimateZero("operator norm estimate vanished on every probe")
    g = [h]
    for _ in range(K):
        g.append(T(g[-1]))
    norms = [weighted_lp_norm(x, sigma, p) for x in g]
    ratios = [norms[k + 1] / norms[k] for k in range(K) if norms[k] > 0]
    observed = max(ratios) if ratios else 0.0
    N = inflate * max(probe_bound, observed)
    acc = h.values.copy()
    for k in range(1, K):
        acc = acc + g[k].values / (2 * N) ** k
    Rh = GridFunction(dom, acc)
    tail = GridFunction(dom, g[K].values / (2 * N) ** (K - 1))
    hn = norms[0]
    return RdFResult(Rh, K, N, probe_bound, observed, 2.0 ** (1 - K) * hn, tail,
                     {"h_norm": hn, "Rh_norm": weighted_lp_norm(Rh, sigma, p)})


def rdf_properties(res: RdFResult, h: GridFunction, w, rho, p, c1, m1, rtol: float = 1e-12) -> dict:
    """The three properties of the iteration, checked directly."""
    T = rdf_operator(w, rho, p, c1, m1)
    TR = T(res.Rh).values
    rhs = 2 * res.norm_T * res.Rh.values + res.tail_field.values
    hn = res.norms["h_norm"]
    return {"dominates_h": bool(np.all(res.Rh.values >= h.values)),
            "norm_bound": bool(res.norms["Rh_norm"] <= 2 * hn + res.tail_norm_bound),
            "norm_ratio": res.norms["Rh_norm"] / hn if hn > 0 else 0.0,
            "sublinear_bound": bool(np.all(TR <= rhs * (1 + rtol) + 1e-300)),
            "sublinear_slack": float(np.min(rhs - TR))}


# ------------------------------------------------------------- endpoint


def endpoint_bmo_experiment(T, w: GridFunction, rho: CriticalRadius, c_weight: float, c_kernel: float,
                            m_kernel: float, family: BallFamily | None = None, probe_kind: str = "gaussians",
                            base: int = 32, doublings: int = 2, seed: int = 0, ladder=None,
                            extrapolation: dict | None = None) -> dict:
    """BMO(w) norms of ``T f`` over probes with ``||f w||_inf = 1``.

    ``w^-1`` must lie in ``H^{rho, m_kernel}_{1, c_weight}`` with
    ``c_weight < c_kernel 2^-m_kernel``; the class constant is re-estimated on
    ``family``. ``extrapolation`` (keys ``p``, ``weight``, optional ``c_star``)
    adds an ``L^p(weight)`` probe-stability check; the weight must certify in
    ``H^{rho, m*}_{p, c*}`` with ``m* = m/(k0+1)`` and ``c* < c (4 C0)^(-2 m*)``.
    """
    from .weights import WeightClassSpec, class_constant

    threshold = c_kernel * 2.0 ** (-m_kernel)
    if not c_weight < threshold:
        raise WeightOutOfRange(f"c={c_weight:.4g} is not below the threshold {threshold:.4g}")
    dom = w.domain
    winv = w.with_values(1.0 / w.values)
    family = family or BallFamily.random(dom, 400, seed=seed, r_max=dom.L, center_box=dom.L)
    cls = class_constant(winv, rho, WeightClassSpec("H", p=1, c=c_weight, m=m_kernel), family)
    if cls.divergence or not np.isfinite(cls.constant):
        raise WeightOutOfRange("w^-1 does not certify in the required H_1 class")
    sizes = [base * 2**j for j in range(doublings + 1)]
    probes = probe_set(dom, probe_kind, sizes[-1], seed)
    norms = []
    for f in probes:
        f = f / float(np.max(np.abs(f.values) * w.values))
        norms.append(bmo_norm(T(f), w, rho, ladder)["norm"])
    per_size = [max(norms[:s]) for s in sizes]
    growth = [per_size[i + 1] / per_size[i] - 1 for i in range(len(sizes) - 1)]
    out = {"threshold": threshold, "c_weight": c_weight, "class_constant": cls.constant, "sizes": sizes,
           "bmo_norms": per_size, "growth": growth, "stable": bool(max(growth) < 0.10)}
    if extrapolation is not None:
        p, v = extrapolation["p"], extrapolation["weight"]
        m_star = m_kernel / (rho.k0 + 1)
        c_max = c_weight * (4 * rho.C0) ** (-2 * m_star)
        c_star = float(extrapolation.get("c_star", 0.99 * c_max))
        if not c_star < c_max:
            raise WeightOutOfRange(f"c*={c_star:.4g} is not below {c_max:.4g}")
        vcls = class_constant(v, rho, WeightClassSpec("H", p=p, c=c_star, m=m_star), family)
        if vcls.divergence or not np.isfinite(vcls.constant):
            raise WeightOutOfRange("extrapolation weight does not certify in the required H_p class")
        study = doubling_study(T, p, v, dom, probe_kind, base, doublings, seed)
        study.update(c_star=c_star, m_star=m_star, class_constant=vcls.constant)
        out["extrapolated"] = study
        out["stable"] = out["stable"] and study["stable"]
    return out
