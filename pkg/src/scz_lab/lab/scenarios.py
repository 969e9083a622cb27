"""Built-in scenarios.

A scenario is a list of independent checks. Each check returns an
:class:`Outcome`; the runner times it and turns it (or the error it raised)
into a report record. Defaults below are overridden by the config sections
``domain``, ``rho``, ``weight``, ``operator``, ``classes``, ``probes``,
``family``, ``samples`` and ``tolerances``.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .. import agmon as A
from .. import kernels as K
from .. import maximal as M
from .. import measures as Me
from .. import weights as W
from ..critical_radius import (CriticalRadius, build_covering, builtin_rho, rho_from_measure, sample_pairs,
                               validate_critical_radius)
from ..errors import CannotCertify, NoFit, ParameterRelationViolated, ViolationWitness, WeightOutOfRange
from ..grid import BallFamily, GridDomain, GridFunction


@dataclass
class Outcome:
    passed: bool
    constants: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Check:
    name: str
    anchor: str
    run: Callable


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    build: Callable

    def checks(self, ctx) -> list:
        return self.build(ctx)


class Context:
    """Config accessors with defaults, scaled tolerances and a per-run memo."""

    def __init__(self, cfg: dict, tolerance_scale: float = 1.0):
        self.cfg = cfg
        self.scale = float(tolerance_scale)
        self.seed = int(cfg.get("seed", 0))
        self._memo = {}

    def get(self, section: str, key: str, default):
        return self.cfg.get(section, {}).get(key, default)

    def tol(self, key: str, default: float) -> float:
        return float(self.cfg.get("tolerances", {}).get(key, default)) * self.scale

    def samples(self, default: int) -> int:
        return int(self.cfg.get("samples", default))

    def memo(self, key, fn):
        if key not in self._memo:
            self._memo[key] = fn()
        return self._memo[key]

    def domain(self, d: int, L: float, n: int) -> GridDomain:
        return GridDomain(self.get("domain", "d", d), float(self.get("domain", "L", L)), self.get("domain", "n", n))

    def rho(self, kind: str = "harmonic_oscillator", rho0: float = 1.0):
        kind = self.get("rho", "kind", kind)
        if kind == "constant":
            return builtin_rho("constant", rho0=self.get("rho", "rho0", rho0))
        return builtin_rho(kind)

    def weight(self, dom: GridDomain, a: float = 1.0) -> GridFunction:
        kind = self.get("weight", "kind", "exp_abs")
        a = float(self.get("weight", "a", a))
        if kind == "one":
            return GridFunction.constant(dom, 1.0)
        return GridFunction.from_callable(dom, lambda p: np.exp(a * np.linalg.norm(p, axis=-1)))

    def weight_class(self, kind: str = "H", **defaults) -> W.WeightClassSpec:
        for spec in self.cfg.get("classes", []):
            if spec["kind"] == kind:
                return W.WeightClassSpec(**{**defaults, **spec})
        return W.WeightClassSpec(kind, **defaults)

    def family(self, dom: GridDomain, size: int) -> BallFamily:
        size = self.get("family", "size", size)
        return BallFamily.random(dom, size, seed=self.get("family", "seed", self.seed))

    def probes(self, kind: str = "gaussians", base: int = 64, doublings: int = 3, count: int = 8):
        return {"kind": self.get("probes", "kind", kind), "base": self.get("probes", "base", base),
                "doublings": self.get("probes", "doublings", doublings),
                "count": self.get("probes", "count", count), "seed": self.get("probes", "seed", self.seed)}


def _pairs(xs, ys):
    return [[float(a), float(b)] for a, b in zip(xs, ys)]


def _rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def _raises(exc_type, fn):
    try:
        fn()
    except exc_type as exc:
        return exc
    return None


# ----------------------------------------------------------- weights


def _prop31(ctx: Context):
    dom = ctx.domain(1, 24.0, 2401)
    rho = ctx.rho()
    w = ctx.weight(dom)
    spec = ctx.weight_class("H", p=2, c=1.0, m=1.0)
    size = ctx.get("family", "size", 2000)
    fam_seed = ctx.get("family", "seed", ctx.seed)

    def h_stable():
        study = W.refinement_study(w, rho, spec, lambda k: BallFamily.random(dom, k, seed=fam_seed),
                                   sizes=(size, 2 * size))
        tol = ctx.tol("family_change", 0.05)
        ok = all(math.isfinite(c) for c in study["constants"]) and study["last_change"] < tol
        return Outcome(ok, {"constants": study["constants"], "change": study["last_change"]},
                       {"family_change": tol}, {"H_constant": _pairs(study["sizes"], study["constants"])})

    def growth(p):
        def run():
            res = W.ap_rho_divergence(w, rho, p, np.arange(2, 11, dtype=float))
            tol = ctx.tol("slope", 0.05)
            target = 1.0 / p
            return Outcome(res["min_increment"] >= target - tol,
                           {"min_increment": res["min_increment"], "slope": res["slope"], "target": target},
                           {"slope": tol}, {f"product_p{p}": _pairs(res["ells"], res["product"])})
        return run

    return [Check("h_constant_family_doubling", "class inclusions: e^|x| lies in H_2", h_stable),
            Check("ap_rho_theta_growth_p2", "class inclusions: e^|x| leaves every A^{rho,theta}_2", growth(2)),
            Check("ap_rho_theta_growth_p1", "class inclusions: e^|x| leaves every A^{rho,theta}_1", growth(1))]


def _weight_suite(ctx: Context):
    dom = ctx.domain(1, 16.0, 1601)
    rho = ctx.rho()
    spec = ctx.weight_class("H", p=2, c=1.0, m=1.0)
    fam = ctx.family(dom, 500)
    w = ctx.weight(dom)

    def inclusions():
        res = W.check_inclusions(w, rho, spec.p, spec.c, fam)
        flags = {k: res[k] for k in ("A_finite", "H_finite", "loc_finite", "implications_hold")}
        consts = {f"H_m{m}": r["constant"] for m, r in res["H"].items()}
        consts.update({f"A_theta{t}": r["constant"] for t, r in res["A_rho_theta"].items()}, **flags)
        return Outcome(res["implications_hold"] and res["H_finite"] and res["loc_finite"], consts)

    def structure():
        res = W.structure_lemmas(w, rho, spec.p, spec.c, spec.m, fam, qs=(3.0,))
        tol = ctx.tol("identity", 1e-10)
        ok = (all(r["per_ball"] for r in res["monotone_in_p"]) and res["duality"]["identity"]
              and res["duality"]["involution"] and res["duality"]["max_rel_gap"] <= tol
              and res["doubling"]["finite"])
        return Outcome(ok, {"duality_gap": res["duality"]["max_rel_gap"], "doubling": res["doubling"]["constant"],
                            "monotone": [r["constant"] for r in res["monotone_in_p"]]}, {"identity": tol})

    def unit_weight():
        one = GridFunction.constant(dom, 1.0)
        rep = W.class_constant(one, rho, W.WeightClassSpec("H", p=2, c=0.0, m=0.0), fam)
        tol = ctx.tol("unit", 1e-12)
        return Outcome(abs(rep.constant - 1.0) <= tol, {"constant": rep.constant}, {"unit": tol})

    return [Check("class_inclusions", "class inclusions between A^{rho,theta}_p, H and A^{rho,loc}_p", inclusions),
            Check("structure_lemmas", "monotonicity, duality and doubling of H classes", structure),
            Check("unit_weight", "constant weight has class constant 1", unit_weight)]


def _reverse_holder(ctx: Context):
    dom = ctx.domain(1, 16.0, 1601)
    rho = ctx.rho()
    spec = ctx.weight_class("H", p=2, c=1.0, m=1.0)
    fam = ctx.family(dom, 500)
    w = ctx.weight(dom)

    def suite():
        return W.reverse_holder_suite(w, rho, spec.p, spec.c, spec.m, fam)

    def exponent():
        res = ctx.memo("rh", suite)
        ok = res["eta"] is not None and res["eta"] > 1 and math.isfinite(res["constant"])
        table = sorted((float(e), r["constant"]) for e, r in res["table"].items())
        return Outcome(ok, {"eta": res["eta"], "c_star": res["c_star"], "constant": res["constant"]},
                       series={"rh_constant": table})

    def openness():
        res = ctx.memo("rh", suite)["openness"]
        tol = ctx.tol("identity", 1e-10)
        ok = res["per_ball"] and res["identity_gap"] <= tol and res["beta"] is not None
        return Outcome(ok, {"q": res["q"], "c2": res["c2"], "identity_gap": res["identity_gap"],
                            "beta": res["beta"]}, {"identity": tol})

    return [Check("reverse_holder_exponent", "H classes satisfy an exponential reverse Holder inequality", exponent),
            Check("reverse_holder_openness", "openness of H classes in p", openness)]


# ------------------------------------------------- radius and geometry


def _def21(ctx: Context):
    d = ctx.get("domain", "d", 2)
    box = float(ctx.get("domain", "L", 4.0))
    x, y = sample_pairs(d, ctx.samples(2000), box, seed=ctx.seed)

    def valid(rho):
        def run():
            fit = validate_critical_radius(rho, x, y)
            return Outcome(True, {"C0": fit.C0, "k0": fit.k0})
        return run

    def exponential():
        bad = CriticalRadius(lambda p: np.exp(np.linalg.norm(p, axis=-1)), "exponential")
        exc = _raises(NoFit, lambda: validate_critical_radius(bad, x, y))
        return Outcome(exc is not None, {"message": str(exc) if exc else None})

    return [Check("constant_radius", "critical radius definition: constant radius", valid(builtin_rho("constant"))),
            Check("harmonic_radius", "critical radius definition: min(1, 1/|x|)",
                  valid(builtin_rho("harmonic_oscillator"))),
            Check("exponential_radius_rejected", "critical radius definition: e^|x| is not admissible", exponential)]


def _harmonic_antiderivative(s):
    s = np.asarray(s, float)
    return np.where(np.abs(s) <= 1, s, np.sign(s) * (s**2 + 1) / 2)


def _agmon(ctx: Context):
    rho0 = ctx.get("rho", "rho0", 0.5)
    n_src, per = 10, ctx.samples(100)

    def constant_graph():
        return A.AgmonGraph(GridDomain(2, 4.0, 81), builtin_rho("constant", rho0=rho0))

    def harmonic_graph():
        return A.AgmonGraph(GridDomain(1, 10.0, 2001), builtin_rho("harmonic_oscillator"))

    def closed_form():
        g = ctx.memo("g_const", constant_graph)
        x, y = A.sample_sources_targets(g.domain, n_src, per, seed=ctx.seed)
        xs, ys, dist = A.pair_distances(g, x, y)
        exact = np.linalg.norm(xs - ys, axis=1) / rho0
        keep = exact > 0
        err = _rel(dist[keep], exact[keep])
        tol = ctx.tol("stencil", 0.08)
        return Outcome(err <= tol, {"max_rel_error": err}, {"stencil": tol},
                       {"agmon_vs_exact": _pairs(exact[keep], dist[keep])})

    def quadrature_oracle():
        g = ctx.memo("g_harm", harmonic_graph)
        x, y = A.sample_sources_targets(g.domain, n_src, per, seed=ctx.seed + 1)
        xs, ys, dist = A.pair_distances(g, x, y)
        oracle = np.array([abs(integrate.quad(lambda s: max(1.0, abs(s)), a, b, points=[-1.0, 1.0])[0])
                           if a != b else 0.0 for a, b in zip(xs[:, 0], ys[:, 0])])
        keep = oracle > 0
        err = _rel(dist[keep], oracle[keep])
        tol = ctx.tol("oracle", 0.01)
        return Outcome(err <= tol, {"max_rel_error": err}, {"oracle": tol})

    def lemmas(graph_key, factory, seed):
        def run():
            g = ctx.memo(graph_key, factory)
            xl, yl = A.sample_local_pairs(g, n_src, per, seed=seed)
            le = A.check_local_equivalence(g, xl, yl)
            x, y = A.sample_sources_targets(g.domain, n_src, per, seed=seed)
            gb = A.check_global_bounds(g, x, y, D0=le.D0)
            consts = {"D0": le.D0, **gb.as_dict()}
            ok = all(math.isfinite(v) for v in (le.D0, gb.C0d, gb.D1)) and gb.lower_margin >= 0
            return Outcome(ok, consts)
        return run

    return [Check("constant_rho_closed_form", "Agmon distance for constant radius", closed_form),
            Check("harmonic_quadrature_oracle", "Agmon distance as a path integral of 1/rho", quadrature_oracle),
            Check("lemmas_constant_rho", "Agmon distance: local equivalence and global bounds",
                  lemmas("g_const", constant_graph, ctx.seed)),
            Check("lemmas_harmonic_rho", "Agmon distance: local equivalence and global bounds",
                  lemmas("g_harm", harmonic_graph, ctx.seed + 1))]


def _covering(ctx: Context):
    dom = ctx.domain(2, 8.0, 81)
    rho = ctx.rho()

    def run():
        cov = build_covering(rho, dom)
        ok = cov.covered_fraction == 1.0 and math.isfinite(cov.C) and math.isfinite(cov.N1)
        return Outcome(ok, {"C": cov.C, "N1": cov.N1, "balls": len(cov.centers), "covered": cov.covered_fraction},
                       series={"overlap": _pairs(cov.sigmas, cov.overlaps)})

    return [Check("critical_ball_covering", "critical balls cover with overlap C sigma^N1", run)]


# ------------------------------------------------------------ measures


def _measures(ctx: Context):
    x, r, R = Me.growth_sample(3, ctx.samples(500), seed=ctx.seed)
    leb = Me.MeasureModel.lebesgue(3)

    def lebesgue():
        _, cert = Me.certify_growth(leb, x, r, R)
        tol = ctx.tol("constant", 1e-6)
        ok = cert.delta == 2.0 and abs(cert.C - 1.0) <= tol and cert.D == 8.0
        return Outcome(ok, {"delta": cert.delta, "C": cert.C, "D": cert.D, "D_raw": cert.D_raw}, {"constant": tol})

    def atom():
        exc = _raises(CannotCertify, lambda: Me.certify_growth(Me.MeasureModel.atom([0.0, 0.0, 0.0]), x, r, R))
        return Outcome(exc is not None and exc.witness is not None,
                       {"witness": getattr(exc, "witness", None)})

    def quadratic():
        _, cert = Me.certify_growth(Me.MeasureModel.quadratic(3), x, r, R)
        return Outcome(cert.delta > 0, {"delta": cert.delta, "C": cert.C, "D": cert.D})

    def integrals():
        mu, _ = Me.certify_growth(leb, x, r, R)
        res = Me.check_integral_estimates(mu, np.zeros(3), 1.0)
        tol = ctx.tol("closed_form", 0.02)
        err = abs(res[1].C / 1.5 - 1)
        ok = err <= tol and (2 not in res or math.isfinite(res[2].C))
        return Outcome(ok, {f"C_power{k}": v.C for k, v in res.items()} | {"rel_error": err}, {"closed_form": tol})

    def extra_decay():
        mu, _ = Me.certify_growth(leb, x, r, R)
        rho_mu = builtin_rho("constant", rho0=math.sqrt(3 / (4 * math.pi)))
        res = Me.check_extra_decay(mu, rho_mu, x, R, N=3.0)
        return Outcome(math.isfinite(res["C"]), {"C": res["C"]})

    return [Check("lebesgue_growth", "growth conditions on the measure: Lebesgue", lebesgue),
            Check("atom_rejected", "growth conditions on the measure: atoms excluded", atom),
            Check("quadratic_density", "growth conditions on the measure: V dx with V in a reverse Holder class",
                  quadratic),
            Check("integral_estimates", "integral estimates derived from the growth conditions", integrals),
            Check("extra_decay", "extra decay of the measure beyond the critical radius", extra_decay)]


def _rho_mu(ctx: Context):
    pts = np.random.default_rng(ctx.seed).uniform(-1, 1, (ctx.samples(5), 3))

    def lebesgue(alpha):
        def run():
            mu = Me.MeasureModel.lebesgue(3, scale=alpha)
            vals = np.array([rho_from_measure(mu, p) for p in pts])
            exact = math.sqrt(3 / (4 * math.pi * alpha))
            err = _rel(vals, np.full(len(vals), exact))
            tol = ctx.tol("radius", 1e-6)
            return Outcome(err <= tol, {"rho": vals.tolist(), "exact": exact, "rel_error": err}, {"radius": tol})
        return run

    def quadratic():
        # mu(B(0,r)) = 4 pi r^5 / 5 for V = |x|^2, so rho(0) solves 4 pi r^4 / 5 = 1
        val = rho_from_measure(Me.MeasureModel.quadratic(3), np.zeros(3))
        exact = (5 / (4 * math.pi)) ** 0.25
        err = abs(val / exact - 1)
        tol = ctx.tol("radius", 1e-6)
        return Outcome(err <= tol, {"rho": val, "exact": exact, "rel_error": err}, {"radius": tol})

    return [Check("lebesgue_radius", "critical radius of a measure: Lebesgue", lebesgue(1.0)),
            Check("scaled_lebesgue_radius", "critical radius of a measure: scaled Lebesgue", lebesgue(4.0)),
            Check("quadratic_radius_origin", "critical radius of a measure: |x|^2 dx at the origin", quadratic)]


# ------------------------------------------------------------ maximal


def _maximal_setup(ctx: Context, L=16.0, n=1601):
    dom = ctx.domain(1, L, n)
    return dom, ctx.rho(), ctx.weight(dom)


def _prop35(ctx: Context):
    dom, rho, _ = _maximal_setup(ctx)
    pr = ctx.probes(count=6)
    probes = M.probe_set(dom, pr["kind"], pr["count"], seed=pr["seed"])
    c2, m2 = 1.0, 1.0
    m1 = (rho.k0 + 1) * m2
    c1 = c2 * (2 * rho.C0) ** m2

    def dominated():
        ratios = [M.compare_centered_uncentered(f, rho, c1, m1, c2, m2)["max_ratio"] for f in probes]
        tol = ctx.tol("rounding", 1e-12)
        return Outcome(max(ratios) <= 1 + tol, {"c1": c1, "m1": m1, "c2": c2, "m2": m2, "max_ratio": max(ratios)},
                       {"rounding": tol}, {"max_ratio": _pairs(range(len(ratios)), ratios)})

    def centered_below():
        tol = ctx.tol("rounding", 1e-12)
        worst = 0.0
        for f in probes:
            a = M.apply_maximal(f, rho, M.MaximalSpec("exp_centered", c2, m2)).values
            b = M.apply_maximal(f, rho, M.MaximalSpec("exp_uncentered", c2, m2)).values
            worst = max(worst, float(np.max(a - b * (1 + tol))))
        return Outcome(worst <= 0, {"max_excess": worst}, {"rounding": tol})

    def relation():
        exc = _raises(ParameterRelationViolated,
                      lambda: M.compare_centered_uncentered(probes[0], rho, 0.5 * c1, m1, c2, m2))
        return Outcome(exc is not None, {"message": str(exc) if exc else None})

    return [Check("uncentered_below_centered", "comparison of centered and uncentered exponential maximal operators",
                  dominated),
            Check("centered_below_uncentered", "centered operator is dominated by the uncentered one", centered_below),
            Check("relation_violation_rejected", "parameter relation of the maximal comparison", relation)]


def _thm36(ctx: Context):
    dom, rho, w = _maximal_setup(ctx, 24.0, 2401)
    spec = ctx.weight_class("H", p=2, c=1.0, m=1.0)
    pr = ctx.probes()

    def experiment():
        return M.maximal_boundedness_experiment(w, rho, spec.p, spec.c, spec.m, probe_kind=pr["kind"],
                                                base=pr["base"], doublings=pr["doublings"], seed=pr["seed"])

    def direction1():
        res = ctx.memo("thm36", experiment)["direction1"]
        tol = ctx.tol("probe_growth", 0.10)
        ok = max(abs(g) for g in res["growth"]) < tol
        return Outcome(ok, {"c2": res.get("c2"), "norms": res["norms"], "growth": res["growth"]},
                       {"probe_growth": tol}, {"norm": _pairs(res["sizes"], res["norms"])})

    def direction2():
        res = ctx.memo("thm36", experiment)["direction2"]
        cls = res["class_report"]
        keys = ("c2", "m2", "c1_prime", "m1_prime")
        return Outcome(bool(res["certified"]), {k: res.get(k) for k in keys} | {"class_constant": cls["constant"]})

    return [Check("maximal_bounded_on_H", "H weights give bounded exponential maximal operators", direction1),
            Check("bounded_maximal_gives_H", "bounded exponential maximal operators give H weights", direction2)]


def _rdf(ctx: Context):
    dom, rho, w = _maximal_setup(ctx)
    spec = ctx.weight_class("H", p=2, c=1.0, m=1.0)
    pr = ctx.probes(kind="dyadic_bumps", count=20)

    def properties():
        out = []
        for k in range(pr["count"]):
            h = M.probe_set(dom, pr["kind"], 1, seed=pr["seed"] + 100 + k)[0]
            res = M.rdf_iteration(h, w, rho, spec.p, spec.c, spec.m)
            out.append((res, M.rdf_properties(res, h, w, rho, spec.p, spec.c, spec.m)))
        return out

    def prop(key, anchor_name):
        def run():
            rows = ctx.memo("rdf", properties)
            flags = [p[key] for _, p in rows]
            return Outcome(all(flags), {"passed_bumps": int(sum(flags)), "bumps": len(flags),
                                        "tail_norm_bounds": [r.tail_norm_bound for r, _ in rows]})
        return Check(key, anchor_name, run)

    return [prop("dominates_h", "iteration majorizes h"),
            prop("norm_bound", "iteration is bounded by twice the norm of h plus the tail"),
            prop("sublinear_bound", "iteration is an A_1-type weight for the operator")]


# ---------------------------------------------------------- endpoint


def _endpoint(ctx: Context, kernel_factory, name: str):
    dom = ctx.domain(3, 3.0, 25)
    kappa = float(ctx.get("operator", "kappa", 1.0))
    rho = K.constant_rho_for(kappa)
    rho0 = rho.params["rho0"]
    pr = ctx.probes(base=32, doublings=2)
    model, component = kernel_factory(ctx, kappa)

    def setup():
        fit = K.certify_scz_pointwise(model, rho, seed=ctx.seed)
        table = K.kernel_table(model, dom, component)
        op = lambda f: K.apply_kernel_operator(model, f, component, table)  # noqa: E731
        return fit, op

    def weight(a):
        return GridFunction.from_callable(dom, lambda p: np.exp(-a * np.linalg.norm(p, axis=-1)))

    def in_range():
        fit, op = ctx.memo("setup", setup)
        threshold = fit.c * 2.0 ** (-fit.m)
        # w^-1 = e^{a|x|} has H_1 expression at most e^{2 a r} on B(x, r): c = 2 a rho0
        a = float(ctx.get("weight", "a", 0.45 * threshold / rho0))
        m_star = fit.m / (rho.k0 + 1)
        c_star = 0.99 * 2 * a * rho0 * (4 * rho.C0) ** (-2 * m_star)
        v = GridFunction.from_callable(dom, lambda p: np.exp(0.5 * c_star / rho0 * np.linalg.norm(p, axis=-1)))
        res = M.endpoint_bmo_experiment(op, weight(a), rho, 2 * a * rho0, fit.c, fit.m, probe_kind=pr["kind"],
                                        base=pr["base"], doublings=pr["doublings"], seed=pr["seed"],
                                        extrapolation={"p": 2.0, "weight": v, "c_star": c_star})
        return res

    def bmo():
        res = ctx.memo("run", in_range)
        tol = ctx.tol("probe_growth", 0.10)
        ok = max(res["growth"]) < tol
        return Outcome(ok, {k: res[k] for k in ("threshold", "c_weight", "class_constant", "bmo_norms", "growth")},
                       {"probe_growth": tol}, {"bmo_norm": _pairs(res["sizes"], res["bmo_norms"])})

    def extrapolated():
        ex = ctx.memo("run", in_range)["extrapolated"]
        tol = ctx.tol("probe_growth", 0.10)
        ok = max(abs(g) for g in ex["growth"]) < tol
        return Outcome(ok, {k: ex[k] for k in ("c_star", "m_star", "class_constant", "norms", "growth")},
                       {"probe_growth": tol}, {"lp_norm": _pairs(ex["sizes"], ex["norms"])})

    def out_of_range():
        fit, op = ctx.memo("setup", setup)
        threshold = fit.c * 2.0 ** (-fit.m)
        a = threshold / rho0
        exc = _raises(WeightOutOfRange, lambda: M.endpoint_bmo_experiment(op, weight(a), rho, 2 * a * rho0,
                                                                         fit.c, fit.m))
        return Outcome(exc is not None, {"c_weight": 2 * a * rho0, "threshold": threshold})

    return [Check("bmo_norm_stable", f"{name}: L^inf(w) to BMO(w) bound", bmo),
            Check("extrapolated_norm_stable", f"{name}: extrapolated L^p(w) bound", extrapolated),
            Check("weight_out_of_range", f"{name}: weight range of the endpoint bound", out_of_range)]


def _riesz_factory(ctx, kappa):
    adjoint = ctx.get("operator", "kind", "riesz") == "adjoint_riesz"
    return K.riesz_model(kappa, adjoint=adjoint), 0


def _multiplier_factory(ctx, kappa):
    phi = K.Phi.parse(ctx.get("operator", "phi", "exp_decay(0.5)"))
    return K.multiplier_model(phi, K.HeatModel("constant_v", 3, kappa)), None


def _endpoint_riesz(ctx):
    return _endpoint(ctx, _riesz_factory, "Riesz transform")


def _endpoint_multiplier(ctx):
    return _endpoint(ctx, _multiplier_factory, "Laplace-type multiplier")


# ------------------------------------------------------------ kernels


def _random_pairs(ctx, size, box=2.0, d=3):
    rng = np.random.default_rng(ctx.seed)
    return rng.uniform(-box, box, (size, d)), rng.uniform(-box, box, (size, d))


def _riesz_cert(ctx: Context):
    kappa = float(ctx.get("operator", "kappa", 1.0))
    x, y = _random_pairs(ctx, ctx.samples(200))
    rho = K.constant_rho_for(kappa)
    rho0 = rho.params["rho0"]
    heat = K.HeatModel("constant_v", 3, kappa)

    def gamma_fit():
        return K.check_fundamental_bounds(K.constant_v_solution(kappa), rho,
                                          lambda a, b: np.linalg.norm(a - b, axis=1) / rho0, x, y)

    def fundamental():
        fit = ctx.memo("gamma", gamma_fit)
        tol = ctx.tol("residual", 1e-8)
        target = 1 / (4 * math.pi)
        ok = fit.residual < tol and abs(fit.C1 / target - 1) < tol and abs(fit.C2 / target - 1) < tol
        return Outcome(ok, fit.as_dict(), {"residual": tol})

    def riesz_closed(k, key, default):
        def run():
            exact = K.riesz_closed_form(k, x, y)
            err = float(np.max(np.linalg.norm(K.riesz_kernel(k, x, y) - exact, axis=1)
                               / np.linalg.norm(exact, axis=1)))
            tol = ctx.tol(key, default)
            return Outcome(err <= tol, {"max_rel_error": err, "kappa": k}, {key: tol})
        return run

    def identity_multiplier():
        val = float(np.max(np.abs(K.multiplier_kernel(K.Phi("one"), heat, x, y))))
        tol = ctx.tol("off_diagonal", 1e-8)
        return Outcome(val <= tol, {"max_abs": val}, {"off_diagonal": tol})

    def exp_multiplier():
        a = 0.7
        val = K.multiplier_kernel(K.Phi("exp_decay", a), heat, x, y)
        err = _rel(val, -a * K.gamma_constant_V(kappa, a, x, y))
        tol = ctx.tol("resolvent", 1e-6)
        return Outcome(err <= tol, {"max_rel_error": err, "a": a}, {"resolvent": tol})

    def pointwise():
        fit = ctx.memo("gamma", gamma_fit)
        graph = A.AgmonGraph(GridDomain(3, 3.0, 17), rho)
        xs, ys = A.sample_sources_targets(graph.domain, 10, 100, seed=ctx.seed)
        D1 = A.check_global_bounds(graph, xs, ys, D0=1.1, k0=0).D1
        cert = K.certify_scz_pointwise(K.riesz_model(kappa), rho, seed=ctx.seed, m=1.0)
        reference = fit.eps1 / (2 * D1)
        factor = ctx.tol("factor", 2.0)
        ok = cert.revalidated and reference / factor <= cert.c <= reference * factor
        return Outcome(ok, cert.as_dict() | {"eps": fit.eps1, "D1": D1, "reference_c": reference}, {"factor": factor})

    def control():
        exc = _raises(ViolationWitness, lambda: K.certify_scz_pointwise(K.control_kernel(3), rho, seed=ctx.seed))
        return Outcome(exc is not None and exc.witness is not None, {"witness": getattr(exc, "witness", None)})

    return [Check("fundamental_solution_bounds", "two-sided exponential bounds of the fundamental solution",
                  fundamental),
            Check("riesz_classical", "Riesz kernel reduces to the classical one without potential",
                  riesz_closed(0.0, "closed_form", 1e-6)),
            Check("riesz_screened", "Riesz kernel through the lambda-representation", riesz_closed(kappa, "closed_form",
                                                                                                    1e-6)),
            Check("identity_multiplier", "Laplace multiplier with phi = 1 is the identity", identity_multiplier),
            Check("resolvent_multiplier", "Laplace multiplier with phi = e^(-at) is a resolvent", exp_multiplier),
            Check("riesz_pointwise_scz", "Riesz transform is an exponential SCZ operator of (inf, 1) type", pointwise),
            Check("no_decay_control", "size condition needs exponential decay", control)]


def _tj(ctx: Context):
    kappa = float(ctx.get("operator", "kappa", 1.0))
    heat = K.HeatModel("constant_v", 3, kappa)
    x, y = _random_pairs(ctx, ctx.samples(200))
    r = np.linalg.norm(x - y, axis=1)
    rho = K.constant_rho_for(kappa)

    def closed(j):
        def run():
            if j == 2:
                exact = kappa**2 * np.exp(-kappa * r) / (4 * math.pi * r)
            else:
                exact = kappa * kappa * special.k1(kappa * r) / (2 * math.pi**2 * r)
            err = _rel(K.tj_kernel(j, heat, x, y), exact)
            tol = ctx.tol("closed_form", 1e-8)
            return Outcome(err <= tol, {"max_rel_error": err}, {"closed_form": tol})
        return run

    def integral(j):
        def run():
            cert = K.certify_scz_integral(K.tj_model(j, heat), rho, seed=ctx.seed)
            return Outcome(cert.revalidated and cert.c > 0 and cert.delta > 0, cert.as_dict())
        return run

    return [Check("t2_closed_form", "kernel of V L^-1 for constant potential", closed(2)),
            Check("t1_closed_form", "kernel of V^(1/2) L^(-1/2) for constant potential", closed(1)),
            Check("t1_integral_scz", "T_1 is an exponential SCZ operator of (s, delta) type", integral(1)),
            Check("t2_integral_scz", "T_2 is an exponential SCZ operator of (s, delta) type", integral(2))]


def _heat(ctx: Context):
    def residual():
        rng = np.random.default_rng(ctx.seed)
        n = ctx.samples(100)
        t = rng.uniform(0.05, 2.0, n)
        xs, ys = rng.uniform(-2, 2, (n, 1)), rng.uniform(-2, 2, (n, 1))
        res = K.heat_pde_residual(K.HeatModel("mehler", 1), t, xs, ys)
        tol = ctx.tol("pde", 1e-4)
        return Outcome(float(np.max(res)) <= tol, {"max_residual": float(np.max(res))}, {"pde": tol},
                       {"residual": _pairs(t, res)})

    def bounds(model, rho):
        def run():
            fit = K.check_heat_derivative_bounds(model, rho, seed=ctx.seed)
            d = fit.as_dict()
            ok = (math.isfinite(fit.C) and fit.c0 > 0 and math.isfinite(fit.CN) and fit.holder_pass
                  and fit.size_pass_fresh and fit.holder_pass_fresh)
            return Outcome(ok, d)
        return run

    kappa = float(ctx.get("operator", "kappa", 1.0))
    return [Check("mehler_pde_residual", "Mehler kernel solves the heat equation", residual),
            Check("constant_v_time_derivative", "time-derivative bounds of the heat kernel",
                  bounds(K.HeatModel("constant_v", 3, kappa), K.constant_rho_for(kappa))),
            Check("mehler_time_derivative", "time-derivative bounds of the heat kernel",
                  bounds(K.HeatModel("mehler", 1), builtin_rho("harmonic_oscillator")))]


_SCENARIOS = [
    Scenario("prop31_counterexample", "e^|x| is in H_2 but in no A^{rho,theta}_p; growth along l", _prop31),
    Scenario("def21_validation", "fit (C0, k0) for admissible radii and reject e^|x|", _def21),
    Scenario("agmon_lemmas", "Agmon distance oracles, local equivalence and global bounds", _agmon),
    Scenario("covering_overlap", "critical-ball covering and its overlap growth in sigma", _covering),
    Scenario("measures_growth", "growth constants of model measures and derived integral estimates", _measures),
    Scenario("rho_mu_construction", "critical radius of a measure against closed forms", _rho_mu),
    Scenario("weight_class_suite", "class inclusions, structure lemmas and trivial weights", _weight_suite),
    Scenario("reverse_holder_suite", "reverse Holder exponent and openness of H classes", _reverse_holder),
    Scenario("prop35_maximal_comparison", "centered versus uncentered exponential maximal operators", _prop35),
    Scenario("thm36_maximal_characterization", "H classes versus L^p(w) bounds of maximal operators", _thm36),
    Scenario("rdf_iteration_properties", "the three properties of the Rubio de Francia iteration", _rdf),
    Scenario("endpoint_bmo_riesz", "L^inf(w) to BMO(w) and extrapolated bounds for the Riesz transform",
             _endpoint_riesz),
    Scenario("endpoint_bmo_multiplier", "L^inf(w) to BMO(w) and extrapolated bounds for a Laplace multiplier",
             _endpoint_multiplier),
    Scenario("tj_certification", "closed forms and integral SCZ certification of T_1 and T_2", _tj),
    Scenario("heat_derivative_bounds", "heat equation residual and time-derivative bounds", _heat),
    Scenario("riesz_constV_certification", "kernel exactness and pointwise SCZ certification for constant V",
             _riesz_cert),
]

REGISTRY = {s.name: s for s in _SCENARIOS}


def list_scenarios() -> list[tuple[str, str]]:
    return [(s.name, s.description) for s in _SCENARIOS]
