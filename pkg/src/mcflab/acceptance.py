"""Desk-scale acceptance suite.

Each criterion is a function ``(ctx) -> CriterionResult``. ``ctx`` carries
the RNG seed and a cache shared by criteria that reuse one simulation.
Wall-clock limits are checked but runtimes are kept out of the result rows,
which must be byte-identical across runs.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import decomposition, harnack, sheets, shrinker, stability
from .flow import FlowConfig, estimate_extinction, run_flow
from .kernel import (CachedField, HeatKernelModel, LogProfile, MeasureSamples,
                     SingularCurve, annulus_integrals, domination_check,
                     measure_recovery, parametrix_eval, singular_potential_U,
                     spectral_kernel)
from .kernel.cutoffs import smooth_step
from .mesh import primitives as P
from .report import CriterionResult


def _g(x):
    return "%.6g" % x


@dataclass
class Context:
    seed: int = 0
    cache: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def rng(self, salt):
        return np.random.default_rng([self.seed, salt])


# ----------------------------------------------------------------------
# flow and shrinker criteria
# ----------------------------------------------------------------------
def _sphere_run(ctx):
    if "sphere_run" not in ctx.cache:
        cfg = FlowConfig(mode="mcf", dt=5e-4, dt_policy="curvature", cfl=0.05, max_time=1.0,
                         max_curvature=15.0, intersect_every=0, trace_every=8)
        t0 = time.perf_counter()
        tr = run_flow(P.icosphere(5), cfg)
        wall = time.perf_counter() - t0
        T, _, _ = estimate_extinction(tr)
        ctx.cache["sphere_run"] = (tr, T, wall)
    return ctx.cache["sphere_run"]


def c01_sphere_law(ctx):
    tr, T, wall = _sphere_run(ctx)
    t = tr.column("t")
    sel = t <= 0.9 * T
    r2 = tr.column("area")[sel] / (4 * np.pi)
    law = float(np.abs(r2 + 4 * t[sel] - 1).max())
    t_err = abs(T / 0.25 - 1)
    ctx.timings[1] = wall
    ok = law <= 0.01 and t_err <= 0.01 and wall <= 60
    return CriterionResult(1, "sphere MCF law", "R^2+4t=1; T=0.25; <=60 s",
                           "law %s; T %s" % (_g(law), _g(T)), "1%; 1%", ok,
                           {"law_error": law, "T_hat": T, "T_rel_error": t_err,
                            "runtime_ok": wall <= 60})


def c02_type_one(ctx):
    tr, T, _ = _sphere_run(ctx)
    t = tr.column("t")
    sel = t <= 0.9 * T
    dev = float(np.abs(np.sqrt(T - t[sel]) * tr.column("maxH")[sel] - 1).max())
    return CriterionResult(2, "type-I ratio", "sqrt(T-t) max|H| = 1", _g(dev), "5%",
                           dev <= 0.05, {"max_deviation": dev})


def c03_rmcf_fixed_point(ctx):
    m = P.icosphere(5, 2.0)
    _, tol = shrinker.shrinker_residual(m)
    cfg = FlowConfig(mode="rmcf", dt=0.01, max_time=1.0, intersect_every=0)
    tr = run_flow(m, cfg)
    F = tr.column("F")
    fvar = float((F.max() - F.min()) / F[0])
    disp = float(np.abs(tr.final_mesh.vertices - m.vertices).max()) / 1.0
    ok = fvar <= 1e-4 and disp <= 3 * tol
    return CriterionResult(3, "RMCF fixed point", "disp/time <= 3 tol; F const",
                           "disp %s (tol %s); F var %s" % (_g(disp), _g(tol), _g(fvar)),
                           "3x; 1e-4", ok,
                           {"displacement_rate": disp, "curvature_tol": tol, "f_variation": fvar})


def c04_monotonicity(ctx):
    rec = []

    def cb(step, t, mesh, info):
        rec.append((t, shrinker.f_functional(mesh), shrinker.gaussian_dissipation(mesh),
                    shrinker.shrinker_residual(mesh)[0]))

    m = P.perturbed_sphere(4, 2.0, 0.1)
    rec.append((0.0, shrinker.f_functional(m), shrinker.gaussian_dissipation(m),
                shrinker.shrinker_residual(m)[0]))
    cfg = FlowConfig(mode="rmcf", dt=1e-3, max_time=0.5, intersect_every=0, trace_every=1000)
    run_flow(m, cfg, callback=cb)
    r = np.array(rec)
    inc = float((np.diff(r[:, 1]) / r[:-1, 1]).max())
    dF = np.diff(r[:, 1]) / np.diff(r[:, 0])
    D = 0.5 * (r[1:, 2] + r[:-1, 2])
    big = 0.5 * (r[1:, 3] + r[:-1, 3]) > 0.05
    rel = float(np.abs(-dF[big] / D[big] - 1).max()) if np.any(big) else 0.0
    ok = inc <= 0 and rel <= 0.05 and np.any(big)
    return CriterionResult(4, "Huisken monotonicity", "F nonincreasing; dF/dt = -dissipation",
                           "max increase %s; rel %s" % (_g(inc), _g(rel)), "0; 5%", ok,
                           {"max_relative_increase": inc, "dissipation_rel_error": rel,
                            "steps_checked": int(big.sum())})


def c05_f_entropy(ctx):
    fp = shrinker.f_functional(P.plane_grid(8, 161))
    fs = shrinker.f_functional(P.icosphere(5, 2.0))
    shift = np.array([0.3, -0.2, 0.1])
    sh = P.icosphere(3, 1.0)
    sh = sh.with_vertices(sh.vertices + shift)
    _, (x, _) = shrinker.entropy_estimate(sh, return_argmax=True)
    # finest cell of the default search: bounding box / 4, halved three times
    cell = 2.0 / 4 / 8
    e_plane, e_sph = abs(fp - 1), abs(fs / (4 / np.e) - 1)
    e_arg = float(np.abs(x - shift).max())
    ok = e_plane <= 5e-3 and e_sph <= 5e-3 and e_arg <= cell
    return CriterionResult(5, "F and entropy oracles", "F(plane)=1; F(S_2)=4/e; argmax=shift",
                           "%s; %s; %s" % (_g(e_plane), _g(e_sph), _g(e_arg)),
                           "0.5%; 0.5%; one cell", ok,
                           {"plane_error": e_plane, "sphere_error": e_sph,
                            "argmax_error": e_arg, "cell": cell})


def c06_gaussian_density(ctx):
    cfg = FlowConfig(mode="mcf", dt=5e-4, dt_policy="curvature", cfl=0.05, max_time=1.0,
                     max_curvature=15.0, intersect_every=0, trace_every=8, checkpoint_every=8)
    tr = run_flow(P.icosphere(4, 1.0), cfg)
    T, _, _ = estimate_extinction(tr)
    cps = [c for c in tr.checkpoints if c[0] <= 0.75 * T]
    _, lim, mono = shrinker.gaussian_density(cps, [0, 0, 0], T)
    err = abs(lim / (4 / np.e) - 1)
    return CriterionResult(6, "Gaussian density", "4/e", _g(lim), "2%", err <= 0.02,
                           {"limit": lim, "rel_error": err, "monotone": mono,
                            "checkpoints": len(cps)})


def c07_instability(ctx):
    s = P.icosphere(4, 2.0)
    q, _ = stability.quadratic_form(s, np.ones(s.n_vertices))
    err = abs(q / (-16 * np.pi / np.e) - 1)
    cyl, _ = P.capped_cylinder(length=12)
    wq = {}
    for name, mesh, R in (("sphere", s, 10.0), ("capped_cylinder", cyl, 8.0),
                          ("plane", P.plane_grid(8, 161), 8.0)):
        try:
            wq[name] = stability.instability_witness(mesh, R).q
        except stability.NoWitnessError:
            wq[name] = float("nan")
    found = all(v < 0 for v in wq.values())
    return CriterionResult(7, "L-instability", "Q(1) = -16 pi/e; witnesses Q < 0",
                           "%s; %s" % (_g(err), ",".join(_g(v) for v in wq.values())),
                           "1%; Q < 0", err <= 0.01 and found,
                           {"q1": q, "q1_rel_error": err, "witness_q": wq})


def c08_cutoff_capacity(ctx):
    t0 = time.perf_counter()
    e_hi = stability.radial_cutoff_energy(1e-3, 0.1)
    e_lo = stability.radial_cutoff_energy(1e-9, 0.1)
    drop = e_hi / e_lo
    diag = [stability.radial_cutoff_energy(r ** 3, r) for r in (1e-1, 1e-2, 1e-3)]
    limit = stability.radial_cutoff_energy(0.0, 1e-20)
    wall = time.perf_counter() - t0
    ctx.timings[8] = wall
    ok = drop >= 3 and diag[-1] < 0.05 and wall <= 10
    return CriterionResult(8, "cutoff capacity", "drop >= 3x; E(rho^3, rho) < 0.05",
                           "%s; %s" % (_g(drop), _g(diag[-1])), "3x; 0.05", ok,
                           {"energy_delta_1e-3": e_hi, "energy_delta_1e-9": e_lo,
                            "diagonal": diag, "delta0_limit_rho_1e-20": limit})


# ----------------------------------------------------------------------
# sheets
# ----------------------------------------------------------------------
def c09_multiplicity(ctx):
    radii = [0.4, 0.2, 0.1]
    ms, thetas = [], []
    for n in (45, 89):
        dp = P.merge(P.plane_grid(1.2, n, -0.001), P.plane_grid(1.2, n, 0.001))
        res = sheets.multiplicity_at(dp, [0, 0, 0], radii)
        ms.append(res.m)
        thetas.append(res.thetas)
    single = sheets.multiplicity_at(P.plane_grid(1.2, 45), [0, 0, 0], radii).m
    fine = np.sort(thetas[-1][np.argsort(radii)][:2])
    dev = float(np.abs(fine - 2).max())
    ok = ms == [2, 2] and single == 1 and dev <= 0.05
    return CriterionResult(9, "multiplicity", "m=2 double; m=1 single; stable",
                           "m %s; single %d; dev %s" % (ms, single, _g(dev)), "0.05", ok,
                           {"m": ms, "single": single, "thetas": [t.tolist() for t in thetas]})


def c10_linearized(ctx):
    ref = P.plane_grid(1, 41)
    x = ref.vertices
    phi = np.cos(np.pi * x[:, 0] / 2) * np.cos(np.pi * x[:, 1] / 2)
    dt = 1e-6
    ratios = []
    for eps in (1e-2, 1e-3):
        up = sheets.graph_flow_trace(ref, eps * phi, dt, 2)
        um = sheets.graph_flow_trace(ref, -eps * phi, dt, 2)
        ratios.append(sheets.linearized_residual(ref, up, um, dt).ratio)
    h = ref.mean_edge_length()
    floor = h * h + dt * dt
    drop = ratios[0] / ratios[1]
    ok_drop = drop >= 5 or ratios[1] <= floor
    tk = 0.01 * np.arange(5)
    eps = 1e-3
    frames = eps * np.exp(tk / 2)[:, None] * np.ones(ref.n_vertices)[None, :]
    exact = sheets.linearized_residual(ref, frames, -frames, 0.01).ratio
    ok = ok_drop and exact <= 1e-3
    return CriterionResult(10, "linearized equation", "drop >= 5x; exact ratio <= 1e-3",
                           "%s; %s" % (_g(drop), _g(exact)), "5x; 1e-3", ok,
                           {"ratios": ratios, "floor": floor, "exact_ratio": exact})


def c11_graph_geometry(ctx):
    s = P.icosphere(4, 2.0)
    z = np.zeros(s.n_vertices)
    errs = []
    for sv in (0.1, 0.2):
        H = sheets.mean_curvature_of_graph(s, z + sv)
        errs.append(float(np.abs(H / (2 / (2 + sv)) - 1).max()))
    H_ref = s.geometry().H
    tol = float(np.abs(H_ref - 1).max())
    e0 = float(np.abs(sheets.mean_curvature_of_graph(s, z) - H_ref).max())
    ok = max(errs) <= 0.03 and e0 <= 2 * tol
    return CriterionResult(11, "graph geometry", "H_u = 2/(2+s); u=0 gives H",
                           "%s; %s (tol %s)" % (_g(max(errs)), _g(e0), _g(tol)), "3%; 2x", ok,
                           {"offset_errors": errs, "zero_error": e0, "mesh_tol": tol})


# ----------------------------------------------------------------------
# singular kernel
# ----------------------------------------------------------------------
def c12_parametrix(ctx):
    t0 = time.perf_counter()
    m = HeatKernelModel("sphere")
    d = np.linspace(0, 0.5, 101)
    x = np.array([0, 0, 1.0])
    y = np.stack([np.sin(d), 0 * d, np.cos(d)], 1)
    errs = []
    for t in (0.04, 0.02, 0.01, 0.005):
        p = spectral_kernel(m, x, y, t)
        q, u0, _ = parametrix_eval(m, x, y, t, 1)
        errs.append(float(np.abs(p - q).max()))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    dd = d[1:]
    u0_err = float(np.abs(parametrix_eval(m, x, y[1:], 0.01, 1)[1] - np.sqrt(dd / np.sin(dd))).max())
    wall = time.perf_counter() - t0
    ctx.timings[12] = wall
    ok = bool(np.all((ratios >= 0.35) & (ratios <= 0.7))) and u0_err <= 1e-10 and wall <= 30
    return CriterionResult(12, "heat kernel parametrix", "ratio in [0.35, 0.7]; u0 exact",
                           "%s; %s" % (",".join(_g(r) for r in ratios), _g(u0_err)),
                           "[0.35, 0.7]; 1e-10", ok,
                           {"errors": errs, "ratios": ratios, "u0_error": u0_err})


def c13_log_profile(ctx):
    m = HeatKernelModel("plane")
    c = SingularCurve.static([0, 0.0], -5, 5)
    nu = MeasureSamples.lebesgue(-5, 5)
    r = 1e-3
    U = singular_potential_U(m, c, nu, [r, 0], 1.0, 0.0)
    ratio = float(U * 2 * np.pi / np.log(1 / r))
    small = [float(singular_potential_U(m, c, nu, [rr, 0], 1.0, 0.0) * 2 * np.pi / np.log(1 / rr))
             for rr in (1e-6, 1e-12)]
    return CriterionResult(13, "log profile", "U 2pi/log(1/r) = 1 at r = 1e-3", _g(ratio), "3%",
                           abs(ratio - 1) <= 0.03, {"ratio": ratio, "ratios_1e-6_1e-12": small})


def _bump(c, h):
    return lambda t: float(smooth_step((t - c + h) / (h / 2)) * smooth_step((c + h - t) / (h / 2)))


def c14_measure_recovery(ctx):
    m = HeatKernelModel("plane")
    rhos = [1e-4, 1e-8, 1e-16]
    static = SingularCurve.static([0, 0.0], -5, 5)
    a, b = 0.5, 1.5
    nu = MeasureSamples.lebesgue(a, b)

    def U(x, t):
        return singular_potential_U(m, static, nu, x, t, a) if t > a else np.zeros(len(x))

    def psi(t):
        return float(smooth_step((t - 0.3) / 0.1) * smooth_step((1.9 - t) / 0.1))

    mass = measure_recovery(m, [static], U, rhos, psi, (0.3, 1.9),
                            time_breaks=[a, b, 0.4, 1.8], n_angle=4).value
    smooth = measure_recovery(m, [static], lambda x, t: 1 + np.sum(x * x, 1), rhos, psi,
                              (0.3, 1.9), time_breaks=[0.4, 1.8], n_angle=4).value
    # two curves merging at t = 1
    ts = np.array([0, 1, 2.0])
    c1 = SingularCurve(ts, [[0.25, 0], [0, 0], [0.25, 0]])
    c2 = SingularCurve(ts, [[-0.25, 0], [0, 0], [-0.25, 0]])

    def U2(x, t):
        if t <= a:
            return np.zeros(len(x))
        return singular_potential_U(m, c1, nu, x, t, a) + singular_potential_U(m, c2, nu, x, t, a)

    U2 = CachedField(U2)
    psis = [_bump(0.8, 0.2), _bump(1.0, 0.2), _bump(1.2, 0.2), _bump(1.0, 0.45)]
    tb = [0.5, 1.0, 1.5, 0.6, 0.7, 0.9, 1.1, 1.3, 1.4, 0.55, 1.45, 0.8, 1.2]
    kw = dict(time_breaks=tb, n_angle=12, n_time=8)
    mu = [r.value for r in measure_recovery(m, [c1, c2], U2, rhos, psis, (a, b), **kw)]
    mu_k = [[r.value for r in measure_recovery(m, [c1, c2], U2, rhos, psis, (a, b),
                                               profiles=[LogProfile(m, c)], **kw)]
            for c in (c1, c2)]
    dom = domination_check(mu, mu_k, 0.75)
    psi_mass = [quad(p, a, b, points=[1.0])[0] for p in psis]
    e_mass = abs(mass / (b - a) - 1)
    ok = e_mass <= 0.05 and abs(smooth) <= 1e-6 and dom.ok
    return CriterionResult(14, "measure recovery", "mass b-a; smooth 0; gamma^4 mu_k <= mu",
                           "%s; %s; %s" % (_g(e_mass), _g(smooth), _g(min(np.ravel(dom.margins)))),
                           "5%; 1e-6; margin >= 0", ok,
                           {"mass": mass, "smooth": smooth, "mu": mu, "mu_k": mu_k,
                            "psi_mass": psi_mass, "margins": dom.margins})


def c15_annulus(ctx):
    m = HeatKernelModel("plane")
    c = SingularCurve.static([0, 0.0], -5, 5)

    def Phi(x, t):
        return np.log(1 / np.linalg.norm(x, axis=1)) / (2 * np.pi)

    deltas = (1e-2, 1e-4, 1e-8)
    J = [annulus_integrals(m, c, Phi, d, 0.5, 0, 1) for d in deltas]
    J1 = [j[0] for j in J]
    J2 = [j[1] for j in J]
    ratio = J1[1] / J1[0]
    bounded = max(abs(v) for v in J2) <= 10 * abs(J2[0]) + 1e-12
    ok = ratio <= 0.25 and bounded
    return CriterionResult(15, "annulus integrals", "J1(1e-4) <= J1(1e-2)/4; J2 bounded",
                           "%s; J2 %s" % (_g(ratio), ",".join(_g(v) for v in J2)),
                           "0.25; bounded", ok, {"J1": J1, "J2": J2, "deltas": deltas})


# ----------------------------------------------------------------------
# harnack and selection
# ----------------------------------------------------------------------
def c16_harnack(ctx, n_torus=40, n_sphere=20):
    seed = ctx.seed
    viol, worst, count = 0, -np.inf, 0
    cases = list(harnack.random_cases(seed, n_torus)) + list(harnack.random_sphere_cases(seed, n_sphere))
    for sol, mask, t1, t2 in cases:
        for alpha in (1.5, 2.0):
            for nodes in (1, 3):
                rep = harnack.harnack_scan(sol, mask, t1, t2, alpha=alpha, chain_nodes=nodes)
                count += 1
                viol += not rep.passed
                worst = max(worst, np.log(rep.quotient / rep.bound))
    ch = harnack.ks_chain([1.0, 0.0], [0.0, 0.0], 1, 2, 0.5, l=1)
    checks = ch.check(1, 1, 0.5)
    ok = viol == 0 and len(cases) >= 50 and ch.N == 9 and all(checks.values())
    return CriterionResult(16, "Harnack", "0 violations; N = 9",
                           "%d/%d violations; N %d" % (viol, count, ch.N), "exact", ok,
                           {"cases": len(cases), "scans": count, "violations": viol,
                            "worst_log_margin": float(worst), "C": harnack.LIYAU_C,
                            "ks_checks": checks})


def c17_doubling(ctx):
    rng = ctx.rng(17)
    t = np.linspace(0, 40, 4001)
    bad = 0
    total = 0
    for _ in range(20):
        f = np.exp(-rng.uniform(0.05, 0.3) * t) * (1 + 0.2 * np.sin(rng.uniform(1, 5) * t))
        spikes = rng.choice(len(t), size=25, replace=False)
        f[spikes] *= rng.uniform(2.5, 10.0, size=25)
        sel = decomposition.select_times(f, 0.0, 1.0, 6, times=t)
        total += len(sel.times)
        bad += not decomposition.window_property_holds(t, f, sel.times, 1.0)
    ok = bad == 0 and total > 0
    return CriterionResult(17, "doubling selector", "window property on every t_i",
                           "%d failures over %d times" % (bad, total), "exact", ok,
                           {"failures": bad, "selected": total})


CRITERIA = {
    1: c01_sphere_law, 2: c02_type_one, 3: c03_rmcf_fixed_point, 4: c04_monotonicity,
    5: c05_f_entropy, 6: c06_gaussian_density, 7: c07_instability, 8: c08_cutoff_capacity,
    9: c09_multiplicity, 10: c10_linearized, 11: c11_graph_geometry, 12: c12_parametrix,
    13: c13_log_profile, 14: c14_measure_recovery, 15: c15_annulus, 16: c16_harnack,
    17: c17_doubling,
}

# criteria cheap enough to repeat inside the determinism check
REPEATABLE = (5, 8, 9, 11, 12, 13, 15, 16, 17)


def c18_determinism(ctx, first_rows=None):
    """Recompute the cheap criteria in a fresh context and compare rows.

    ``first_rows`` maps criterion id to the row text from the main pass.
    """
    ids = [i for i in REPEATABLE if first_rows is None or i in first_rows]
    if first_rows is None:
        first_rows = {i: repr(CRITERIA[i](Context(ctx.seed)).to_dict()) for i in ids}
    again = {i: repr(CRITERIA[i](Context(ctx.seed)).to_dict()) for i in ids}
    diff = [i for i in ids if again[i] != first_rows[i]]
    return CriterionResult(18, "determinism", "identical rows on rerun",
                           "%d of %d differ" % (len(diff), len(ids)), "exact",
                           not diff and bool(ids), {"compared": ids, "differing": diff})


def run_suite(seed=0, only=None, log=None):
    """Run the criteria in ``only`` (default all) and return the results."""
    ctx = Context(seed)
    ids = sorted(only) if only else list(range(1, 19))
    results = []
    for cid in ids:
        t0 = time.perf_counter()
        if cid == 18:
            rows = {r.cid: repr(r.to_dict()) for r in results if r.cid in REPEATABLE}
            res = c18_determinism(ctx, rows or None)
        else:
            res = CRITERIA[cid](ctx)
        ctx.timings.setdefault(cid, time.perf_counter() - t0)
        results.append(res)
        if log is not None:
            log("%s criterion %d (%s): %s" % ("PASS" if res.passed else "FAIL",
                                              cid, res.name, res.measured))
    return results, ctx.timings
