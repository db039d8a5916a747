"""Command-line entry point ``mcflab``.

Configuration is layered: a ``key = value`` config file, then environment
variables ``MCFLAB_<KEY>`` (key upper-cased, ``.`` written as ``__``), then
command-line flags. Every command writes ``manifest.json`` into ``--out``.
"""

import argparse
import hashlib
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .flow import FlowConfig, estimate_extinction, parse_config_text, run_flow, tangent_rescale
from .mesh import load_mesh, primitives, write_obj
from .report import SCHEMA_VERSION, emit_report, ensure_dir, format_table, write_json

ENV_PREFIX = "MCFLAB_"
GENERAL_KEYS = ("seed", "out")
logger = logging.getLogger("mcflab")


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__("%s: %s" % (stage, exc))
        self.stage = stage


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------
def env_overrides(environ=None):
    """Config keys read from ``MCFLAB_*`` variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower().replace("__", ".")
        out[key] = parse_config_text("v = %s" % raw)["v"]
    return out


def resolve_config(path=None, flags=None, environ=None):
    """Merge config file, environment and flags, in increasing priority."""
    cfg = {"seed": 0, "out": "out"}
    if path:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    cfg.update(env_overrides(environ))
    cfg.update({k: v for k, v in (flags or {}).items() if v is not None})
    return cfg


def flow_config(cfg):
    return FlowConfig.from_mapping({k: v for k, v in cfg.items() if k not in GENERAL_KEYS})


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


_PRIMITIVES = {
    "sphere": lambda sub=4, radius=1.0: primitives.icosphere(int(sub), radius),
    "plane": lambda hw=1.0, n=41: primitives.plane_grid(hw, int(n)),
    "perturbed": lambda sub=4, radius=2.0, amp=0.1: primitives.perturbed_sphere(int(sub), radius, amp),
    "cylinder": lambda length=8.0: primitives.capped_cylinder(length=length)[0],
    "torus": lambda major=2.0, minor=0.75: primitives.torus(major, minor),
}


def make_primitive(spec):
    """``name[:arg[:arg]]``, e.g. ``sphere:5:2.0`` or ``plane:8:161``."""
    name, *args = spec.split(":")
    if name not in _PRIMITIVES:
        raise ValueError("unknown primitive %r (choose from %s)" % (name, ", ".join(_PRIMITIVES)))
    return _PRIMITIVES[name](*[float(a) for a in args])


def get_mesh(path, primitive, inputs, allow_multi=False):
    if path:
        inputs[path] = sha256(path)
        return load_mesh(path, allow_multi=allow_multi)
    if primitive:
        return make_primitive(primitive)
    raise ValueError("give --mesh or --primitive")


def _vector(text):
    return np.array([float(v) for v in text.split(",")])


# ----------------------------------------------------------------------
# commands; each returns (outputs, tallies)
# ----------------------------------------------------------------------
def cmd_evolve(args, cfg, out, inputs):
    mesh = get_mesh(args.mesh, args.primitive, inputs)
    fc = flow_config(cfg)
    ckdir = None
    if fc.checkpoint_every:
        ckdir = ensure_dir(os.path.join(out, "checkpoints"))
    tr = run_flow(mesh, fc, checkpoint_dir=ckdir)
    outputs = [os.path.join(out, "trace.csv"), os.path.join(out, "final.obj")]
    tr.to_csv(outputs[0])
    write_obj(tr.final_mesh, outputs[1])
    if ckdir:
        outputs += sorted(os.path.join(ckdir, f) for f in os.listdir(ckdir))
    print("stopped: %s after %d samples, t = %.6g" % (tr.reason, len(tr), tr.column("t")[-1]))
    return outputs, {}


def cmd_rescale(args, cfg, out, inputs):
    from .flow import FlowTrace
    inputs[args.trace] = sha256(args.trace)
    T, lam, res = estimate_extinction(FlowTrace.from_csv(args.trace))
    outputs = [write_json({"T_hat": T, "Lambda_hat": lam, "fit_residual": res},
                          os.path.join(out, "extinction.json"))]
    if args.mesh:
        mesh = get_mesh(args.mesh, None, inputs)
        c = args.scale if args.scale else 1.0 / np.sqrt(max(T - args.time, 1e-300))
        resc, s = tangent_rescale(mesh, _vector(args.x0), T, args.time, c)
        outputs.append(os.path.join(out, "rescaled.obj"))
        write_obj(resc, outputs[-1])
        outputs.append(write_json({"scale": c, "rescaled_time": s}, os.path.join(out, "rescale.json")))
    print("T_hat = %.8g, Lambda_hat = %.6g" % (T, lam))
    return outputs, {}


def cmd_analyze(args, cfg, out, inputs):
    from . import shrinker
    mesh = get_mesh(args.mesh, args.primitive, inputs)
    l2, sup = shrinker.shrinker_residual(mesh)
    lam, (x, t) = shrinker.entropy_estimate(mesh, return_argmax=True)
    rep = shrinker.ShrinkerReport(f=shrinker.f_functional(mesh), entropy=lam,
                                  entropy_argmax=(*x.tolist(), t), res_l2=l2, res_sup=sup)
    try:
        rep.cls = shrinker.classify_flat(mesh)
    except shrinker.NotAShrinkerError:
        rep.cls = "not-a-shrinker"
    path = write_json(rep.to_dict(), os.path.join(out, "report.json"))
    print("F = %.8g, entropy = %.8g, class = %s" % (rep.f, rep.entropy, rep.cls))
    return [path], {}


def cmd_decompose(args, cfg, out, inputs):
    from .decomposition import decompose
    mesh = get_mesh(args.mesh, args.primitive, inputs, allow_multi=True)
    d = decompose(mesh, args.eps, args.R, args.res)
    outputs = [os.path.join(out, "labels.rle"), os.path.join(out, "decomposition.json")]
    d.write(*outputs)
    print(d.summary())
    return outputs, {}


def cmd_sheets(args, cfg, out, inputs):
    from . import sheets
    target = get_mesh(args.target, None, inputs, allow_multi=True)
    ref = get_mesh(args.reference, args.primitive, inputs)
    b = sheets.decompose_sheets(target, ref, args.eps, args.R)
    path = os.path.join(out, "sheets.json")
    b.to_json(path)
    print("sheet count m = %d on %d vertices" % (b.m, int(b.mask.sum())))
    return [path], {}


def cmd_stability(args, cfg, out, inputs):
    from .stability import NoWitnessError, instability_witness
    mesh = get_mesh(args.mesh, args.primitive, inputs)
    try:
        rep = instability_witness(mesh, args.R)
    except NoWitnessError as exc:
        path = write_json({"witness": False, "message": str(exc)}, os.path.join(out, "stability.json"))
        print(exc)
        return [path], {"passed": 0, "failed": 1}
    outputs = [write_json({"witness": True, **rep.to_dict()}, os.path.join(out, "stability.json")),
               os.path.join(out, "witness_field.csv")]
    rep.field_to_csv(outputs[1])
    print("Q = %.8g via %s" % (rep.q, rep.method))
    return outputs, {}


def cmd_kernel(args, cfg, out, inputs):
    from .kernel import (HeatKernelModel, MeasureSamples, SingularCurve,
                         parametrix_eval, singular_potential_U, spectral_kernel)
    if args.check == "log-profile":
        m = HeatKernelModel("plane")
        c = SingularCurve.static([0.0, 0.0], -5, 5)
        U = float(singular_potential_U(m, c, MeasureSamples.lebesgue(-5, 5), [args.r, 0.0], 1.0, 0.0))
        phi = np.log(1 / args.r) / (2 * np.pi)
        body = {"check": "log-profile", "r": args.r, "U": U, "Phi": phi, "ratio": U / phi}
        print("U / Phi = %.8g at r = %g" % (U / phi, args.r))
    else:
        m = HeatKernelModel("sphere")
        x = np.array([0.0, 0.0, 1.0])
        y = np.array([np.sin(args.r), 0.0, np.cos(args.r)])
        p = float(spectral_kernel(m, x, y, args.t))
        q = float(parametrix_eval(m, x, y, args.t, 1)[0])
        body = {"check": "parametrix", "d": args.r, "t": args.t, "spectral": p,
                "parametrix": q, "error": abs(p - q)}
        print("spectral %.10g, parametrix %.10g" % (p, q))
    return [write_json(body, os.path.join(out, "kernel.json"))], {}


def cmd_harnack(args, cfg, out, inputs):
    from . import harnack
    seed = int(cfg["seed"])
    rows = []
    for kind, gen in (("torus", harnack.random_cases(seed, args.cases)),
                      ("sphere", harnack.random_sphere_cases(seed, args.cases))):
        for i, (sol, mask, t1, t2) in enumerate(gen):
            rep = harnack.harnack_scan(sol, mask, t1, t2, alpha=args.alpha, chain_nodes=args.nodes)
            rows.append((kind, i, t1, t2, rep.quotient, rep.bound, rep.passed))
    path = os.path.join(out, "harnack.csv")
    with open(path, "w") as fh:
        fh.write("kind,case,t1,t2,quotient,bound,pass\n")
        for r in rows:
            fh.write("%s,%d,%r,%r,%r,%r,%d\n" % (r[0], r[1], r[2], r[3], r[4], r[5], r[6]))
    ok = sum(r[-1] for r in rows)
    print("%d of %d cases within the bound (C = %g)" % (ok, len(rows), harnack.LIYAU_C))
    return [path], {"passed": ok, "failed": len(rows) - ok}


def cmd_verify_all(args, cfg, out, inputs):
    from .acceptance import run_suite
    only = [int(v) for v in args.only.split(",")] if args.only else None
    results, timings = run_suite(int(cfg["seed"]), only, log=print)
    outputs = [emit_report(results, "csv", os.path.join(out, "acceptance.csv")),
               emit_report(results, "json", os.path.join(out, "acceptance.json"))]
    print(format_table(results))
    passed = sum(r.passed for r in results)
    cmd_verify_all.timings = timings
    return outputs, {"passed": passed, "failed": len(results) - passed}


COMMANDS = {
    "evolve": cmd_evolve, "rescale": cmd_rescale, "analyze": cmd_analyze,
    "decompose": cmd_decompose, "sheets": cmd_sheets, "stability": cmd_stability,
    "kernel": cmd_kernel, "harnack": cmd_harnack, "verify-all": cmd_verify_all,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mcflab", description="Mean curvature flow laboratory.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="RNG seed (default: 0)")
    common.add_argument("-v", "--verbose", action="store_true")
    mesh = argparse.ArgumentParser(add_help=False)
    mesh.add_argument("--mesh", help="OBJ or PLY file")
    mesh.add_argument("--primitive", help="built-in mesh, e.g. sphere:5:1.0")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("evolve", parents=[common, mesh], help="run MCF or RMCF")
    s.add_argument("--mode", choices=["mcf", "rmcf"])
    s.add_argument("--dt", type=float)
    s.add_argument("--max-time", type=float, dest="stop.time")
    s.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")

    s = sub.add_parser("rescale", parents=[common], help="extinction time and tangent rescaling")
    s.add_argument("--trace", required=True)
    s.add_argument("--mesh")
    s.add_argument("--time", type=float, default=0.0)
    s.add_argument("--x0", default="0,0,0")
    s.add_argument("--scale", type=float)

    sub.add_parser("analyze", parents=[common, mesh], help="shrinker report")

    s = sub.add_parser("decompose", parents=[common, mesh], help="thick/thin voxel labels")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--R", type=float, required=True)
    s.add_argument("--res", type=int, default=64)

    s = sub.add_parser("sheets", parents=[common], help="sheet heights over a reference")
    s.add_argument("--target", required=True)
    s.add_argument("--reference")
    s.add_argument("--primitive")
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--R", type=float, default=1.0)

    s = sub.add_parser("stability", parents=[common, mesh], help="instability witness")
    s.add_argument("--R", type=float, required=True)

    s = sub.add_parser("kernel", parents=[common], help="heat kernel checks")
    s.add_argument("--check", choices=["log-profile", "parametrix"], required=True)
    s.add_argument("--r", type=float, default=1e-3)
    s.add_argument("--t", type=float, default=0.01)

    s = sub.add_parser("harnack", parents=[common], help="randomized Li-Yau checks")
    s.add_argument("--cases", type=int, default=20)
    s.add_argument("--alpha", type=float, default=2.0)
    s.add_argument("--nodes", type=int, default=1)

    s = sub.add_parser("verify-all", parents=[common], help="acceptance suite")
    s.add_argument("--suite", choices=["desk"], default="desk")
    s.add_argument("--only", help="comma-separated criterion ids")
    return p


_FLAG_KEYS = ("seed", "out", "mode", "dt", "stop.time", "checkpoint_every")


def run_command(argv):
    """Parse ``argv``, run the command and write the manifest.

    Returns
    -------
    (int, dict)
        Exit code and manifest.
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flags = {k: getattr(args, k, None) for k in _FLAG_KEYS}
    cfg = resolve_config(args.config, flags)
    out = ensure_dir(str(cfg["out"]))
    inputs = {}
    if args.config:
        inputs[args.config] = sha256(args.config)
    t0 = time.perf_counter()
    manifest = {"schema_version": SCHEMA_VERSION, "command": args.command, "argv": list(argv),
                "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}}
    code, outputs, tallies = 0, [], {}
    try:
        try:
            outputs, tallies = COMMANDS[args.command](args, cfg, out, inputs)
        except Exception as exc:
            raise StageError(args.command, exc) from exc
    except StageError as exc:
        print("error in stage %s" % exc, file=sys.stderr)
        manifest["error"] = {"stage": exc.stage, "message": str(exc)}
        code = 2
    if tallies.get("failed"):
        code = code or 1
    manifest.update(inputs=inputs, outputs=outputs, tallies=tallies,
                    wall_time=time.perf_counter() - t0, exit_code=code)
    timings = getattr(COMMANDS[args.command], "timings", None)
    if timings:
        manifest["criterion_seconds"] = {str(k): v for k, v in sorted(timings.items())}
    write_json(manifest, os.path.join(out, "manifest.json"))
    return code, manifest


def main(argv=None):
    code, _ = run_command(sys.argv[1:] if argv is None else argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
