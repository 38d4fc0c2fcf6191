"""Command-line entry point: ``horseshoe-lab <command> [options]``.

Exit status is 0 on success, 1 when a certificate fails (a witness is
written to ``witness.json``) and 2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import cones, hyper, manifolds, symbolic, thermo
from .critmap import critical_orbit_csv
from .orbits import decode_batch, random_words
from .params import ParamError, ParamSet, SolverHints, parse_kv, solve_params, validate

CHUNK = 100


class UsageError(Exception):
    pass


class CertificateFailure(Exception):
    def __init__(self, message: str, witness: dict):
        super().__init__(message)
        self.witness = witness


# ----------------------------------------------------------------------
# configuration

_HINT_KEYS = {f.name for f in fields(SolverHints)}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun an experiment: hints or a parameter file, sizes, seed, output."""

    name: str
    hints: dict = field(default_factory=dict)
    params_path: str | None = None
    sizes: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    thetas: tuple[float, ...] | None = None
    out: str = "horseshoe-out"

    def to_kv(self) -> str:
        lines = [f"experiment={self.name}", f"seed={self.seed}"]
        if self.params_path:
            lines.append(f"params={self.params_path}")
        for k in sorted(self.hints):
            lines.append(f"{k}={self.hints[k]}")
        for k in sorted(self.sizes):
            lines.append(f"{k}={self.sizes[k]}")
        if self.thetas is not None:
            lines.append("thetas=" + ",".join(repr(t) for t in self.thetas))
        return "\n".join(lines) + "\n"

    def size(self, key: str, default):
        val = self.sizes.get(key, default)
        try:
            return type(default)(float(val)) if isinstance(default, int) else type(default)(val)
        except (TypeError, ValueError):
            raise UsageError(f"bad value for {key}: {val!r}") from None

    def params(self) -> ParamSet:
        if self.params_path:
            text = Path(self.params_path).read_text()
            p = ParamSet.from_json(text) if text.lstrip().startswith("{") else ParamSet.from_kv(text)
        else:
            kw = {}
            for k, v in self.hints.items():
                if k == "itinerary":
                    kw[k] = tuple(int(ch) for ch in str(v) if ch.isdigit())
                elif k == "k_c":
                    kw[k] = None if str(v).lower() == "none" else int(v)
                else:
                    kw[k] = float(v)
            p = solve_params(SolverHints(**kw))
        if "theta" in self.sizes:
            p = p.with_theta(float(self.sizes["theta"]))
        return p


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = parse_kv(Path(args.config).read_text())
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
    data.pop("experiment", None)
    hints = {k: data.pop(k) for k in list(data) if k in _HINT_KEYS and k != "theta"}
    params_path = data.pop("params", None)
    thetas = data.pop("thetas", None)
    if thetas is not None:
        try:
            thetas = tuple(float(t) for t in thetas.split(","))
        except ValueError:
            raise UsageError(f"bad thetas: {thetas!r}") from None
    seed = int(data.pop("seed", 0)) if args.seed is None else args.seed
    out = data.pop("out", "horseshoe-out") if args.out is None else args.out
    env = os.environ.get("HORSESHOE_LAB_THREADS")
    threads = args.threads or int(data.pop("threads", 0) or 0) or (int(env) if env else 1)
    data.pop("threads", None)
    if getattr(args, "params", None):
        params_path = args.params
    for key in ("orbits", "length", "depth", "per_orbit", "curves", "pairs", "samples", "theta"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    return ExperimentConfig(args.command, hints, params_path, data, seed, max(threads, 1), thetas, out)


# ----------------------------------------------------------------------
# output

def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class Run:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.seq = np.random.SeedSequence(cfg.seed)

    def write(self, name: str, text: str) -> None:
        atomic_write(self.out / name, text)

    def rngs(self, count: int) -> list[np.random.Generator]:
        return [np.random.default_rng(s) for s in self.seq.spawn(count)]

    def chunked(self, total: int, fn):
        """fn(rng, n) over fixed chunks; results in chunk order, independent of thread count."""
        sizes = [min(CHUNK, total - a) for a in range(0, total, CHUNK)]
        rngs = self.rngs(len(sizes))
        with ThreadPoolExecutor(max_workers=self.cfg.threads) as ex:
            return list(ex.map(fn, rngs, sizes))

    def finish(self, name: str, summary: dict, passed: bool, witness: dict | None = None):
        summary = dict(summary, passed=bool(passed))
        self.write(name, dump_json(summary))
        self.write("config.kv", self.cfg.to_kv())
        print(dump_json(summary), end="")
        if not passed:
            raise CertificateFailure(f"{self.cfg.name} certificate failed", witness or summary)


# ----------------------------------------------------------------------
# commands

def cmd_solve_params(run: Run, args) -> None:
    p = run.cfg.params()
    rep = validate(p)
    run.write("params.kv", p.to_kv())
    run.write("params.json", p.to_json() + "\n")
    run.write("conditions.csv", rep.to_csv())
    fails = [{"id": e.id, "equation": e.equation, "margin": e.margin} for e in rep.failures()]
    run.finish("solve_params.json", {"params": p.to_dict(), "conditions": len(rep.entries),
                                     "min_margin": min(e.margin for e in rep.entries)},
               rep.passed, {"violated": fails})


def cmd_validate(run: Run, args) -> None:
    p = run.cfg.params()
    rep = validate(p)
    run.write("conditions.csv", rep.to_csv())
    fails = [{"id": e.id, "equation": e.equation, "lhs": e.lhs, "rhs": e.rhs, "margin": e.margin}
             for e in rep.failures()]
    run.finish("validate.json", {"conditions": len(rep.entries), "violated": fails}, rep.passed,
               {"violated": fails})


def cmd_orbit(run: Run, args) -> None:
    p = run.cfg.params()
    if args.critical:
        nb, nf = args.critical
        run.write("critical_orbit.csv", critical_orbit_csv(p, nb, nf))
        run.finish("orbit.json", {"critical": [nb, nf]}, True)
        return
    if args.word:
        w = symbolic.SymbolWord.parse(args.word)
        word = np.array(w.symbols)[None, :]
        if not w.is_admissible():
            raise UsageError(f"inadmissible word {args.word}")
    else:
        word = random_words(run.rngs(1)[0], 1, run.cfg.size("length", 40), p)
    ob = decode_batch(p, word)
    lines = ["j,symbol,x,y,visit"]
    for j in range(word.shape[1]):
        lines.append(f"{j},{int(word[0, j])},{float(ob.x[0, j])!r},{float(ob.y[0, j])!r},{int(ob.visit[0, j])}")
    run.write("orbit.csv", "\n".join(lines) + "\n")
    run.finish("orbit.json", {"word": "".join(map(str, word[0])), "visits": int(ob.visit.sum())}, True)


def cmd_cones_sweep(run: Run, args) -> None:
    p = run.cfg.params()
    n = run.cfg.size("orbits", 500)
    depth = run.cfg.size("depth", 20)
    per = run.cfg.size("per_orbit", 20)
    parts = run.chunked(n, lambda rng, k: cones.invariance_sweep(p, rng, k, depth, per))
    res = cones.SweepResult(*(np.concatenate([getattr(r, f.name) for r in parts])
                              for f in fields(cones.SweepResult)))
    run.write("sweep.csv", res.to_csv())
    bad = np.nonzero(~((res.margin_u > 0) & (res.margin_s > 0)))[0]
    witness = None
    if bad.size:
        i = int(bad[0])
        witness = {"point": [res.x[i], res.y[i]], "phase": cones.PHASES[int(res.phase[i])],
                   "margin_u": res.margin_u[i], "margin_s": res.margin_s[i]}
    run.finish("cones.json", {"points": int(res.x.size), "failures": res.failures,
                              "min_margin_u": float(res.margin_u.min()),
                              "min_margin_s": float(res.margin_s.min())}, bad.size == 0, witness)


def cmd_lyapunov(run: Run, args) -> None:
    p = run.cfg.params()
    n = run.cfg.size("orbits", 1000)
    L = run.cfg.size("length", 10000)
    floor = math.log(p.rho) / 5 - 1e-3

    def job(rng, k):
        return hyper.lyapunov_unstable(p, random_words(rng, k, L, p, inject=0.3))

    parts = run.chunked(n, job)
    exps = np.concatenate([r.exponent for r in parts])
    fixed = hyper.lyapunov_unstable(p, hyper.periodic_word((9,), 200)[None, :]).exponent[0]
    per3 = hyper.lyapunov_unstable(p, hyper.periodic_word(p.itinerary, 3000)[None, :]).exponent[0]
    per3_expected = (2 * math.log(p.sigma) + math.log(p.rho)) / 3
    run.write("lyapunov.csv", "orbit,exponent\n" + "".join(f"{i},{e!r}\n" for i, e in enumerate(exps.tolist())))
    ok = bool(exps.min() >= floor and abs(fixed - math.log(p.sigma)) < 1e-10
              and abs(per3 - per3_expected) < 1e-10)
    i = int(np.argmin(exps))
    run.finish("lyapunov.json", {"orbits": int(exps.size), "length": L, "min": exps.min(), "floor": floor,
                                 "fixed_point": fixed, "period3": per3, "period3_expected": per3_expected},
               ok, {"orbit": i, "exponent": exps[i]})


def cmd_tube_check(run: Run, args) -> None:
    p = run.cfg.params()
    n = run.cfg.size("orbits", 400)
    L = run.cfg.size("length", 200)

    def job(rng, k):
        ob = decode_batch(p, random_words(rng, k, L, p, inject=0.3))
        return [(t.n, t.m, t.length, t.x, t.eta, hyper.tube_growth(t, [0.0, 1.0]),
                 hyper.tube_expansion_check(p, t)) for t in cones.harvest_tubes(p, ob)]

    rows = [r for part in run.chunked(n, job) for r in part]
    lines = ["n_minus,m_plus,length,x,eta,vertical_growth,ok"]
    lines += [f"{a},{b},{c},{d!r},{e!r},{f!r},{int(g)}" for a, b, c, d, e, f, g in rows]
    run.write("tubes.csv", "\n".join(lines) + "\n")
    bad = [r for r in rows if not r[6]]
    run.finish("tubes.json", {"tubes": len(rows), "failures": len(bad)}, not bad and len(rows) > 0,
               {"tube": list(bad[0][:5])} if bad else {"tubes": 0})


def cmd_doubling(run: Run, args) -> None:
    p = run.cfg.params()
    thetas = list(run.cfg.thetas) if run.cfg.thetas is not None else hyper.theta_grid(p)
    n = run.cfg.size("orbits", 1000)
    results, ok, witness = [], True, None
    rng = run.rngs(1)[0]
    for th in thetas + [0.0]:
        r = hyper.uniform_doubling_time(p, th, rng=rng, n_points=n)
        npr = hyper.n_prime(p, th) if th > 0 else None
        within = None if r.N is None or npr is None else r.N <= 2 * npr
        results.append({"theta": th, "N": r.N, "n_prime": npr, "cap": r.cap, "within_2n_prime": within,
                        "witness": r.witness})
        if th > 0 and (r.failed or not within):
            ok = False
            witness = witness or {"theta": th, "N": r.N, "n_prime": npr, "witness": r.witness}
        if th == 0 and not r.failed:
            ok = False
            witness = witness or {"theta": 0.0, "N": r.N, "reason": "θ=0 doubled within the cap"}
    lines = ["theta,N,n_prime,cap"] + [f"{r['theta']!r},{r['N']},{r['n_prime']},{r['cap']}" for r in results]
    run.write("doubling.csv", "\n".join(lines) + "\n")
    run.finish("doubling.json", {"results": results}, ok, witness)


def cmd_manifolds(run: Run, args) -> None:
    p = run.cfg.params()
    rep = manifolds.family_closure(p, run.rngs(1)[0], run.cfg.size("curves", 100))
    past = tuple(int(c) for c in (args.past or "816" * 10))
    fut = tuple(int(c) for c in (args.future or "816" * 10))
    wu = manifolds.unstable_manifold_local(p, past)
    ws = manifolds.stable_manifold_local(p, fut)
    run.write("unstable.csv", wu.to_csv())
    run.write("stable.csv", ws.to_csv())
    summary = {"closure": vars(rep), "unstable_gap": wu.gap, "stable_gap": ws.gap,
               "glue_hits": wu.glue_hits + ws.glue_hits}
    run.finish("manifolds.json", summary, rep.violations == 0 and rep.ineq16_failures == 0,
               {"violations": rep.violations, "ineq16_failures": rep.ineq16_failures})


def cmd_tangency(run: Run, args) -> None:
    p = run.cfg.params()
    rep = manifolds.tangency_order(p)
    thetas = list(run.cfg.thetas) if run.cfg.thetas is not None else hyper.theta_grid(p)
    angles = [manifolds.transversality_angle(p, th) for th in thetas]
    kappa = hyper.fit_linear_floor(thetas, angles)
    out = json.loads(rep.to_json())
    out.update({"thetas": thetas, "angles": angles, "kappa": kappa})
    ok = rep.order == 3 and rep.rel_err < 1e-6 and rep.d1 < 1e-8 and rep.d2 < 1e-8 and kappa > 0
    run.finish("tangency.json", out, ok, out)


def cmd_code(run: Run, args) -> None:
    p = run.cfg.params()
    res = symbolic.code(p, (args.x, args.y), args.back, args.fwd)
    run.finish("code.json", {"point": [args.x, args.y], "word": str(res.word), "escape": res.escape},
               res.complete, {"point": [args.x, args.y], "escape": res.escape, "word": str(res.word)})


def cmd_decode(run: Run, args) -> None:
    p = run.cfg.params()
    try:
        d = symbolic.decode(p, args.word)
    except symbolic.WordError as e:
        raise UsageError(str(e)) from None
    run.finish("decode.json", {"word": args.word, "x": repr(d.x), "y": repr(d.y), "point": list(d.point),
                               "width_bound": d.width_bound, "height_bound": d.height_bound}, True)


def cmd_expansivity(run: Run, args) -> None:
    p = run.cfg.params()
    n = run.cfg.size("pairs", 1000)
    L = run.cfg.size("length", 12)
    rng = run.rngs(1)[0]
    wa = symbolic.random_symbol_words(p, rng, n, L, L)
    wb = symbolic.random_symbol_words(p, rng, n, L, L)
    bad = None
    for a, b in zip(wa, wb):
        if a == b:
            continue
        da, db = symbolic.decode(p, a), symbolic.decode(p, b)
        if symbolic.separation_time(p, da, db, L) is None:
            bad = {"a": str(a), "b": str(b)}
            break
    run.finish("expansivity.json", {"pairs": n, "window": L, "d": p.d}, bad is None, bad)


def cmd_holder(run: Run, args) -> None:
    p = run.cfg.params()
    rng = run.rngs(1)[0]
    qs = list(range(2, 9))
    fit = symbolic.holder_modulus(p, symbolic.common_window_pairs(p, rng, qs, run.cfg.size("samples", 6)),
                                  symbolic.cube_law_pairs(p, qs))
    run.finish("holder.json", vars(fit), fit.exponent > 0 and fit.cube_law_ok, vars(fit))


def _potential(p, name: str, t: float, r: float) -> thermo.Potential:
    if name == "zero":
        return thermo.zero_potential()
    if name == "constant":
        return thermo.constant_potential(t)
    if name == "vertical":
        return thermo.vertical_rate_potential(p, t)
    if name == "geometric":
        return thermo.geometric_potential(r=r)
    raise UsageError(f"unknown potential {name!r}")


def cmd_pressure(run: Run, args) -> None:
    p = run.cfg.params()
    pot = _potential(p, args.potential, args.t, args.r)
    try:
        val = thermo.pressure(p, pot, args.depth)
        curve = thermo.pressure_curve(p, pot, range(2, args.depth + 1))
    except thermo.PressureError as e:
        raise CertificateFailure(str(e), {"potential": pot.name, "depth": args.depth}) from None
    run.write("pressure_curve.csv", thermo.pressure_curve_csv(curve))
    ratios = thermo.cauchy_ratios(curve)
    run.finish("pressure.json", {"potential": pot.name, "depth": args.depth, "pressure": val,
                                 "cauchy_ratios": ratios}, True)


def cmd_equilibrium(run: Run, args) -> None:
    p = run.cfg.params()
    pot = _potential(p, args.potential, args.t, args.r)
    mu = thermo.equilibrium_measure(p, pot, args.depth)
    vr = thermo.variational_check(p, pot, args.depth)
    rng = run.rngs(1)[0]
    K = thermo.gibbs_constant(p, pot, mu, rng)
    spread = thermo.uniqueness_spread(p, pot, args.depth, rng)
    run.write("measure.csv", mu.to_csv())
    if args.push:
        run.write("cloud.csv", thermo.push_to_lambda(p, mu, args.depth).to_csv())
    ok = vr.defect < 1e-6 and spread < 1e-8
    run.finish("equilibrium.json", {"potential": pot.name, "depth": args.depth, "pressure": vr.pressure,
                                    "entropy": vr.entropy, "integral": vr.integral, "defect": vr.defect,
                                    "gibbs_K": K, "start_spread": spread,
                                    "shift_defect": mu.shift_defect()}, ok)


COMMANDS = {
    "solve-params": cmd_solve_params, "validate": cmd_validate, "orbit": cmd_orbit,
    "cones-sweep": cmd_cones_sweep, "lyapunov": cmd_lyapunov, "tube-check": cmd_tube_check,
    "doubling": cmd_doubling, "manifolds": cmd_manifolds, "tangency": cmd_tangency,
    "code": cmd_code, "decode": cmd_decode, "expansivity": cmd_expansivity, "holder": cmd_holder,
    "pressure": cmd_pressure, "equilibrium": cmd_equilibrium,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (default $HORSESHOE_LAB_THREADS or 1)")
    common.add_argument("--out", help="output directory (default horseshoe-out)")
    common.add_argument("--params", help="ParamSet file (key=value or JSON) instead of solving from hints")

    ap = argparse.ArgumentParser(prog="horseshoe-lab", description="Horseshoe with a cubic tangency: experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    mk = {name: sub.add_parser(name, parents=[common]) for name in COMMANDS}

    mk["orbit"].add_argument("--word", help="word such as 777.4816")
    mk["orbit"].add_argument("--length", type=int)
    mk["orbit"].add_argument("--critical", type=int, nargs=2, metavar=("N_BACK", "N_FWD"))
    for name in ("cones-sweep", "lyapunov", "tube-check", "doubling"):
        mk[name].add_argument("--orbits", type=int)
    for name in ("cones-sweep",):
        mk[name].add_argument("--depth", type=int)
        mk[name].add_argument("--per-orbit", dest="per_orbit", type=int)
    for name in ("lyapunov", "tube-check", "expansivity"):
        mk[name].add_argument("--length", type=int)
    mk["manifolds"].add_argument("--curves", type=int)
    mk["manifolds"].add_argument("--past", help="backward word for W^u_loc, e.g. 816816")
    mk["manifolds"].add_argument("--future", help="forward word for W^s_loc")
    mk["code"].add_argument("x", type=float)
    mk["code"].add_argument("y", type=float)
    mk["code"].add_argument("--back", type=int, default=10)
    mk["code"].add_argument("--fwd", type=int, default=10)
    mk["decode"].add_argument("word")
    mk["expansivity"].add_argument("--pairs", type=int)
    mk["holder"].add_argument("--samples", type=int)
    for name in ("pressure", "equilibrium"):
        mk[name].add_argument("--potential", default="zero", choices=["zero", "constant", "vertical", "geometric"])
        mk[name].add_argument("--depth", type=int, default=8)
        mk[name].add_argument("--t", type=float, default=1.0, help="constant value or rate exponent")
        mk[name].add_argument("--r", type=float, default=0.5, help="decay of the geometric potential")
    mk["equilibrium"].add_argument("--push", action="store_true", help="also write the pushed cloud on Λ")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args)
        run = Run(cfg)
        COMMANDS[args.command](run, args)
    except (UsageError, ParamError, OSError, ValueError) as e:
        print(f"horseshoe-lab: error: {e}", file=sys.stderr)
        return 2
    except CertificateFailure as e:
        run.write("witness.json", dump_json(e.witness))
        print(f"horseshoe-lab: {e}", file=sys.stderr)
        print(dump_json(e.witness), end="", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
