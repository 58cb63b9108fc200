"""Configuration-driven experiment runner.

Every computation in the package is exposed as a subcommand; outputs are CSV
with a JSON sidecar carrying full provenance, so a results file can always be
traced back to its inputs.  Randomized subcommands require an explicit
--seed (no wall-clock default), making every invocation reproducible.
Exit codes: 0 success, 1 configuration/validation error, 2 numerical failure.

Flags override config-file fields; the config file is a single JSON document
with a "chain" block, an optional "sim" block, exactly one task block named
after the subcommand (dashes replaced by underscores), and an optional
"output" block {"path": ..., "format": "csv"|"json"}.
LDCHAIN_THREADS caps parallelism over lambda grids and chain sizes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import gaussian, simulate
from .chain import (ChainConfig, ReferenceMeasureSpec, chain_config_from_dict,
                    chain_config_to_dict, uniform_chain)
from .curves import KappaLimit, ScgfCurve, rate_function
from .errors import ConfigError, NumericalFailure
from .gdb import check_gdb
from .lyapunov import (fit_lyapunov_bound, lyapunov_b_threshold, lyapunov_energy_norm,
                       lyapunov_phi)
from .riccati import build_linear_system, scgf_riccati

_TASKS = ("simulate", "scgf_gaussian", "scgf_riccati", "scgf_empirical", "rate",
          "kappa", "gc_check", "gdb_check", "positivity", "lyapunov_scan",
          "prop4_check")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we reserve 2 for numerics
        raise ConfigError(message)


def _max_workers() -> int:
    try:
        return max(1, int(os.environ.get("LDCHAIN_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    workers = _max_workers()
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map preserves input order


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    tasks = [k for k in doc if k in _TASKS]
    if len(tasks) > 1:
        raise ConfigError(f"exactly one task block allowed, found {tasks}")
    return doc


def _chain_from(doc: dict, args) -> ChainConfig:
    if "chain" in doc:
        cfg = chain_config_from_dict(doc["chain"])
        if getattr(args, "tau", None) is not None:
            d = chain_config_to_dict(cfg)
            d["tau"] = args.tau
            cfg = chain_config_from_dict(d)
        return cfg
    if getattr(args, "n", None) is None:
        raise ConfigError("need either --config with a chain block or --n plus model flags")
    return uniform_chain(
        n=args.n, boundary=args.boundary, omega0=args.omega0, omega=args.omega,
        gamma=args.gamma, temperature=args.temperature,
        tau=args.tau if args.tau is not None else 0.0,
    )


def _sim_from(doc: dict, args, need_seed: bool) -> simulate.SimSpec:
    block = dict(doc.get("sim", {}))
    for key in ("dt", "t_burn", "t_sample", "scheme", "n_replicas"):
        val = getattr(args, key, None)
        if val is not None:
            block[key] = val
    if getattr(args, "seed", None) is not None:
        block["seed"] = args.seed
    if "seed" not in block:
        if need_seed:
            raise ConfigError("randomized subcommands require an explicit --seed")
        block["seed"] = 0
    if "t_burn" not in block:
        gmin = None
        if "chain" in doc:
            gmin = min(g for g in doc["chain"]["gamma"] if g > 0)
        elif getattr(args, "gamma", None):
            gmin = args.gamma
        block["t_burn"] = 20.0 / gmin if gmin else 0.0   # several relaxation times
    block.setdefault("dt", 1e-3)
    block.setdefault("t_sample", 100.0)
    return simulate.SimSpec(**block)


def _grid(doc_block: dict, args, key: str, flag_value) -> np.ndarray:
    if flag_value is not None:
        vals = np.asarray(flag_value, dtype=float)
    elif key in doc_block:
        vals = np.asarray(doc_block[key], dtype=float)
    else:
        raise ConfigError(f"missing {key}")
    if vals.ndim != 1 or vals.size == 0:
        raise ConfigError(f"{key} must be a non-empty vector")
    if np.any(np.diff(vals) <= 0):
        raise ConfigError(f"{key} must be strictly increasing")
    return vals


def _emit(curve, doc: dict, args) -> None:
    out = dict(doc.get("output", {}))
    if getattr(args, "output", None):
        out["path"] = args.output
    if getattr(args, "format", None):
        out["format"] = args.format
    if not out.get("path"):
        return
    fmt = out.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ConfigError("output format must be csv or json")
    path = out["path"]
    if fmt == "csv":
        curve.write_csv(path)
        sidecar = os.path.splitext(path)[0] + ".json"
        curve.write_json(sidecar)
    else:
        curve.write_json(path)


def _add_common_model_flags(p):
    p.add_argument("--config", help="experiment JSON document")
    p.add_argument("--n", type=int, help="number of oscillators (uniform chain)")
    p.add_argument("--boundary", default="periodic", choices=["periodic", "open"])
    p.add_argument("--omega0", type=float, default=1.0, help="pinning frequency")
    p.add_argument("--omega", type=float, default=1.0, help="coupling frequency")
    p.add_argument("--gamma", type=float, default=1.0, help="friction")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=None, help="uniform drive strength")
    p.add_argument("--output", help="output file path")
    p.add_argument("--format", choices=["csv", "json"])


def _add_sim_flags(p):
    p.add_argument("--dt", type=float)
    p.add_argument("--t-burn", dest="t_burn", type=float)
    p.add_argument("--t-sample", dest="t_sample", type=float)
    p.add_argument("--scheme", choices=["baoa", "euler"])
    p.add_argument("--n-replicas", dest="n_replicas", type=int)
    p.add_argument("--seed", type=int)


def build_parser() -> _Parser:
    parser = _Parser(prog="ldchain", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate the dynamics, write per-site statistics")
    _add_common_model_flags(p)
    _add_sim_flags(p)

    p = sub.add_parser("scgf-gaussian", help="variational SCGF over Gaussian measures")
    _add_common_model_flags(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=float, nargs="+")

    p = sub.add_parser("scgf-riccati", help="SCGF from the tilted-generator eigenvalue")
    _add_common_model_flags(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=float, nargs="+")

    p = sub.add_parser("scgf-empirical", help="naive replica estimator of the SCGF")
    _add_common_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=float, nargs="+")

    p = sub.add_parser("rate", help="Legendre transform of an SCGF curve or kappa limit")
    _add_common_model_flags(p)
    p.add_argument("--j-grid", dest="j_grid", type=float, nargs="+")
    p.add_argument("--scgf-csv", help="CSV produced by a scgf-* subcommand")
    p.add_argument("--limit", action="store_true",
                   help="use the macroscopic kappa limit instead of a sampled curve")
    p.add_argument("--tau-prime", dest="tau_prime", type=float, default=0.0)

    p = sub.add_parser("kappa", help="conductivity of the harmonic ring")
    p.add_argument("--omega0", type=float, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--method", default="closed-form",
                   choices=["closed-form", "quadrature", "discrete-sum"])
    p.add_argument("--n-sum", dest="n_sum", type=int, default=1001)

    p = sub.add_parser("gc-check", help="fluctuation-symmetry histogram check")
    _add_common_model_flags(p)
    _add_sim_flags(p)
    p.add_argument("--bins", type=int, default=12)

    p = sub.add_parser("gdb-check", help="generalized detailed balance residual")
    _add_common_model_flags(p)
    p.add_argument("--beta", type=float, nargs="+",
                   help="reference inverse temperatures (default 1/T_i)")
    p.add_argument("--null-sigma", action="store_true",
                   help="drop the sigma term (negative control)")

    p = sub.add_parser("positivity", help="sign test of the driven stationary current")
    _add_common_model_flags(p)
    _add_sim_flags(p)

    p = sub.add_parser("lyapunov-scan", help="fit and verify the drift lower bound")
    _add_common_model_flags(p)
    p.add_argument("--b", type=float, help="mixing coefficient (default: 0.5 * threshold)")
    p.add_argument("--n-probe", dest="n_probe", type=int, default=2000)
    p.add_argument("--n-verify", dest="n_verify", type=int, default=100000)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("prop4-check", help="macroscopic limit of N*F against the kappa law")
    _add_common_model_flags(p)
    p.add_argument("--n-list", dest="n_list", type=int, nargs="+")
    p.add_argument("--lambda-prime", dest="lambda_prime", type=float, default=1.0)
    p.add_argument("--tau-prime", dest="tau_prime", type=float, default=0.0)
    return parser


def _cmd_simulate(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    sim = _sim_from(doc, args, need_seed=True)
    stats = simulate.integrate(cfg, sim)
    out = dict(doc.get("output", {}))
    if args.output:
        out["path"] = args.output
    if args.format:
        out["format"] = args.format
    if out.get("path"):
        path = out["path"]
        if out.get("format", "csv") == "csv":
            import csv as _csv
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = _csv.writer(fh)
                w.writerow(["site", "kinetic_temp", "kinetic_temp_stderr"])
                for i in range(cfg.n):
                    w.writerow([i + 1, repr(float(stats.kinetic_temps[i])),
                                repr(float(stats.stderr_kinetic[i]))])
            with open(os.path.splitext(path)[0] + ".json", "w", encoding="utf-8") as fh:
                json.dump(stats.to_json_dict(cfg, sim), fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(stats.to_json_dict(cfg, sim), fh, indent=2, sort_keys=True)
                fh.write("\n")
    print(f"simulate: N={cfg.n} J_avg={stats.time_avg_current:.6e} "
          f"(stderr {stats.stderr_current:.2e}), kinetic temps "
          f"{np.array2string(stats.kinetic_temps, precision=4)}")
    return 0


def _analytic_curve(args, method: str) -> tuple:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    task_key = "scgf_gaussian" if method == "gaussian" else "scgf_riccati"
    block = doc.get(task_key, {})
    lam = _grid(block, args, "lambda_grid", args.lambda_grid)
    if not cfg.potential.is_harmonic or not cfg.periodic:
        raise ConfigError("analytic SCGF routes require a periodic harmonic chain")
    if np.ptp(cfg.temperature) or np.ptp(cfg.gamma):
        raise ConfigError("analytic SCGF routes require uniform temperature and friction")
    t, g = cfg.temperature[0], cfg.gamma[0]
    w0, w = cfg.potential.omega0, cfg.potential.omega
    if method == "gaussian":
        vals = _pmap(lambda l: gaussian.optimize_scgf(cfg.n, t, w0, w, g, l, cfg.tau).F, lam)
    else:
        sysk = build_linear_system(cfg.n, t, w0, w, g, cfg.tau)
        vals = _pmap(lambda l: scgf_riccati(sysk, l), lam)
    curve = ScgfCurve(lam=lam, value=np.array(vals), method=method, n_sites=cfg.n,
                      tau=cfg.tau, params={"chain": chain_config_to_dict(cfg)})
    return curve, doc


def _cmd_scgf_gaussian(args) -> int:
    curve, doc = _analytic_curve(args, "gaussian")
    _emit(curve, doc, args)
    print(f"scgf-gaussian: {curve.lam.size} points, "
          f"F range [{curve.value.min():.6e}, {curve.value.max():.6e}]")
    return 0


def _cmd_scgf_riccati(args) -> int:
    curve, doc = _analytic_curve(args, "riccati")
    _emit(curve, doc, args)
    print(f"scgf-riccati: {curve.lam.size} points, "
          f"F range [{curve.value.min():.6e}, {curve.value.max():.6e}]")
    return 0


def _cmd_scgf_empirical(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    sim = _sim_from(doc, args, need_seed=True)
    lam = _grid(doc.get("scgf_empirical", {}), args, "lambda_grid", args.lambda_grid)
    curve = simulate.empirical_scgf(cfg, sim, lam)
    _emit(curve, doc, args)
    n_flag = int(np.sum(curve.flagged))
    print(f"scgf-empirical: {curve.lam.size} points, {n_flag} flagged "
          f"(effective sample size < 10)")
    return 0


def _cmd_rate(args) -> int:
    doc = _load_config(args.config)
    block = doc.get("rate", {})
    j_grid = _grid(block, args, "j_grid", args.j_grid)
    if args.limit or block.get("limit"):
        cfg = _chain_from(doc, args)
        if not cfg.potential.is_harmonic:
            raise ConfigError("the kappa limit requires a harmonic chain")
        tau_prime = args.tau_prime if args.tau_prime else block.get("tau_prime", 0.0)
        lim = KappaLimit(n_sites=cfg.n, temperature=cfg.temperature[0],
                         tau_prime=tau_prime, omega0=cfg.potential.omega0,
                         omega=cfg.potential.omega, gamma=cfg.gamma[0])
        curve = rate_function(lim, j_grid)
    else:
        path = args.scgf_csv or block.get("scgf_csv")
        if not path:
            raise ConfigError("rate needs --limit or --scgf-csv")
        import csv as _csv
        with open(path, encoding="utf-8") as fh:
            rows = list(_csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"empty SCGF file {path}")
        scgf = ScgfCurve(
            lam=np.array([float(r["lambda"]) for r in rows]),
            value=np.array([float(r["value"]) for r in rows]),
            method=rows[0]["method"], n_sites=int(rows[0]["N"]),
            tau=float(rows[0]["tau"]))
        curve = rate_function(scgf, j_grid)
    _emit(curve, doc, args)
    print(f"rate: {curve.j.size} points, min at j={curve.j[np.argmin(curve.value)]:.4g}")
    return 0


def _cmd_kappa(args) -> int:
    val = gaussian.conductivity_kappa(args.omega0, args.omega, args.gamma,
                                      method=args.method, n_sum=args.n_sum)
    print(f"{val:.10f}")
    return 0


def _cmd_gc_check(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    sim = _sim_from(doc, args, need_seed=True)
    bins = args.bins or doc.get("gc_check", {}).get("bins", 12)
    res = simulate.gc_histogram_check(cfg, sim, bins=bins)
    print(f"gc-check: max |(1/t) log P(+s)/P(-s) - s| = {res['max_deviation']:.4e} "
          f"over {res['n_pairs']} bin pairs (finite-time check)")
    return 0


def _cmd_gdb_check(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    beta = args.beta if args.beta is not None else doc.get("gdb_check", {}).get("beta")
    if beta is None:
        beta = (1.0 / cfg.temperature).tolist()
    ref = ReferenceMeasureSpec(beta=np.asarray(beta, dtype=float))
    include_sigma = not (args.null_sigma or doc.get("gdb_check", {}).get("null_sigma"))
    residual = check_gdb(cfg, ref, include_sigma=include_sigma)
    tag = "" if include_sigma else " (sigma dropped: negative control)"
    print(f"gdb-check: residual = {residual:.3e}{tag}")
    return 0


def _cmd_positivity(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    sim = _sim_from(doc, args, need_seed=True)
    res = simulate.current_sign_test(cfg, sim)
    print(f"positivity: tau={cfg.tau:+g} mean J = {res['mean']:+.6e} "
          f"(stderr {res['stderr']:.2e}) pass={res['pass']}")
    return 0


def _cmd_lyapunov_scan(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args)
    block = doc.get("lyapunov_scan", {})
    if args.seed is None and "seed" not in block:
        raise ConfigError("randomized subcommands require an explicit --seed")
    seed = args.seed if args.seed is not None else block["seed"]
    ref = ReferenceMeasureSpec(beta=1.0 / cfg.temperature)
    threshold = lyapunov_b_threshold(cfg)
    b = args.b if args.b is not None else block.get("b", 0.5 * threshold)
    rng = np.random.default_rng(seed)
    n_probe = args.n_probe or block.get("n_probe", 2000)
    n_verify = args.n_verify or block.get("n_verify", 100000)

    def sample(m):
        scale = rng.choice([0.5, 1.0, 3.0, 10.0], size=(m, 1))
        return (rng.standard_normal((m, cfg.n)) * scale,
                rng.standard_normal((m, cfg.n)) * scale)

    qp, pp = sample(n_probe)
    c1, c2 = fit_lyapunov_bound(lyapunov_phi(cfg, ref, b, (qp, pp)),
                                lyapunov_energy_norm(cfg, (qp, pp)))
    qv, pv = sample(n_verify)
    gap = lyapunov_phi(cfg, ref, b, (qv, pv)) - (c1 * lyapunov_energy_norm(cfg, (qv, pv)) - c2)
    n_viol = int(np.sum(gap < 0))
    print(f"lyapunov-scan: b={b:.4g} (threshold {threshold:.4g}) fitted c1={c1:.4g} "
          f"c2={c2:.4g}; violations {n_viol}/{n_verify} (worst gap {gap.min():.3e})")
    return 0 if n_viol == 0 else 2


def _cmd_prop4_check(args) -> int:
    doc = _load_config(args.config)
    cfg = _chain_from(doc, args) if ("chain" in doc or args.n) else uniform_chain(
        3, omega0=args.omega0, omega=args.omega, gamma=args.gamma,
        temperature=args.temperature)
    block = doc.get("prop4_check", {})
    n_list = args.n_list or block.get("N_list")
    if not n_list:
        raise ConfigError("prop4-check needs --n-list")
    lamp = args.lambda_prime if args.lambda_prime is not None else block.get("lambda_prime", 1.0)
    taup = args.tau_prime if args.tau_prime is not None else block.get("tau_prime", 0.0)
    t, g = cfg.temperature[0], cfg.gamma[0]
    w0, w = cfg.potential.omega0, cfg.potential.omega
    limit = gaussian.scaled_limit_F(lamp, taup, t, w0, w, g)

    def one(n):
        return n * gaussian.optimize_scgf(n, t, w0, w, g, lamp / n, taup / n).F

    vals = _pmap(one, list(n_list))
    errs = [abs(v - limit) for v in vals]
    print(f"prop4-check: limit kappa(l't' + l'^2 T^2) = {limit:.7f}")
    for n, v, e in zip(n_list, vals, errs):
        print(f"  N={n:5d}: N*F = {v:.7f}  abs err {e:.3e}")
    if len(n_list) >= 2 and all(e > 0 for e in errs):
        slopes = np.polyfit(np.log(np.asarray(n_list, dtype=float)), np.log(errs), 1)
        print(f"  empirical decay order: {-slopes[0]:.2f}")
    return 0


_HANDLERS = {
    "simulate": _cmd_simulate,
    "scgf-gaussian": _cmd_scgf_gaussian,
    "scgf-riccati": _cmd_scgf_riccati,
    "scgf-empirical": _cmd_scgf_empirical,
    "rate": _cmd_rate,
    "kappa": _cmd_kappa,
    "gc-check": _cmd_gc_check,
    "gdb-check": _cmd_gdb_check,
    "positivity": _cmd_positivity,
    "lyapunov-scan": _cmd_lyapunov_scan,
    "prop4-check": _cmd_prop4_check,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
