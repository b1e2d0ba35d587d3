"""Command-line front end: ``induct-mc <command> --config path [...]``.

A config is a single JSON document (schema in ``config_schema.json``) with a
``model`` (a finite chain ``{"n", "P", "Y"}`` or a step law ``{"kind", ...}``),
command ``params``, ``seed``, ``workers`` and ``output``.  Flags override the
file; ``INDUCT_MC_SEED`` supplies a seed when neither does.

Every command returns a list of checks.  Hard checks decide the exit code
(0 pass, 1 hard-check failure, 2 error); soft checks are reported only.
The JSON report is written with sorted keys and embeds the resolved config
and the tool version, so equal inputs give byte-identical files.

CSV columns per command::

    verify-finite  check,deviation,pass
    invariant      state,mu                (chain)
                   function,estimate,se    (step law)
    kac            f_index,lhs,rhs,deviation
    bijection      state,mu,s_mu,nu,r_nu
    drift-check    x,u,Pu,w
    sandwich       x,ratio
    poisson        x,g_hat,se,residual,residual_se,g_exact
    clt            n,sigma2_n,L_n
    phi-moment     x,phi,estimate,se
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from . import excursion as ex
from . import finite_chain as fc
from .drift import DriftFunctionSpec, drift_report, sandwich_constants, sandwich_holds, sandwich_profile
from .errors import ConfigInvalid, InductMCError
from .lindley import StepDistribution, discretize

COMMANDS = ("verify-finite", "invariant", "kac", "bijection", "drift-check",
            "sandwich", "poisson", "clt", "phi-moment")
SEED_ENV = "INDUCT_MC_SEED"


def _schema():
    text = resources.files("induct_mc").joinpath("config_schema.json").read_text()
    return json.loads(text)


def _field_path(err):
    parts = []
    for p in err.absolute_path:
        if isinstance(p, int):
            parts.append(f"[{p}]")
        else:
            parts.append(("." if parts else "") + str(p))
    return "".join(parts) or "<root>"


def validate_config(cfg):
    """Raise ``ConfigInvalid`` naming the offending field path."""
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigInvalid(f"{_field_path(e)}: {e.message}")


def is_chain(model):
    return "P" in model


def is_randomized(command, cfg):
    if command == "kac":
        return "random_f" in cfg.get("params", {})
    if command in ("poisson", "clt", "phi-moment"):
        return True
    return command in ("invariant", "drift-check") and not is_chain(cfg["model"])


def resolve(command, cfg, seed=None, workers=None, out=None, fmt=None, env=None):
    """Validate ``cfg`` and fold in flag and environment overrides."""
    env = os.environ if env is None else env
    if not isinstance(cfg, dict):
        raise ConfigInvalid("<root>: config must be a JSON object")
    validate_config(cfg)
    if cfg.get("command", command) != command:
        raise ConfigInvalid(f"command: config is for {cfg['command']!r}, invoked as {command!r}")
    cfg = json.loads(json.dumps(cfg))
    cfg["command"] = command
    cfg.setdefault("params", {})
    if seed is not None:
        cfg["seed"] = int(seed)
    elif "seed" not in cfg and env.get(SEED_ENV):
        try:
            cfg["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigInvalid(f"seed: {SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    if workers is not None:
        cfg["workers"] = int(workers)
    if "seed" in cfg and not 0 <= cfg["seed"] < 1 << 64:
        raise ConfigInvalid("seed: must be an unsigned 64-bit integer")
    if cfg.get("workers", 1) < 1:
        raise ConfigInvalid("workers: must be >= 1")
    if is_randomized(command, cfg):
        if "seed" not in cfg:
            raise ConfigInvalid("seed: required for randomized command " + command)
        cfg.setdefault("workers", 1)
    output = cfg.setdefault("output", {})
    if out is not None:
        output["path"] = out
    if fmt is not None:
        output["format"] = fmt
    output.setdefault("format", "json")
    if command in ("verify-finite", "kac", "bijection") and not is_chain(cfg["model"]):
        raise ConfigInvalid(f"model: {command} needs a finite chain")
    if command in ("sandwich", "poisson", "clt", "phi-moment") and is_chain(cfg["model"]):
        raise ConfigInvalid(f"model: {command} needs a step law")
    return cfg


# -- model and function parsing ------------------------------------------------


def _chain(model):
    P = fc.validate_stochastic(model["P"])
    if P.n != model["n"]:
        raise ConfigInvalid(f"model.n: says {model['n']} states, P has {P.n}")
    return P, fc.ReturnSet.from_indices(P.n, model["Y"])


def _function(spec, where):
    """Vectorized function from a config entry."""
    if isinstance(spec, str):
        named = {"one": ex.constant(1.0), "zero": ex.constant(0.0),
                 "identity": ex.identity, "indicator_zero": ex.indicator_zero}
        if spec not in named:
            raise ConfigInvalid(f"{where}: unknown function {spec!r}")
        return named[spec]
    if isinstance(spec, dict) and len(spec) == 1:
        (key, val), = spec.items()
        if key == "power":
            return lambda x: np.abs(np.asarray(x, dtype=float)) ** float(val)
        if key == "constant":
            return ex.constant(val)
        if key == "indicator":
            return lambda x: (np.asarray(x) == val).astype(float)
    if isinstance(spec, list):
        table = np.asarray(spec, dtype=float)
        return lambda x: table[np.asarray(x).astype(int)]
    raise ConfigInvalid(f"{where}: cannot interpret {spec!r} as a function")


def _label(spec):
    return spec if isinstance(spec, str) else json.dumps(spec, sort_keys=True)


def _grid(spec, default=None):
    if spec is None:
        return default
    if isinstance(spec, dict):
        return np.linspace(spec["start"], spec["stop"], spec["num"])
    return np.asarray(spec, dtype=float)


def _drift_fn(spec, where):
    if spec is None:
        return DriftFunctionSpec.power(2.0)
    if isinstance(spec, dict) and set(spec) == {"power"}:
        return DriftFunctionSpec.power(spec["power"])
    if isinstance(spec, list):
        try:
            return DriftFunctionSpec.tabulated(spec)
        except ValueError as e:
            raise ConfigInvalid(f"{where}: {e}") from None
    raise ConfigInvalid(f"{where}: expected {{\"power\": s}} or a list of values")


# -- checks --------------------------------------------------------------------


def check(name, value, ok, hard=True, bound=None):
    return {"name": name, "value": value, "pass": bool(ok), "hard": hard, "bound": bound}


def _le(name, value, bound, hard=True):
    return check(name, value, math.isfinite(value) and value <= bound, hard, bound)


# -- commands ------------------------------------------------------------------


def cmd_verify_finite(cfg):
    P, Y = _chain(cfg["model"])
    sys_ = fc.induced_operators(P, Y)
    rep = fc.check_identities(P, sys_)
    checks = [_le(k, v, fc.IDENTITY_TOL) for k, v in rep.deviations.items()]
    q_rows = float(np.max(np.abs(sys_.Q.sum(axis=1) - 1.0)))
    checks.append(_le("Q row-sum deviation", q_rows, fc.Q_STOCHASTIC_TOL))
    checks.append(_le("Q mass off Y", float(np.abs(sys_.Q[:, ~Y.mask]).max(initial=0.0)),
                      fc.Q_STOCHASTIC_TOL))
    checks.append(check("mean return >= 1", float(sys_.mean_return.min()),
                        sys_.mean_return.min() >= 1.0 - fc.IDENTITY_TOL))
    result = {"R": sys_.R, "S": sys_.S, "Q": sys_.Q, "mean_return": sys_.mean_return,
              "deviations": rep.deviations}
    rows = [(c["name"], c["value"], c["pass"]) for c in checks]
    return result, checks, (("check", "deviation", "pass"), rows)


def cmd_invariant(cfg):
    p = cfg["params"]
    if is_chain(cfg["model"]):
        P, _ = _chain(cfg["model"])
        mu = fc.invariant_measure(P)
        checks = [_le("stationary residual", fc.stationary_residual(P, mu), 1e-12)]
        alt = fc.power_iteration(P)
        checks.append(_le("power-iteration agreement",
                          float(np.max(np.abs(alt.weights - mu.weights))), 1e-9))
        rows = list(enumerate(mu.weights.tolist()))
        return {"mu": mu.weights}, checks, (("state", "mu"), rows)
    rho = StepDistribution.from_json(cfg["model"])
    specs = p.get("functions", ["indicator_zero", "identity", "one"])
    fs = [_function(s, f"params.functions[{i}]") for i, s in enumerate(specs)]
    n = p.get("n_excursions", 100_000)
    ests = ex.kac_estimator(rho, fs, n, cfg["seed"], cfg["workers"])
    z = p.get("z", 3.0)
    expected = p.get("expected", {})
    out, checks, rows = {}, [], []
    for s, e in zip(specs, ests):
        lab = _label(s)
        out[lab] = {"estimate": e.value, "se": e.se,
                    "ci95": [e.value - 1.959963984540054 * e.se, e.value + 1.959963984540054 * e.se]}
        rows.append((lab, e.value, e.se))
        if lab in expected:
            dev = abs(e.value - expected[lab])
            checks.append(check(f"mu({lab}) vs {expected[lab]} [|dev|/se]",
                                dev / e.se if e.se > 0 else (0.0 if dev == 0 else math.inf),
                                dev <= z * e.se, bound=z))
    return {"n_excursions": n, "estimates": out}, checks, (("function", "estimate", "se"), rows)


def cmd_kac(cfg):
    p = cfg["params"]
    P, Y = _chain(cfg["model"])
    fs = [np.asarray(_function(s, f"params.functions[{i}]")(np.arange(P.n)), dtype=float)
          for i, s in enumerate(p.get("functions", []))]
    if "random_f" in p:
        from .rng import stream

        gen = stream(cfg["seed"], 0)
        fs += list(gen.standard_normal((p["random_f"], P.n)))
    if not fs:
        fs = [np.ones(P.n)]
    rows, checks = [], []
    for i, f in enumerate(fs):
        lhs, rhs = fc.kac_check(P, Y, f)
        rows.append((i, lhs, rhs, abs(lhs - rhs)))
    worst = max(r[3] for r in rows)
    checks.append(_le("max |mu f - mu SRf|", worst, fc.KAC_TOL))
    a, b = fc.classical_kac(P, Y)
    checks.append(_le("classical Kac |sum_Y mu E tau - mu(X)|", abs(a - b), fc.KAC_TOL))
    result = {"pairs": [{"lhs": r[1], "rhs": r[2]} for r in rows], "classical": [a, b]}
    return result, checks, (("f_index", "lhs", "rhs", "deviation"), rows)


def cmd_bijection(cfg):
    P, Y = _chain(cfg["model"])
    rep = fc.measure_bijection_check(P, Y)
    checks = [_le(k, v, fc.IDENTITY_TOL) for k, v in rep.deviations.items()]
    mu = fc.invariant_measure(P).weights
    nu = fc.invariant_measure(fc.induced_operators(P, Y).Q).weights
    rows = list(zip(range(P.n), mu, rep.s_mu.weights, nu, rep.r_nu.weights))
    result = {"deviations": rep.deviations, "mu": mu, "s_mu": rep.s_mu.weights, "nu": nu,
              "r_nu": rep.r_nu.weights}
    return result, checks, (("state", "mu", "s_mu", "nu", "r_nu"), rows)


def cmd_drift_check(cfg):
    p = cfg["params"]
    u = _drift_fn(p.get("u"), "params.u")
    if is_chain(cfg["model"]):
        P, Y = _chain(cfg["model"])
        rep = drift_report(P, u, Y=Y)
    else:
        rho = StepDistribution.from_json(cfg["model"])
        rep = drift_report(rho, u, grid=_grid(p.get("grid")), n_excursions=p.get("n_excursions", 200),
                           seed=cfg["seed"], workers=cfg["workers"], z=p.get("z", 3.0))
    checks = [
        check("B_u finite", rep.B_u, math.isfinite(rep.B_u)),
        check("inf w >= 1", rep.inf_w, rep.inf_w >= 1.0 - 1e-9),
        check("sup Pw/w finite", rep.sup_ratio_Pw_w, math.isfinite(rep.sup_ratio_Pw_w)),
        check("sup Qu finite", rep.sup_Qu, math.isfinite(rep.sup_Qu)),
        check("sup E tau/u finite", rep.sup_Etau_over_u, math.isfinite(rep.sup_Etau_over_u)),
        check("sup of Pu-u interior", float(rep.sup_at_edge), not rep.sup_at_edge),
    ]
    result = {"B_u": rep.B_u, "inf_w": rep.inf_w, "sup_Pw_over_w": rep.sup_ratio_Pw_w,
              "sup_Qu": rep.sup_Qu, "sup_Etau_over_u": rep.sup_Etau_over_u,
              "pass": rep.passed, "domain": list(rep.domain), "sup_at_edge": rep.sup_at_edge,
              "asymptotic_slope": rep.asymptotic_slope}
    rows = list(zip(rep.x, rep.u, rep.Pu, rep.w))
    return result, checks, (("x", "u", "Pu", "w"), rows)


def cmd_sandwich(cfg):
    p = cfg["params"]
    rho = StepDistribution.from_json(cfg["model"])
    s = p.get("s", 2.0)
    grid = _grid(p.get("grid"))
    B, N = sandwich_constants(rho, s, grid)
    _, ratio, g = sandwich_profile(rho, s, grid)
    n_max = p.get("n_max", 10.0)
    checks = [
        _le("N_s", N, n_max),
        check("sandwich holds at (B_s, N_s)", N, math.isfinite(N) and sandwich_holds(rho, s, B, N * (1 + 1e-12), grid)),
    ]
    result = {"s": s, "B_s": B, "N_s": N, "domain": [float(g[0]), float(g[-1])]}
    return result, checks, (("x", "ratio"), list(zip(g, ratio)))


def _exact_poisson(rho, fn, x_max):
    P, tail = discretize(rho, x_max)
    g, mean = fc.poisson_exact(P, fc.ReturnSet.from_indices(P.n, [0]), fn(np.arange(x_max + 1)))
    return P, g, mean, tail


def cmd_poisson(cfg):
    p = cfg["params"]
    rho = StepDistribution.from_json(cfg["model"])
    fspec = p.get("f", "identity")
    fn = _function(fspec, "params.f")
    grid = _grid(p.get("grid"), np.arange(21.0))
    sol = ex.poisson_solve(rho, fn, grid, p.get("n_excursions_per_point", 20_000), cfg["seed"],
                           cfg["workers"], n_excursions_kac=p.get("n_excursions", 100_000))
    z = p.get("z", 3.0)
    zg0 = abs(sol.g_hat[0]) / sol.se[0]
    checks = [check("|g(0)|/se", zg0, zg0 <= z, bound=z)]
    inside = ~np.isnan(sol.residual)
    rz = np.abs(sol.residual[inside]) / sol.residual_se[inside]
    checks.append(_le("max residual/se", float(rz.max(initial=0.0)), z))
    g_exact = np.full(grid.size, np.nan)
    result = {"mu_f": sol.mu_f, "mu_se": sol.mu_se, "grid": grid, "g_hat": sol.g_hat, "se": sol.se,
              "residual": sol.residual, "residual_se": sol.residual_se,
              "interp_error_bound": sol.interp_error_bound}
    if "exact_x_max" in p:
        x_max = p["exact_x_max"]
        P, g, mean, tail = _exact_poisson(rho, fn, x_max)
        idx = grid.astype(int)
        if np.any(idx != grid) or idx.max() > x_max:
            raise ConfigInvalid("params.grid: exact comparison needs integer points <= exact_x_max")
        g_exact = g[idx]
        ez = np.abs(sol.g_hat - g_exact) / sol.se
        checks.append(_le("max |g_hat - g_exact|/se", float(ez.max()), z))
        res = g - P.entries @ g - (fn(np.arange(x_max + 1)) - mean)
        checks.append(_le("exact residual sup-norm", float(np.abs(res).max()), 1e-9))
        result.update({"g_exact": g_exact, "mu_f_exact": mean, "truncation_tail_bound": tail})
    rows = list(zip(grid, sol.g_hat, sol.se, sol.residual, sol.residual_se, g_exact))
    return result, checks, (("x", "g_hat", "se", "residual", "residual_se", "g_exact"), rows)


def cmd_clt(cfg):
    p = cfg["params"]
    rho = StepDistribution.from_json(cfg["model"])
    fn = _function(p.get("f", "indicator_zero"), "params.f")
    g = None
    if "exact_x_max" in p:
        x_max = p["exact_x_max"]
        _, gv, _, _ = _exact_poisson(rho, fn, x_max)
        # the walk can leave the truncation window; extend g linearly there
        g = ex.Interpolant(np.arange(x_max + 1.0), gv)
    lil_window = tuple(p.get("lil_window", (10**5, 10**7)))
    rep = ex.clt_experiment(rho, fn, p.get("x0", 0.0), p.get("n_steps", 10**7),
                            p.get("batch_size", 10**4), cfg["seed"], g=g,
                            alpha=p.get("alpha", 0.5), eps=p.get("eps", 0.1),
                            lil_window=lil_window)
    tol = p.get("sigma2_rel_tol", 0.05)
    checks = [_le("sigma2_n relative change over last doubling", rep.sigma2_rel_change, tol)]
    if not rep.degenerate:
        kmin = p.get("ks_p_min", 0.01)
        checks.append(check("KS p-value of batch means", rep.ks_p, rep.ks_p > kmin, bound=kmin))
    td = rep.tail_decay
    checks.append(check("tail decay last/first quarter", td["last_quarter_max"],
                        td["last_quarter_max"] <= 0.5 * td["first_quarter_max"],
                        bound=0.5 * td["first_quarter_max"]))
    if rep.lindeberg and not rep.degenerate:
        last = rep.lindeberg[-1]
        bound = 0.01 * rep.sigma2_limit
        checks.append(_le(f"Lindeberg statistic at n={last[0]}", last[2], bound))
    if not rep.degenerate:
        checks.append(check("LIL max in [0.5, 1.5]", rep.lil_max, 0.5 <= rep.lil_max <= 1.5,
                            hard=False, bound=[0.5, 1.5]))
    result = {k: getattr(rep, k) for k in (
        "n_steps", "batch_size", "mu_hat", "mu_se", "n_cycles", "sigma2_n", "sigma2_limit",
        "sigma2_rel_change", "sigma2_batch_means", "degenerate", "ks_stat", "ks_p",
        "lil_max", "lil_min", "lil_window", "lindeberg", "tail_decay")}
    return result, checks, (("n", "sigma2_n", "L_n"), rep.series_rows())


def cmd_phi_moment(cfg):
    p = cfg["params"]
    rho = StepDistribution.from_json(cfg["model"])
    phi = p.get("phi", "linear")
    phi_arg = ("exponential", phi["exponential"]) if isinstance(phi, dict) else phi
    x = p.get("x", 0.0)
    e = ex.phi_moment(rho, x, phi_arg, p.get("n_excursions", 100_000), cfg["seed"], cfg["workers"])
    checks = [check("estimate finite", e.value, math.isfinite(e.value) and math.isfinite(e.se))]
    lab = _label(phi)
    return ({"x": x, "phi": phi, "estimate": e.value, "se": e.se}, checks,
            (("x", "phi", "estimate", "se"), [(x, lab, e.value, e.se)]))


HANDLERS = {
    "verify-finite": cmd_verify_finite,
    "invariant": cmd_invariant,
    "kac": cmd_kac,
    "bijection": cmd_bijection,
    "drift-check": cmd_drift_check,
    "sandwich": cmd_sandwich,
    "poisson": cmd_poisson,
    "clt": cmd_clt,
    "phi-moment": cmd_phi_moment,
}


# -- serialization -------------------------------------------------------------


def _plain(v):
    """JSON-safe copy; non-finite floats become the strings "nan", "inf", "-inf"."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def to_json(report):
    return json.dumps(_plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def to_csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in _plain(list(r))])
    return buf.getvalue()


def summary_line(c):
    tag = "PASS" if c["pass"] else "FAIL"
    if not c["hard"]:
        tag += " (soft)"
    v = c["value"]
    val = f"{v:.6g}" if isinstance(v, (float, int)) else str(v)
    return f"{tag}  {c['name']}: {val}"


def run(command, cfg):
    """Execute a resolved config.

    Returns
    -------
    report : dict
    csv_table : (header, rows)
    exit_code : int
    """
    result, checks, table = HANDLERS[command](cfg)
    ok = all(c["pass"] for c in checks if c["hard"])
    report = {"tool": "induct-mc", "version": __version__, "command": command, "config": cfg,
              "result": result, "checks": checks, "pass": ok}
    return report, table, 0 if ok else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="induct-mc", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="path to a JSON experiment config")
    ap.add_argument("--seed", type=int, help=f"overrides the config seed (default: ${SEED_ENV})")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", help="report path (default: stdout)")
    ap.add_argument("--format", choices=("json", "csv"))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as e:
                raise ConfigInvalid(f"<root>: not valid JSON ({e})") from None
        cfg = resolve(args.command, raw, args.seed, args.workers, args.out, args.format)
        report, table, code = run(args.command, cfg)
    except (InductMCError, ValueError, OSError, RuntimeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    text = to_json(report) if cfg["output"]["format"] == "json" else to_csv(*table)
    path = cfg["output"].get("path")
    log = sys.stdout if path else sys.stderr
    for c in report["checks"]:
        print(summary_line(c), file=log)
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
