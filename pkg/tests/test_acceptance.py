"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from induct_mc import cli
from induct_mc import excursion as ex
from induct_mc import finite_chain as fc
from induct_mc.drift import drift_report, sandwich_constants, DriftFunctionSpec
from induct_mc.lindley import DiscreteMixture, Normal, discretize

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
PM1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))


def announce(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {k:2d}] {'PASS' if ok else 'FAIL'}  {detail}")


def config(name, **over):
    cfg = json.loads((CONFIGS / name).read_text())
    return cli.resolve(cfg["command"], cfg, env={}, **over)


def random_chains(seed, count, n_max=15):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, n_max + 1))
        P = fc.random_irreducible(n, rng)
        Y = fc.ReturnSet.from_indices(n, rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False))
        yield P, Y, rng


@pytest.fixture(scope="module")
def clt_run():
    t0 = time.perf_counter()
    report, _, _ = cli.run("clt", config("clt_pm1.json"))
    return report, time.perf_counter() - t0


def test_criterion_01_operator_identities(capsys):
    t0 = time.perf_counter()
    worst = 0.0
    for P, Y, _ in random_chains(101, 100):
        worst = max(worst, max(fc.check_identities(P, fc.induced_operators(P, Y)).deviations.values()))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 5
    announce(capsys, 1, ok, f"max identity deviation {worst:.2e} over 100 chains, {dt:.2f}s")
    assert ok


def test_criterion_02_worked_example(capsys):
    P = fc.validate_stochastic([[0.5, 0.5], [0.5, 0.5]])
    sys = fc.induced_operators(P, fc.ReturnSet.from_indices(2, [1]))
    mu = fc.invariant_measure(P)
    s_mu = fc.pushforward(mu, sys.S)
    devs = [
        np.abs(sys.R - [[2, 0], [1, 1]]).max(),
        np.abs(sys.S - [[0, 0.5], [0, 0.5]]).max(),
        np.abs(sys.Q - [[0, 1], [0, 1]]).max(),
        np.abs(sys.mean_return - [2, 2]).max(),
        np.abs(s_mu.weights - [0, 0.5]).max(),
        np.abs(fc.pushforward(s_mu, sys.R).weights - mu.weights).max(),
    ]
    ok = max(devs) <= 1e-12
    announce(capsys, 2, ok, f"max deviation from hand solution {max(devs):.2e}")
    assert ok


def test_criterion_03_kac(capsys):
    worst = classical = 0.0
    for P, Y, rng in random_chains(303, 20):
        for f in rng.standard_normal((50, P.n)):
            lhs, rhs = fc.kac_check(P, Y, f)
            worst = max(worst, abs(lhs - rhs))
        a, b = fc.classical_kac(P, Y)
        classical = max(classical, abs(a - b))
    ok = worst <= 1e-10 and classical <= 1e-10
    announce(capsys, 3, ok, f"generalized Kac {worst:.2e}, classical Kac {classical:.2e}")
    assert ok


def test_criterion_04_measure_bijection(capsys):
    worst = 0.0
    for P, Y, _ in random_chains(404, 100):
        rep = fc.measure_bijection_check(P, Y)
        worst = max(worst, rep.s_mu_q_invariance, rep.s_r_nu_minus_nu, rep.r_s_mu_minus_mu)
    ok = worst <= 1e-9
    announce(capsys, 4, ok, f"max bijection deviation {worst:.2e} over 100 chains")
    assert ok


def test_criterion_05_lindley_pm1(capsys):
    t0 = time.perf_counter()
    P, _ = discretize(PM1, 60)
    pi = fc.invariant_measure(P).weights
    k = np.arange(21)
    exact_dev = float(np.abs(pi[:21] - 2.0 ** -(k + 1)).max())
    report, _, _ = cli.run("invariant", config("invariant_pm1.json"))
    est = report["result"]["estimates"]
    batch = ex.sample_excursions(PM1, 0.0, [], 100_000, 42)
    tau = batch.tau.astype(float)
    e_tau, e_se = tau.mean(), tau.std(ddof=1) / np.sqrt(tau.size)
    dt = time.perf_counter() - t0
    z = {
        "pi(0)": abs(est["indicator_zero"]["estimate"] - 0.5) / est["indicator_zero"]["se"],
        "mu(id)": abs(est["identity"]["estimate"] - 1.0) / est["identity"]["se"],
        "E0 tau": abs(e_tau - 2.0) / e_se,
    }
    ok = exact_dev <= 1e-9 and max(z.values()) <= 3 and dt < 10
    zs = ", ".join(f"{k} {v:.2f}" for k, v in z.items())
    announce(capsys, 5, ok, f"pi(k) dev {exact_dev:.1e}; |z|: {zs}; {dt:.2f}s")
    assert ok


def test_criterion_06_poisson(capsys):
    report, _, code = cli.run("poisson", config("poisson_pm1.json"))
    checks = {c["name"]: c["value"] for c in report["checks"]}
    ok = code == 0 and len(checks) == 4
    detail = "; ".join(f"{k} {v:.3g}" for k, v in checks.items())
    announce(capsys, 6, ok, detail)
    assert ok


def test_criterion_07_clt(capsys, clt_run):
    report, dt = clt_run
    r = report["result"]
    t0 = time.perf_counter()
    via_g = ex.sigma2_via_g(PM1, ex.indicator_zero, np.arange(21.0), 100_000, 42)
    dt += time.perf_counter() - t0
    rel_g = abs(via_g.value - r["sigma2_limit"]) / r["sigma2_limit"]
    ok = r["sigma2_rel_change"] < 0.05 and rel_g <= 0.10 and r["ks_p"] > 0.01 and dt < 60
    announce(capsys, 7, ok, f"sigma2 {r['sigma2_limit']:.4f} (last doubling {r['sigma2_rel_change']:.2%}); "
                            f"via g {via_g.value:.4f} ({rel_g:.2%}); KS p {r['ks_p']:.3f}; {dt:.1f}s")
    assert ok


def test_criterion_08_drift_sandwich(capsys):
    n2 = {}
    for name, rho in (("pm1", PM1), ("normal", Normal(-1.0, 1.0))):
        _, n2[name] = sandwich_constants(rho, 2)
    positive = drift_report(Normal(1.0, 1.0), DriftFunctionSpec.power(2))
    ok = all(np.isfinite(v) and v <= 10 for v in n2.values()) and positive.passed is False
    announce(capsys, 8, ok, f"N_2 pm1 {n2['pm1']:.4f}, normal {n2['normal']:.4f}; "
                            f"Normal(+1,1) pass={positive.passed}")
    assert ok


def test_criterion_09_martingale_diagnostics(capsys, clt_run):
    report, _ = clt_run
    r = report["result"]
    lind = {n: v for n, _, v in r["lindeberg"]}
    n_star = min(n for n in lind if n >= 10**6)
    first = lind[min(lind)]
    lind_ok = lind[n_star] < 0.01 * r["sigma2_limit"] and lind[max(lind)] < first
    tail_rep = ex.clt_experiment(PM1, ex.identity, 0.0, 10**7, 10**4, 42, alpha=0.5)
    td = tail_rep.tail_decay
    tail_ok = td["last_quarter_max"] <= 0.5 * td["first_quarter_max"]
    lil = r["lil_max"]
    lil_note = "inside" if 0.5 <= lil <= 1.5 else "OUTSIDE"
    ok = lind_ok and tail_ok
    announce(capsys, 9, ok, f"Lindeberg at n={n_star}: {lind[n_star]:.2e} (first {first:.2e}); tail "
                            f"{td['first_quarter_max']:.2e} -> {td['last_quarter_max']:.2e}; "
                            f"LIL max {lil:.3f} {lil_note} [0.5, 1.5] (soft)")
    assert ok


def test_criterion_10_determinism(capsys, clt_run):
    same = {}
    for name in ("invariant_pm1.json", "poisson_pm1.json", "drift_normal.json", "phi_moment_pm1.json"):
        for workers in (1, 2):
            cfg = config(name, workers=workers)
            a = cli.to_json(cli.run(cfg["command"], cfg)[0])
            b = cli.to_json(cli.run(cfg["command"], json.loads(json.dumps(cfg)))[0])
            same[f"{name}/w{workers}"] = a == b
    clt_again, _, _ = cli.run("clt", config("clt_pm1.json"))
    same["clt_pm1.json/w1"] = cli.to_json(clt_again) == cli.to_json(clt_run[0])
    ok = all(same.values())
    announce(capsys, 10, ok, f"{sum(same.values())}/{len(same)} randomized reports byte-identical on rerun")
    assert ok
