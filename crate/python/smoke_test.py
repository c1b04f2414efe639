"""Smoke test for the locsamp_py extension module.

Build the module first:

    cargo build --release -p locsamp-python

then run this script with any Python >= 3.9:

    python3 python/smoke_test.py
"""

import importlib.util
import math
import pathlib
import statistics
import sys


def load_module():
    root = pathlib.Path(__file__).resolve().parent.parent
    names = ["liblocsamp_py.so", "locsamp_py.so", "locsamp_py.pyd"]
    candidates = [
        root / "target" / profile / name
        for profile in ("release", "debug")
        for name in names
    ]
    for path in candidates:
        if path.exists():
            spec = importlib.util.spec_from_file_location("locsamp_py", path)
            module = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(module)
            print(f"loaded {path}")
            return module
    sys.exit(
        "locsamp_py not built; run `cargo build --release -p locsamp-python` first"
    )


def check(name, ok, detail=""):
    tag = "ok" if ok else "FAIL"
    print(f"  [{tag}] {name}" + (f": {detail}" if detail else ""))
    if not ok:
        raise SystemExit(f"smoke test failed at: {name}")


def main():
    lp = load_module()

    print("potential construction and queries")
    gauss = lp.Potential.gaussian(2)
    check("gaussian dim", gauss.dim == 2)
    check("gaussian smoothness", gauss.smoothness == 1.0)
    v = gauss.eval([3.0, 4.0])
    check("gaussian eval", abs(v - 12.5) < 1e-12, f"V(3,4)={v}")
    g = gauss.grad([3.0, 4.0])
    check("gaussian grad", g == [3.0, 4.0])
    vq, gq = gauss.queries()
    check("query counting", (vq, gq) == (1, 1), f"value={vq} gradient={gq}")
    gauss.reset_queries()
    check("query reset", gauss.queries() == (0, 0))

    quad = lp.Potential.quadratic([0.5, -0.5], [2.0, 3.0])
    check("quadratic smoothness", quad.smoothness == 3.0)
    check(
        "quadratic minimum",
        abs(quad.eval([0.5, -0.5])) < 1e-12,
    )

    mix = lp.Potential.mixture([0.5, 0.5], [[-1.0], [1.0]])
    check("mixture dim", mix.dim == 1)
    check(
        "mixture symmetry",
        abs(mix.eval([0.7]) - mix.eval([-0.7])) < 1e-12,
    )

    print("restricted Gaussian oracle")
    # V = x^2/2 restricted by center 1, sigma2 = 0.25: posterior is
    # N(0.8, 0.2).
    one_d = lp.Potential.gaussian(1)
    draws = [
        lp.rgo_sample(one_d, [1.0], 0.25, seed)["sample"][0]
        for seed in range(4000)
    ]
    mean = statistics.fmean(draws)
    var = statistics.variance(draws)
    check("rgo mean", abs(mean - 0.8) < 0.03, f"mean={mean:.4f} vs 0.8")
    check("rgo variance", abs(var - 0.2) < 0.03, f"var={var:.4f} vs 0.2")

    print("late-initialized dynamics")
    s0 = lp.derive_s0(0.5, 1.0, 1, 1.0)
    check("derive_s0 in range", 0.0 < s0 < 1.0, f"s0={s0:.3e}")
    run = lp.run_late_init(one_d, 0.3, seed=7)
    check("run has sample", len(run["sample"]) == 1)
    check("run truncation flagged", run["k_truncated"] is True)
    check(
        "run stops at poissonized time",
        run["executed_iterations"] == min(64, run["poisson_draw"]),
        f'executed={run["executed_iterations"]} draw={run["poisson_draw"]}',
    )
    check(
        "run query accounting",
        run["value_queries"] > 0 and run["gradient_queries"] > 0,
    )

    batch = lp.sample_batch(one_d, 0.3, chains=2, runs=3, seed=11, k_cap=8)
    check("batch size", len(batch) == 6)
    again = lp.sample_batch(one_d, 0.3, chains=2, runs=3, seed=11, k_cap=8)
    check(
        "batch determinism",
        [r["sample"] for r in batch] == [r["sample"] for r in again],
    )
    wide = lp.sample_batch(one_d, 0.3, chains=2, runs=5, seed=11, k_cap=8)
    check(
        "per-run stream stability",
        batch[4]["sample"] == wide[6]["sample"],
        "(chain 1, run 1) unchanged when runs grows",
    )

    samples = [
        r["sample"][0]
        for r in lp.sample_batch(one_d, 0.2, chains=1, runs=3000, seed=3)
    ]
    mean = statistics.fmean(samples)
    var = statistics.variance(samples)
    check("stationary mean", abs(mean) < 0.06, f"mean={mean:.4f} vs 0")
    check("stationary variance", abs(var - 1.0) < 0.08, f"var={var:.4f} vs 1")

    print("bound calculators")
    b = lp.pi_bound("mixture_identity", radius=1.0)
    check(
        "mixture identity at R=1",
        abs(b["value"] - math.e) < 1e-12,
        f'value={b["value"]:.6f} vs e',
    )
    b = lp.pi_bound("conservation", theta=1.0, t=2.0)
    check("conservation e^2", abs(b["value"] - math.e**2) < 1e-12)
    b = lp.pi_bound("rgd_walk", s0=1.0, t=1.0, l_bar=0.0)
    check("rgd walk flat profile", abs(b["value"] - 2.0) < 1e-12)
    # "lambda" is a Python keyword, hence the dict splat.
    b = lp.pi_bound("subgaussian_initial", s=1.0, **{"lambda": 1.0})
    check(
        "subgaussian past threshold is infinite",
        b["value"] is None and "threshold" in b["reason"],
        f'reason={b["reason"]}',
    )
    b = lp.pi_bound("subgaussian_initial", s=0.1, **{"lambda": 1.0})
    expected = 1.0 / (2.0 - math.exp(0.4))
    check("subgaussian finite branch", abs(b["value"] - expected) < 1e-12)
    b = lp.pi_bound("subgaussian_final", **{"lambda": 0.2}, smoothness=1.0)
    check("subgaussian final finite", b["value"] is not None and b["value"] > 0)
    b = lp.pi_bound("mixture_general", radius=2.0, sigma_scale=4.0, dim=3)
    check("mixture general 4e", abs(b["value"] - 4.0 * math.e) < 1e-12)
    try:
        lp.pi_bound("no_such_formula")
        check("unknown formula rejected", False)
    except ValueError as e:
        check("unknown formula rejected", "unknown bound kind" in str(e))

    lb = lp.rayleigh_lower_bound_two_point(1.0)
    check(
        "rayleigh sandwich at R=1",
        1.2 < lb <= math.e + 1e-9,
        f"lb={lb:.4f} in (1.2, e]",
    )

    print("verification battery")
    records = lp.identity_battery()
    failed = [r["check"] for r in records if not r["pass"]]
    check(
        "identity battery all pass",
        len(records) >= 30 and not failed,
        f"{len(records)} checks, failures={failed}",
    )

    tail = lp.poisson_tail(20.0, 5.0)
    check(
        "poisson tail bound",
        tail["pass"] and tail["exact"] <= tail["bound"],
        f'exact={tail["exact"]:.4e} bound={tail["bound"]:.4e}',
    )

    print("all smoke tests passed")


if __name__ == "__main__":
    main()
