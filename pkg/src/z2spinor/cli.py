"""Command-line front end: experiment suites with deterministic reports.

Every suite derives its randomness from a counter-based generator keyed by
(seed, trial_id), so parallel and serial runs agree and a fixed seed gives
byte-identical CSV output.  Reports are a machine-readable ``report.json``
(sorted keys, config echo included) plus per-suite CSV files; exit status 0
means every check passed, 1 means a check failed, 2 means the configuration
was rejected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import cylinder, deform, fredholm
from ._backend import BACKEND
from .fourier import TruncatedFourierSeries

COMMANDS = ("modes", "index-scan", "squeeze-demo", "deform", "iterate", "estimates")

DEFAULTS = {
    "seed": 0,
    "trials": 50,
    "max_symbol_band": 4,
    "tau_min": 0.1,
    "radius": 1.0,
    "k_max": 5,
    "l_max": 5,
    "grid_points": 512,
    "frak_r": 0.2,
    "T": 16.0,
    "P": 2.0,
    "s": 1e-3,
    "kappa0": 1.0,
    "kappa1": 4.0,
    "steps": 8,
    "pert_strength": 0.05,
    "strict": False,
    "terms": [],
}


class ConfigError(ValueError):
    pass


def validate_config(raw: str | dict, strict: bool = False) -> dict:
    """Parse, default and cross-check an experiment configuration.

    The strict regime enforces the full contraction window T > 512 and
    P in (T^{1/8} + 1, T^{1/5}); the relaxed default accepts T >= 8 with
    1 < P < sqrt(T) and records the regime in the report.
    """
    cfg = dict(DEFAULTS)
    if isinstance(raw, str):
        try:
            data = json.loads(raw) if raw.strip() else {}
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    else:
        data = dict(raw)
    unknown = set(data) - set(cfg)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg.update(data)
    cfg["strict"] = bool(cfg["strict"]) or strict

    if cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if not 0 < cfg["frak_r"] <= cfg["radius"] / 4:
        raise ConfigError(
            f"frak_r = {cfg['frak_r']} violates the tube constraint frak_r <= R/4 = {cfg['radius'] / 4}"
        )
    T, P = float(cfg["T"]), float(cfg["P"])
    lo, hi = T ** 0.125 + 1.0, T ** 0.2
    if cfg["strict"]:
        if T <= 512:
            raise ConfigError(
                f"strict regime requires T > 512 (the window (T^(1/8)+1, T^(1/5)) "
                f"= ({lo:.3f}, {hi:.3f}) is empty below that); rerun without --strict for the relaxed regime"
            )
        if not lo < P < hi:
            raise ConfigError(
                f"strict regime requires P in (T^(1/8)+1, T^(1/5)) = ({lo:.3f}, {hi:.3f}); got P = {P}"
            )
    else:
        if T < 8:
            raise ConfigError("relaxed regime still requires T >= 8")
        if not 1.0 < P < T**0.5:
            raise ConfigError(
                f"relaxed regime requires 1 < P < sqrt(T) = {T**0.5:.3f}; got P = {P}"
            )
    if cfg["s"] < 0:
        raise ConfigError("s must be nonnegative")
    return cfg


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def emit_report(out_dir: Path, name: str, config: dict, checks: dict, tables: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    for table, (header, rows) in tables.items():
        emit_csv(out_dir / f"{table}.csv", header, rows)
    report = {
        "suite": name,
        "backend": BACKEND,
        "config": config,
        "checks": checks,
        "passed": all(c["pass"] for c in checks.values()),
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1, default=float) + "\n"
    )
    return report


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) + (np.uint64(trial) << np.uint64(32))))


# -- suites -------------------------------------------------------------------


def run_index_scan(cfg: dict, out: Path) -> dict:
    rows = []
    checks_ok = True
    ker_ok = True
    for trial in range(cfg["trials"]):
        rng = _trial_rng(cfg["seed"], trial)
        M = int(rng.integers(0, cfg["max_symbol_band"] + 1))
        sym = fredholm.random_symbol_pair(rng, M, cfg["tau_min"])
        L = 8 * M + 8
        for band in (L, 2 * L):
            diag = fredholm.index_diagnostics(sym, band, check_bands=(band == L))
            rows.append(
                [
                    trial,
                    M,
                    band,
                    sym.tau,
                    diag.dim_ker,
                    diag.dim_coker,
                    diag.index,
                    diag.sigma_min_positive,
                    diag.stable,
                ]
            )
            checks_ok &= diag.index == 0
            ker_ok &= diag.dim_ker <= 4 * M + 2
    checks = {
        "index_zero_all_trials": {"pass": bool(checks_ok)},
        "kernel_bound_4M_plus_2": {"pass": bool(ker_ok)},
    }
    tables = {
        "index_scan": (
            [
                "trial_id",
                "M",
                "L",
                "tau",
                "dim_ker",
                "dim_coker",
                "index",
                "sigma_min_positive",
                "stable",
            ],
            rows,
        )
    }
    return emit_report(out, "index-scan", cfg, checks, tables)


def run_modes(cfg: dict, out: Path) -> dict:
    geo = cylinder.CylinderGeometry.make(cfg["radius"], cfg["k_max"], cfg["l_max"])
    terms = {}
    for t in cfg["terms"]:
        terms[(int(t["k"]), int(t["l"]))] = cylinder.ModeAmplitudes(
            complex(*t.get("u_plus", [0, 0])),
            complex(*t.get("u_minus", [0, 0])),
            cylinder.ProfileClass(t.get("class", "L2")),
        )
    exp = cylinder.SpinorModeExpansion(geo, terms)
    rows = []
    for (k, l), amp in sorted(exp.terms.items()):
        for r in (cfg["radius"], cfg["radius"] / 2, cfg["radius"] / 4):
            single = cylinder.SpinorModeExpansion(geo, {(k, l): amp})
            rows.append([k, l, r, cylinder.cyl_norm(single, r) ** 2])
    res_geo = cylinder.residual_geometry(cfg["radius"], cfg["k_max"], cfg["l_max"], cfg["grid_points"])
    worst = 0.0
    for (k, l), amp in exp.terms.items():
        worst = max(
            worst,
            cylinder.mode_residual(k, float(l), amp.u_plus, amp.u_minus, res_geo),
        )
    checks = {"harmonicity_residual_1e8": {"pass": worst <= 1e-8, "worst": worst}}
    tables = {"mode_norms": (["k", "l", "r", "norm2"], rows)}
    return emit_report(out, "modes", cfg, checks, tables)


def run_squeeze_demo(cfg: dict, out: Path) -> dict:
    rows = []
    ok = True
    trials = max(cfg["trials"], 20)
    for trial in range(trials):
        rng = _trial_rng(cfg["seed"], trial)
        p = int(rng.integers(1, 5))

        def rand_pair():
            return fredholm.ComplexPair(
                complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
            )

        if trial < max(5, trials // 4):
            first = rand_pair()
            from .fourier import spouse

            tup = tuple([first] + [rand_pair() for _ in range(max(p - 2, 0))]) + (
                spouse(first),
            )
        else:
            tup = tuple(rand_pair() for _ in range(p))
        b, b_star = fredholm.squeeze(tup)
        det = fredholm.frontier_determinant(b)
        scale = max(x.norm() for x in tup) ** 2
        rows.append([trial, len(tup), abs(det), scale])
        ok &= abs(det) >= 1e-10 * scale
    checks = {"frontier_determinant_positive": {"pass": bool(ok)}}
    tables = {"squeeze": (["trial_id", "p", "abs_det", "scale"], rows)}
    return emit_report(out, "squeeze-demo", cfg, checks, tables)


def run_deform(cfg: dict, out: Path) -> dict:
    rows = []
    ok = True
    for trial in range(min(cfg["trials"], 10)):
        rng = _trial_rng(cfg["seed"], trial)
        M = int(rng.integers(0, 3))
        sym = fredholm.random_symbol_pair(rng, M, max(cfg["tau_min"], 0.2))
        L = 4

        def rand_series(L):
            return TruncatedFourierSeries(
                L, rng.normal(size=2 * L + 1) + 1j * rng.normal(size=2 * L + 1)
            )

        from .fourier import aps, convolve

        eta_star = rand_series(L)
        c_star = rand_series(L)
        hp = -0.5 * (convolve(sym.d_plus, eta_star) + c_star)
        hm = -0.5 * (convolve(sym.d_minus, eta_star.conj()) + aps(c_star))
        H0 = [b[1] for b in fredholm.cokernel_complement(sym, 8 * M + 8) if b[1] is not None]
        sol = deform.solve_leading_correction(sym, hp, hm, H0)
        scale = max(hp.norm(), hm.norm(), 1.0)
        rows.append([trial, M, sym.tau, sol.residual_plus, sol.residual_minus])
        ok &= sol.residual_plus <= 1e-9 * scale and sol.residual_minus <= 1e-9 * scale
    checks = {"leading_correction_residuals": {"pass": bool(ok)}}
    tables = {
        "deform": (["trial_id", "M", "tau", "residual_plus", "residual_minus"], rows)
    }
    return emit_report(out, "deform", cfg, checks, tables)


def run_iterate(cfg: dict, out: Path) -> dict:
    S = TruncatedFourierSeries.from_dict
    zero = TruncatedFourierSeries.zero()
    frame = deform.PerturbationFrame(
        cfg["frak_r"],
        cfg["T"],
        cfg["s"],
        S({1: 0.2 * cfg["kappa0"] * cfg["frak_r"] ** 2}),
        cfg["kappa0"],
        cfg["kappa1"],
        ambient_radius=cfg["radius"],
    )
    one = S({0: 1})
    sym = fredholm.SymbolPair(one, one)
    init = deform.InitialDefect(S({1: 0.01}), zero, zero, zero, ())
    ledger = deform.iterate(
        init,
        sym,
        frame,
        cfg["steps"],
        cfg["P"],
        pert_strength=cfg["pert_strength"],
    )
    rows = [
        [
            r.i,
            r.norm_A,
            r.bound_A,
            r.norm_B,
            r.bound_B,
            r.norm_C,
            r.bound_C,
            r.eta_c1_proxy,
            r.ratio_fit,
        ]
        for r in ledger.rows
    ]
    fit = ledger.eta_ratio_fit()
    target = cfg["P"] / cfg["T"]
    checks = {
        "budgets_hold": {"pass": ledger.ok, "failure_index": ledger.failure_index},
        "eta_ratio_fit": {"pass": fit <= 1.5 * target, "fit": fit, "target": target},
        "regime": {
            "pass": True,
            "strict": cfg["strict"],
            "window_strict": [cfg["T"] ** 0.125 + 1, cfg["T"] ** 0.2],
        },
    }
    tables = {
        "ledger": (
            [
                "i",
                "norm_A",
                "bound_A",
                "norm_B",
                "bound_B",
                "norm_C",
                "bound_C",
                "eta_c1_proxy",
                "ratio_fit",
            ],
            rows,
        )
    }
    return emit_report(out, "iterate", cfg, checks, tables)


def run_estimates(cfg: dict, out: Path) -> dict:
    geo = cylinder.CylinderGeometry.make(cfg["radius"], 4, 4)
    rows = []
    worst_margin = 0.0
    worst_pc = 0.0
    worst_decay = 0.0
    for trial in range(20):
        rng = _trial_rng(cfg["seed"], trial)
        for cls in (cylinder.ProfileClass.L2_KERNEL, cylinder.ProfileClass.L21_KERNEL):
            terms = {}
            for _ in range(5):
                while True:
                    k = int(rng.integers(-4, 5))
                    l = int(rng.integers(-4, 5))
                    if cls is cylinder.ProfileClass.L2_KERNEL:
                        up = complex(rng.normal(), rng.normal()) if k >= 0 else 0j
                        um = complex(rng.normal(), rng.normal()) if k <= 0 else 0j
                    else:
                        up = complex(rng.normal(), rng.normal()) if k >= 1 else 0j
                        um = complex(rng.normal(), rng.normal()) if k <= -1 else 0j
                    if up or um:
                        break
                terms[(k, l)] = cylinder.ModeAmplitudes(up, um, cls)
            exp = cylinder.SpinorModeExpansion(geo, terms)
            for kd in range(4):
                m = cylinder.growth_bound_margin(exp, kd)
                worst_margin = max(worst_margin, m)
                rows.append([trial, cls.value, f"growth_k{kd}", m])
            if cls is cylinder.ProfileClass.L21_KERNEL:
                pc = cylinder.poincare_check(exp, cfg["radius"])
                worst_pc = max(worst_pc, pc)
                rows.append([trial, cls.value, "poincare", pc])
                for r in (0.5, 0.25, 0.125):
                    d = cylinder.decay_ratio(exp, r * cfg["radius"])
                    worst_decay = max(worst_decay, d)
                    rows.append([trial, cls.value, f"decay_r{r}", d])
    checks = {
        "growth_margins_le_1": {"pass": worst_margin <= 1.0, "worst": worst_margin},
        "poincare_le_1": {"pass": worst_pc <= 1.0, "worst": worst_pc},
        "decay_bounded": {"pass": worst_decay <= 10.0, "worst": worst_decay},
    }
    tables = {"estimates": (["trial_id", "class", "check", "value"], rows)}
    return emit_report(out, "estimates", cfg, checks, tables)


RUNNERS = {
    "modes": run_modes,
    "index-scan": run_index_scan,
    "squeeze-demo": run_squeeze_demo,
    "deform": run_deform,
    "iterate": run_iterate,
    "estimates": run_estimates,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="z2spinor",
        description="spectral suites for cylinder spinor modes, the symbol operator and the deformation iteration",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=str, default=None, help="JSON config file")
    parser.add_argument("--out", type=str, default="z2spinor-out")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--strict", action="store_true")
    args = parser.parse_args(argv)

    raw = "{}"
    if args.config:
        try:
            raw = Path(args.config).read_text()
        except OSError as e:
            print(f"error: cannot read config: {e}", file=sys.stderr)
            return 2
    try:
        cfg = validate_config(raw, strict=args.strict)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed

    report = RUNNERS[args.command](cfg, Path(args.out))
    for name, chk in report["checks"].items():
        status = "pass" if chk["pass"] else "FAIL"
        print(f"{name}: {status}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
