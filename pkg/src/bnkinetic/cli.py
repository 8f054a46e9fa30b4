"""Command-line surface: ``bnk <command> --config FILE --out DIR``.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error,
3 blow-up halt, 4 invariant or check failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .collision_op import QuadratureSpec, q_plus, q_plus_carleman
from .config import RunConfig, load_config, parse_config
from .criteria import (
    critical_temperature,
    equilibrium_fit,
    global_criterion,
    kinetic_temperature,
    monitor_bootstrap,
    subcritical_check,
)
from .errors import BNKError, ConfigError
from .euler_scheme import TimeSeries, continue_run, verify_scheme_invariants
from .grid_state import (
    Distribution,
    HyperplaneSample,
    VelocityGrid,
    moment,
    momentum,
    read_snapshot,
    sup_norms,
    write_snapshot,
)
from .inequality_lab import (
    PovznerCase,
    check_decay_ode,
    check_delta_concentration,
    check_integration_lemma,
    check_povzner,
    check_sphere_bound,
)
from .kernel_geometry import KernelParams

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_BLOWUP, EXIT_INVARIANT = 0, 1, 2, 3, 4

CSV_COLUMNS = ("t", "M0", "M1x", "M1y", "M1z", "M2", "M2pg", "entropy", "linf", "gamma_conc",
               "drift_mass_weak", "drift_energy_weak", "drift_mass_strong", "drift_energy_strong")

WEAK_TOL = 1e-9
# soft per-step entropy check, relative to |S|
ENTROPY_TOL = 1e-6


def _num(x, precision: int) -> str:
    x = float(x)
    if x == 0.0:
        return "0"
    return f"{x:.{precision}g}"


def write_report(path: Path, items: dict, precision: int = 15) -> None:
    lines = []
    for k, v in items.items():
        if isinstance(v, (bool, np.bool_)):
            v = "true" if v else "false"
        elif isinstance(v, (float, np.floating)):
            v = _num(v, precision)
        lines.append(f"{k}={v}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def timeseries_rows(series: TimeSeries, precision: int = 15) -> list[str]:
    rows = [",".join(CSV_COLUMNS)]
    for t, rec, dr in zip(series.times, series.records, series.drift):
        m1 = list(np.asarray(rec.m1, float)[:3]) + [0.0] * max(0, 3 - len(rec.m1))
        vals = [t, rec.m0, *m1, rec.m2, rec.m2_plus_gamma, rec.entropy, rec.linf, rec.gamma_conc,
                dr.mass_weak, dr.energy_weak, dr.mass_strong, dr.energy_strong]
        rows.append(",".join(_num(v, precision) for v in vals))
    return rows


def write_timeseries(path: Path, series: TimeSeries, precision: int = 15) -> None:
    path.write_text("\n".join(timeseries_rows(series, precision)) + "\n", encoding="utf-8")


def initial_data(cfg: RunConfig) -> Distribution:
    gs, ini = cfg["grid"], cfg["initial"]
    grid = VelocityGrid(gs["d"], gs["N"], gs["V"])
    shape = ini["shape"]
    if shape == "zero":
        return Distribution.zeros(grid)
    if shape == "snapshot":
        f, _ = read_snapshot(ini["snapshot"])
        if (f.grid.d, f.grid.N) != (grid.d, grid.N) or f.grid.V != grid.V:
            raise ConfigError("snapshot grid differs from the [grid] section")
        return f
    g = np.exp(-grid.radius2 / (2.0 * ini["temperature"]))
    vals = ini["amplitude"] * g / g.max()
    if shape == "spike":
        w = ini["spike_width"]
        vals = vals + ini["spike_amplitude"] * np.exp(-grid.radius2 / (2.0 * w * w))
    return Distribution(grid, vals)


def _set_threads(requested: Optional[int]) -> int:
    import numba

    k = requested or int(os.environ.get("BNK_THREADS", "0") or 0)
    top = numba.config.NUMBA_NUM_THREADS
    k = top if k <= 0 else min(k, top)
    numba.set_num_threads(k)
    return k


def _sample(cfg: RunConfig) -> HyperplaneSample:
    dg = cfg["diagnostics"]
    return HyperplaneSample(dg["hyperplane_directions"], dg["hyperplane_offsets"])


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    params = cfg.kernel_params()
    sc, dg, io = cfg["scheme"], cfg["diagnostics"], cfg["io"]
    prec = io["csv_precision"]
    f0 = initial_data(cfg)
    quad = QuadratureSpec.default(params.d, sc["sphere_order"])
    sample = _sample(cfg)
    linf0, _ = sup_norms(f0)
    series = continue_run(f0, params, sc["n"], sc["segments"], quad, dt_fraction=sc["dt_fraction"],
                          ceiling=sc["ceiling_factor"] * linf0 if linf0 > 0 else math.inf, R0=dg["R0"],
                          sample=sample, keep_states=True)
    write_timeseries(out / "timeseries.csv", series, prec)

    every = io["snapshot_every"]
    for k, f in enumerate(series.states):
        if every and k % every == 0:
            write_snapshot(out / f"snapshot_{k:05d}.bnkf", f, params.gamma, params.c_phi)
    write_snapshot(out / "final.bnkf", series.final, params.gamma, params.c_phi)

    inv = verify_scheme_invariants(series, series.states, params=params, s=dg["s"],
                                   strong_tol=dg["strong_tol"], sample=sample)
    last = series.drift[-1]
    weak = max(abs(last.mass_weak), abs(last.momentum_weak), abs(last.energy_weak))
    ent = [r.entropy for r in series.records]
    report = {
        "steps": len(series) - 1,
        "segments_run": len(series.segments),
        "t_final": series.times[-1],
        "blowup": series.flags["blowup"],
        "T_max": series.t_max if series.t_max is not None else "not reached",
        "weak_drift": weak,
        "weak_ok": weak <= WEAK_TOL,
        "entropy_monotone": all(b - a >= -ENTROPY_TOL * abs(a) for a, b in zip(ent, ent[1:])),
    }
    report.update({f"invariant_{k}": v for k, v in inv.as_dict().items()})
    for i, (start, const, dt, r0) in enumerate(series.segments):
        report[f"segment{i}_start_step"] = start
        report[f"segment{i}_delta_n"] = const.delta_n
        report[f"segment{i}_T0"] = const.t0
        report[f"segment{i}_dt"] = dt
    if linf0 > 0:
        crit = monitor_bootstrap(series, global_criterion(f0, params, dg["s"]), f0)
        report.update({f"criterion_{k}": v for k, v in crit.as_dict().items()})
    write_report(out / "invariants.txt", report, prec)
    print(f"steps={report['steps']} t_final={_num(series.times[-1], prec)} blowup={series.flags['blowup']}")

    if series.flags["blowup"]:
        return EXIT_BLOWUP
    # the nodewise conservation drift is an interpolation artifact and is reported, not enforced
    scheme_ok = all((inv.positivity, inv.half_bound, inv.linf_bound, inv.pointwise_iii,
                     inv.hyperplane_bound, inv.hyperplane_iii, inv.moment_envelope, report["weak_ok"]))
    return EXIT_OK if scheme_ok else EXIT_INVARIANT


def cmd_criteria(cfg: RunConfig, out: Path, snapshot: str) -> int:
    f, head = read_snapshot(snapshot)
    base = cfg.kernel_params()
    params = KernelParams(c_phi=head.c_phi, gamma=head.gamma, angular=base.angular, d=head.d)
    m0 = moment(f)
    if not m0 > 0:
        raise BNKError("snapshot has zero mass: criteria need nonzero data")
    m1 = momentum(f)
    u = m1 / m0
    m2 = moment(f, 2.0)
    m2c = m2 - m0 * float(u @ u)
    mode = cfg["mode"]["subcritical"]
    sub, coeff = subcritical_check(m0, m2c, mode, params.d)
    rep = {"M0": m0, "M2": m2, "M2_central": m2c, "subcritical_mode": mode, "subcritical": sub,
           "subcritical_coefficient": coeff}
    if params.d == 3:
        fit = equilibrium_fit(m0, u, m2c)
        rep.update(fit_m0=fit.m0, fit_beta=fit.beta, fit_mu=fit.mu, fit_method=fit.method,
                   fit_iterations=fit.iterations, T_c=critical_temperature(m0), T_kinetic=kinetic_temperature(m0, m2c))
    crit = global_criterion(f, params, cfg["diagnostics"]["s"])
    rep.update({f"criterion_{k}": v for k, v in crit.as_dict().items()})
    prec = cfg["io"]["csv_precision"]
    write_report(out / "criteria.txt", rep, prec)
    r = np.sqrt(f.grid.radius2)
    order = np.argsort(r, kind="stable")
    rows = ["radius,f"] + [f"{_num(r[i], prec)},{_num(f.values[i], prec)}" for i in order]
    (out / "criteria_profile.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"subcritical={sub} condition_i={crit.condition_i} condition_ii={crit.condition_ii}")
    return EXIT_OK


def povzner_cases() -> list[PovznerCase]:
    return [
        PovznerCase.power(0.5),
        PovznerCase.power(-0.5),
        PovznerCase.convex_xphi(np.log1p, label="x*log(1+x)"),
        PovznerCase.affine(1.0, 2.0),
    ]


def cmd_povzner(cfg: RunConfig, out: Path, seed: int) -> int:
    n = cfg["suites"]["povzner_samples"]
    rep, ok = {}, True
    for case in povzner_cases():
        r = check_povzner(case, n, seed, cfg["grid"]["d"])
        ok = ok and r.passed
        rep.update({f"{case.tag}_{k}": v for k, v in r.as_dict().items()})
    rep["seed"] = seed
    rep["passed"] = ok
    write_report(out / "povzner.txt", rep, cfg["io"]["csv_precision"])
    print(f"povzner passed={ok}")
    return EXIT_OK if ok else EXIT_INVARIANT


def _gaussian(d: int, N: int, V: float) -> Distribution:
    g = VelocityGrid(d, N, V)
    return Distribution(g, np.exp(-g.radius2 / 2.0))


def cmd_appendix(cfg: RunConfig, out: Path, seed: int) -> int:
    d, N = cfg["grid"]["d"], cfg["grid"]["N"]
    m = cfg["suites"]["appendix_samples"]
    rep = {"seed": seed}
    a1 = [check_integration_lemma(_gaussian(d, n, 8.0), 1.0, 0.0, 2.0, m, seed).constant for n in (N, 2 * N)]
    a2 = [check_sphere_bound(np.zeros(d), 1.0, 1.0, d, k).constant for k in (m | 1, 2 * m + 1)]
    rep.update(integration_coarse=a1[0], integration_fine=a1[1], integration_stable=abs(a1[1] / a1[0] - 1) <= 0.1,
               potential_coarse=a2[0], potential_fine=a2[1], potential_stable=abs(a2[1] / a2[0] - 1) <= 0.1)
    e1 = np.eye(d)[0]
    sup, c_d = check_delta_concentration(e1, 0.0, 0.5 * e1, 1.0)
    rep.update(delta_sup=sup, delta_constant=c_d, delta_ok=(d != 3) or sup <= 2 * math.pi * 1.05)
    ode = check_decay_ode(1.0, 2.0, 1.0, 1.0, 1.0, np.linspace(0.0, 20.0, m), 5.0)
    rep.update(ode_checked=ode.checked, ode_skipped=ode.skipped, ode_min_margin=ode.min_margin,
               ode_oracle_error=ode.max_oracle_error, ode_holds=ode.holds)
    ok = (all(math.isfinite(x) for x in a1 + a2) and rep["integration_stable"] and rep["potential_stable"]
          and rep["delta_ok"] and ode.holds)
    rep["passed"] = ok
    write_report(out / "appendix.txt", rep, cfg["io"]["csv_precision"])
    print(f"appendix passed={ok}")
    return EXIT_OK if ok else EXIT_INVARIANT


def xcheck_points(d: int, k: int) -> np.ndarray:
    """Fixed off-node evaluation points with radii in [0.3, 2.3]."""
    rng = np.random.default_rng(12345)
    u = rng.standard_normal((k, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * np.linspace(0.3, 2.3, k)[:, None]


def carleman_ladder(params: KernelParams, ladder, V: float, amplitude: float, points: np.ndarray,
                    order: int = 8) -> list[tuple[int, float, float]]:
    """(N, h, max relative gap) between the sigma and hyperplane forms of Q+ on a Gaussian."""
    rows = []
    for N in ladder:
        g = VelocityGrid(params.d, N, V)
        e = np.exp(-g.radius2 / 2.0)
        f = Distribution(g, amplitude * e / e.max())
        a = np.atleast_1d(q_plus(f, points, params, QuadratureSpec.default(params.d, order)))
        b = np.atleast_1d(q_plus_carleman(f, points, params))
        rows.append((N, g.h, float(np.max(np.abs(a - b)) / np.max(np.abs(a)))))
    return rows


def cmd_xcheck(cfg: RunConfig, out: Path) -> int:
    params = cfg.kernel_params()
    su = cfg["suites"]
    pts = xcheck_points(params.d, su["xcheck_points"])
    amp = cfg["initial"]["amplitude"] or 0.05
    rows = carleman_ladder(params, su["xcheck_ladder"], cfg["grid"]["V"], amp, pts, cfg["scheme"]["sphere_order"])
    prec = cfg["io"]["csv_precision"]
    text = ["N,h,rel_gap"] + [f"{n},{_num(h, prec)},{_num(r, prec)}" for n, h, r in rows]
    (out / "xcheck.csv").write_text("\n".join(text) + "\n", encoding="utf-8")
    gaps = [r for _, _, r in rows]
    mono = all(b < a for a, b in zip(gaps, gaps[1:]))
    write_report(out / "xcheck.txt", {"levels": len(rows), "final_gap": gaps[-1], "monotone": mono}, prec)
    print(f"xcheck final_gap={_num(gaps[-1], 6)} monotone={mono}")
    return EXIT_OK


def cmd_snapshot_info(path: str) -> int:
    f, h = read_snapshot(path)
    linf, _ = sup_norms(f)
    print(f"d={h.d} N={h.N} V={h.V!r} gamma={h.gamma!r} c_phi={h.c_phi!r}")
    print(f"M0={moment(f)!r} M2={moment(f, 2.0)!r} linf={linf!r}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bnk", description="Boltzmann-Nordheim grid solver and inequality checks")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "criteria", "povzner", "appendix", "xcheck"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="key = value configuration file")
        s.add_argument("--out", help="output directory (overrides [io] out_dir)")
        s.add_argument("--seed", type=int, help="seed of sampled suites (overrides [run] seed)")
        s.add_argument("--threads", type=int, help="compute threads (falls back to BNK_THREADS)")
        if name == "criteria":
            s.add_argument("snapshot", help="BNKF1 snapshot file")
    s = sub.add_parser("snapshot-info")
    s.add_argument("snapshot")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "snapshot-info":
            return cmd_snapshot_info(args.snapshot)
        cfg = load_config(args.config) if args.config else parse_config("")
        if args.seed is not None:
            cfg = cfg.with_overrides("run", seed=args.seed)
        seed = cfg["run"]["seed"]
        _set_threads(args.threads if args.threads is not None else cfg["run"]["threads"])
        out = Path(args.out or cfg["io"]["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.effective").write_text(cfg.echo(), encoding="utf-8")
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "criteria":
            return cmd_criteria(cfg, out, args.snapshot)
        if args.command == "povzner":
            return cmd_povzner(cfg, out, seed)
        if args.command == "appendix":
            return cmd_appendix(cfg, out, seed)
        return cmd_xcheck(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BNKError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
