"""Command-line front end: analyze, simulate, fit, compare, sweep.

Every CSV written carries a ``# manifest=...`` line naming a JSON manifest
(resolved config, seed, version, command, outputs, wall-clock time) written
next to it. CSV bodies depend only on the config and seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analytic, config, montecarlo
from .blockage import DomainError, FitError, GeneralizedLosBall, fit_3gpp_urban, fit_suburban_exp, los_ball_radius, rst_c
from .geodata import GeometryError
from .quadrature import Quadrature, QuadratureError

log = logging.getLogger("mmwave_coverage")

EXIT_OK, EXIT_GAP, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _grid(spec, default):
    """'start:stop:step' (inclusive) or 'v1,v2,...'."""
    if spec is None:
        spec = default
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        if step <= 0 or stop < start:
            raise UsageError(f"bad grid {spec!r}: need start <= stop and step > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return np.round(start + step * np.arange(n), 12)
    vals = np.array([float(v) for v in spec.split(",") if v.strip()])
    if vals.size == 0 or np.any(np.diff(vals) <= 0):
        raise UsageError(f"bad list {spec!r}: values must be strictly increasing")
    return vals


def _f(x):
    return repr(float(x))


def _manifest_path(out):
    return out.with_name(out.name + ".manifest.json")


def _write_outputs(out, csv_text, scenario, args, started, extra=None):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = _manifest_path(out)
    out.write_text(csv_text)
    doc = {
        "tool": "mmwave-coverage",
        "version": __version__,
        "command": [Path(sys.argv[0]).name] + sys.argv[1:] if args.argv is None else args.argv,
        "seed": getattr(args, "seed", None),
        "config_source": scenario.source if scenario else None,
        "config": scenario.document if scenario else None,
        "resolved_network": scenario.network.to_dict() if scenario else None,
        "fingerprint": scenario.network.fingerprint() if scenario else None,
        "outputs": [str(out)],
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        doc.update(extra)
    manifest.write_text(json.dumps(doc, indent=2, default=float) + "\n")
    return manifest


def _csv(curve, out):
    return curve.to_csv(manifest_ref=_manifest_path(Path(out)).name)


def _scenario(args, **overrides):
    return config.load(args.config, **overrides)


def _quad(scenario, args):
    q = scenario.quadrature
    if getattr(args, "rel_tol", None) is not None:
        q = Quadrature(args.rel_tol, q.abs_tol, q.tail_cutoff, q.max_levels, q.max_doublings)
    return q


# commands -------------------------------------------------------------------


def cmd_analyze(args):
    started = time.perf_counter()
    sc = _scenario(args)
    quad = _quad(sc, args)
    kind = args.kind.upper()
    if kind == "RATE":
        tau = _grid(args.rates_mbps, "0:500:10") * 1e6
        if args.mean_load:
            curve = analytic.rate_coverage_mean_load(sc.network, tau, quad)
        else:
            curve = analytic.rate_coverage(sc.network, tau, quad, args.n_max)
        for w in curve.warnings:
            log.warning(w)
    else:
        t = _grid(args.thresholds_db, "-20:40:1")
        fn = {"SINR": analytic.sinr_coverage, "SNR": analytic.snr_coverage, "SIR": analytic.sir_coverage}[kind]
        curve = fn(sc.network, t, quad)
    _write_outputs(args.out, _csv(curve, args.out), sc, args, started)
    return EXIT_OK


def _sim_overrides(args):
    return dict(snapshots=args.trials, seed=args.seed, sim_radius=getattr(args, "sim_radius", None))


def cmd_simulate(args):
    started = time.perf_counter()
    sc = _scenario(args, **_sim_overrides(args))
    kind = args.kind.upper()
    grid = _grid(args.rates_mbps, "0:500:10") * 1e6 if kind == "RATE" else _grid(args.thresholds_db, "-20:40:1")
    batch = montecarlo.simulate(sc.simulation, args.threads)
    curve = montecarlo.ccdf_from_batch(batch, kind, grid, sc.network.fingerprint())
    extra = {"snapshots": batch.size, "empty_network_resamples": batch.resamples}
    if args.dump_snapshots:
        dump = Path(args.out).with_suffix(".snapshots.jsonl")
        with open(dump, "w") as fh:
            montecarlo.dump_snapshots(sc.simulation, args.dump_snapshots, fh)
        extra["snapshot_dump"] = str(dump)
    _write_outputs(args.out, _csv(curve, args.out), sc, args, started, extra)
    return EXIT_OK


def _gap_rows(an, mc_curve, tol):
    rows = []
    for t, pa, pm, lo, hi in zip(an.thresholds, an.probs, mc_curve.probs, mc_curve.ci_low, mc_curve.ci_high):
        gap = abs(pa - pm)
        ok = (lo <= pa <= hi) if tol is None else gap <= max(tol, 0.5 * (hi - lo))
        rows.append((t, pa, pm, gap, 0.5 * (hi - lo), lo, hi, ok))
    return rows


def cmd_compare(args):
    started = time.perf_counter()
    sc = _scenario(args, **_sim_overrides(args))
    quad = _quad(sc, args)
    kind = args.kind.upper()
    t = _grid(args.thresholds_db, "-20:40:1")
    fn = {"SINR": analytic.sinr_coverage, "SNR": analytic.snr_coverage, "SIR": analytic.sir_coverage}[kind]
    an = fn(sc.network, t, quad)
    batch = montecarlo.simulate(sc.simulation if kind != "SIR" else sc.simulation.with_(network=sc.network.with_(noise_power=0.0)), args.threads)
    mc_curve = montecarlo.ccdf_from_batch(batch, kind, t)
    fad = sc.network.fading
    exact = fad.nu_los == 1 and fad.nu_nlos == 1
    if args.tolerance == "auto":
        tol = None if exact else 0.03
    elif args.tolerance == "ci":
        tol = None
    else:
        tol = float(args.tolerance)
    rows = _gap_rows(an, mc_curve, tol)
    lines = [f"# manifest={_manifest_path(Path(args.out)).name} fingerprint={sc.network.fingerprint()}"]
    lines.append("kind,threshold,analytic,monte_carlo,abs_gap,ci_half_width,ci_low,ci_high,ok")
    for t_, pa, pm, gap, hw, lo, hi, ok in rows:
        lines.append(",".join([kind] + [_f(v) for v in (t_, pa, pm, gap, hw, lo, hi)] + [str(int(ok))]))
    failed = [r for r in rows if not r[-1]]
    max_gap = max(r[3] for r in rows)
    rule = "inside 99% Wilson interval" if tol is None else f"gap <= max({tol}, CI half-width)"
    lines.append(f"# max_abs_gap={_f(max_gap)} failing_thresholds={len(failed)} rule={rule}")
    _write_outputs(
        args.out, "\n".join(lines) + "\n", sc, args, started,
        {"max_abs_gap": float(max_gap), "failing_thresholds": [float(r[0]) for r in failed], "rule": rule},
    )
    print(f"max |analytic - monte carlo| = {max_gap:.4g}; {len(failed)} of {len(rows)} thresholds fail ({rule})")
    return EXIT_OK if not failed else EXIT_GAP


def cmd_sweep(args):
    started = time.perf_counter()
    if args.param != "density":
        raise UsageError("only --param density is supported")
    sc = _scenario(args, snapshots=args.trials, seed=args.seed)
    if args.isd_m:
        isds = [float(v) for v in args.isd_m.split(",")]
        dens = [montecarlo.density_for_isd(v) for v in isds]
    elif args.values:
        dens = [float(v) * 1e-6 for v in args.values.split(",")]
    else:
        raise UsageError("give --values (per km^2) or --isd-m")
    pts = montecarlo.density_sweep(sc.simulation, dens, args.metric, args.threshold_db, args.threads, args.sim_radius)
    lines = [f"# manifest={_manifest_path(Path(args.out)).name} fingerprint={sc.network.fingerprint()}"]
    lines.append("param,density_per_km2,isd_m,metric,threshold_db,probability,ci_half_width,ci_low,ci_high,sim_radius_m")
    for p in pts:
        vals = [p.density * 1e6, p.isd, args.metric, args.threshold_db, p.value, 0.5 * (p.ci_high - p.ci_low), p.ci_low, p.ci_high, p.sim_radius]
        lines.append(",".join(["density"] + [v if isinstance(v, str) else _f(v) for v in vals]))
    _write_outputs(args.out, "\n".join(lines) + "\n", sc, args, started)
    return EXIT_OK


def _goodness(model, table):
    d = np.asarray(table.distances)
    p = np.asarray(table.probs)
    return 100.0 * float(np.sqrt(np.mean((model(d) - p) ** 2)))


def cmd_fit(args):
    from . import geodata

    started = time.perf_counter()
    bset = geodata.load_buildings(args.buildings)
    rng = np.random.default_rng(args.seed)
    models = ["3gpp", "rst", "losball"] if args.model == "all" else [args.model]
    stats = geodata.building_stats(bset)
    doc = {
        "buildings": str(args.buildings),
        "seed": args.seed,
        "stats": {
            "count": len(bset),
            "lambda_bldg_per_m2": stats.lambda_bldg,
            "mean_perimeter_m": stats.mean_perimeter,
            "mean_area_m2": stats.mean_area,
            "kappa": stats.kappa,
        },
        "fits": {},
    }
    d_max = args.max_distance
    if d_max is None:
        # the urban fit needs the table to reach 300 m
        (x0, y0), (x1, y1) = bset.region
        d_max = max(min(x1 - x0, y1 - y0) / 4.0, 300.0 + args.bin_width)
    table = geodata.empirical_p_los(bset, args.pairs, args.bin_width, rng, d_max=d_max)
    doc["empirical"] = table.to_dict()
    if "3gpp" in models:
        fit = fit_3gpp_urban(table, seed=args.seed)
        doc["fits"]["3gpp"] = {"model": fit.model.to_dict(), "rmse_pct": fit.rmse_pct}
    if "rst" in models:
        try:
            c_per = rst_c(stats, "perimeter")
            c_area = rst_c(stats, "area")
        except DomainError as exc:
            raise UsageError(f"random-shape fit rejected: {exc}") from exc
        ef = fit_suburban_exp(table)
        doc["fits"]["rst"] = {
            "c_perimeter_m": c_per,
            "c_area_m": c_area,
            "model": {"type": "suburban_exp", "c": c_area},
            "rmse_pct": _goodness(type(ef.model)(c_area), table),
            "empirical_fit": {"c": ef.model.c, "offset": ef.offset, "rmse_pct": ef.rmse_pct},
        }
    if "losball" in models:
        radius = args.radius
        if radius is None:
            try:
                radius = los_ball_radius(stats)
            except DomainError as exc:
                raise UsageError(f"LOS ball radius needs building statistics: {exc}; pass --radius") from exc
        p_l = geodata.fit_p_l(bset, radius, args.users, rng)
        model = GeneralizedLosBall(radius=radius, los_fraction=p_l)
        doc["fits"]["losball"] = {"model": model.to_dict(), "rmse_pct": _goodness(model, table)}
    out = Path(args.out)
    text = f"# manifest={_manifest_path(out).name}\n" + yaml.safe_dump(_plain(doc), sort_keys=False)
    _write_outputs(out, text, None, args, started, {"buildings": str(args.buildings)})
    return EXIT_OK


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# argument parsing -------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="mmwave-coverage", description="mmWave downlink coverage: analysis and simulation")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=False):
        sp.add_argument("--config", required=True, help="YAML file or preset name (" + ", ".join(config.PRESETS) + ")")
        sp.add_argument("--out", required=True, help="output file")
        sp.add_argument("--seed", type=int, default=None, help="override simulation.seed")
        sp.add_argument("--threads", type=int, default=1, help="worker processes (does not change results)")
        sp.add_argument("--trials", type=int, default=None, help="override simulation.snapshots")
        if sim:
            sp.add_argument("--sim-radius", type=float, default=None, help="simulation disk radius in m")

    a = sub.add_parser("analyze", help="evaluate analytic coverage or rate curves")
    common(a)
    a.add_argument("--kind", choices=["sinr", "snr", "sir", "rate"], default="sinr")
    a.add_argument("--thresholds-db", help="start:stop:step or comma list (default -20:40:1)")
    a.add_argument("--rates-mbps", help="rate grid for kind=rate (default 0:500:10)")
    a.add_argument("--n-max", type=int, default=None, help="load truncation for kind=rate")
    a.add_argument("--mean-load", action="store_true", help="mean-load approximation for kind=rate")
    a.add_argument("--rel-tol", type=float, default=None, help="override quadrature rel_tol")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="Monte Carlo CCDF with 99%% confidence intervals")
    common(s, sim=True)
    s.add_argument("--kind", choices=["sinr", "snr", "sir", "inr", "rate"], default="sinr")
    s.add_argument("--thresholds-db")
    s.add_argument("--rates-mbps")
    s.add_argument("--dump-snapshots", type=int, default=0, metavar="N", help="write the first N snapshots as JSON lines")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="analytic vs Monte Carlo gap report")
    common(c, sim=True)
    c.add_argument("--kind", choices=["sinr", "snr", "sir"], default="sinr")
    c.add_argument("--thresholds-db")
    c.add_argument("--rel-tol", type=float, default=None, help="override quadrature rel_tol")
    c.add_argument(
        "--tolerance", default="auto",
        help="'ci' (analytic inside the 99%% interval), a number (absolute gap), or 'auto': "
        "ci when all Nakagami parameters are 1, else 0.03",
    )
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="Monte Carlo metric across BS densities")
    common(w, sim=True)
    w.add_argument("--param", default="density")
    w.add_argument("--values", help="comma-separated BS densities per km^2")
    w.add_argument("--isd-m", help="comma-separated inter-site distances in m (alternative to --values)")
    w.add_argument("--metric", choices=["coverage_at_T", "inr_exceedance"], default="coverage_at_T")
    w.add_argument("--threshold-db", type=float, default=10.0)
    w.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="fit blockage models to building footprints")
    f.add_argument("--buildings", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--model", choices=["3gpp", "rst", "losball", "all"], default="all")
    f.add_argument("--radius", type=float, default=None, help="LOS ball radius (default from building statistics)")
    f.add_argument("--pairs", type=int, default=100_000, help="point pairs for the empirical LOS table")
    f.add_argument("--users", type=int, default=500, help="users for the LOS-ball p_l estimate")
    f.add_argument("--bin-width", type=float, default=10.0)
    f.add_argument("--max-distance", type=float, default=None, help="longest pair distance in m (default: max(region/4, 300 m + bin))")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--threads", type=int, default=1)
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (config.ConfigError, UsageError, DomainError, GeometryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
