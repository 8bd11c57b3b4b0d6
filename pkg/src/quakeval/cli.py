"""Command-line interface.

Subcommands mirror the library: fit-density, significance, enhancement,
precursor, simulate, filter-aftershocks.  Every run prints one JSON
report (or writes it with --out).  Reports carry the subcommand name
and the resolved configuration, contain no timestamps, and serialize
floats by shortest round-trip, so a rerun with the same inputs and seed
produces byte-identical output.

Exit codes: 0 success, 2 invalid input (bad arguments, malformed or
inconsistent files), 1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .catalog import (AftershockPolicy, Catalog, filter_aftershocks,
                      parse_earthquakes, parse_predictions,
                      serialize_earthquakes, serialize_exclusions)
from .errors import QuakevalError, ValidationError
from .mc import ClusteringParams, NullModel, empirical_significance, null_zscores
from .nulltest import (chance_probabilities, count_successes,
                       enhancement_estimate, min_consistent_c,
                       significance_report)
from .precursor import extract_delays, precursor_test
from .regions import Rectangle
from .spatial import (ParametricDensity, fit_kde, fit_parametric, load_density,
                      save_density)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _render(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n"


def _parse_region_spec(text: str) -> Rectangle:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError(
            "--region expects xmin,xmax,ymin,ymax (km)")
    try:
        xmin, xmax, ymin, ymax = (float(p) for p in parts)
    except ValueError:
        raise ValidationError(f"--region value {text!r} is not numeric") from None
    return Rectangle(xmin, xmax, ymin, ymax)


def _load_catalog(args) -> Catalog:
    region = _parse_region_spec(args.region) if args.region else None
    return parse_earthquakes(args.earthquakes, region=region,
                             record_start=args.record_start,
                             record_end=args.record_end)


def _load_predictions(args):
    return parse_predictions(args.predictions, polygons=args.polygons)


def _resolve_density(spec: str, catalog: Catalog):
    if spec == "uniform":
        return ParametricDensity.uniform(catalog.region)
    if spec == "fit":
        points = np.column_stack([catalog.xs, catalog.ys])
        return fit_parametric(points, catalog.region).density
    return load_density(spec)


def _add_catalog_args(sub):
    sub.add_argument("--earthquakes", required=True,
                     help="earthquake CSV (time,x,y,magnitude)")
    sub.add_argument("--region", default=None,
                     help="study rectangle as xmin,xmax,ymin,ymax; "
                          "defaults to the events' bounding box")
    sub.add_argument("--record-start", type=float, default=0.0,
                     help="record origin in days (default 0)")
    sub.add_argument("--record-end", type=float, default=None,
                     help="record end in days; defaults to the last event")


def _add_prediction_args(sub):
    sub.add_argument("--predictions", required=True,
                     help="prediction CSV "
                          "(issue_time,window_start,window_end,cx,cy,radius,min_magnitude)")
    sub.add_argument("--polygons", default=None,
                     help="JSON sidecar mapping row index to polygon vertices")


def _cmd_fit_density(args) -> dict:
    catalog = _load_catalog(args)
    points = np.column_stack([catalog.xs, catalog.ys])
    config = {"earthquakes": args.earthquakes, "kind": args.kind,
              "model_out": args.model_out}
    if args.kind == "parametric":
        res = fit_parametric(points, catalog.region)
        save_density(res.density, args.model_out)
        d = res.density
        body = {
            "n_points": len(points),
            "loglik": res.loglik,
            "loglik_uniform": res.loglik_uniform,
            "converged": res.converged,
            "n_evaluations": res.n_evaluations,
            "x_c": d.x_c.tolist(),
            "Q": d.q_matrix.ravel().tolist(),
            "p0": d.p0,
            "p1": d.p1,
            "bump_weight": d.weight,
        }
    elif args.kind == "kde":
        kde = fit_kde(points, catalog.region)
        save_density(kde, args.model_out)
        body = {
            "n_points": len(points),
            "bandwidth": kde.bandwidth.ravel().tolist(),
            "region_mass_raw": kde.normalization,
        }
    else:
        density = ParametricDensity.uniform(catalog.region)
        save_density(density, args.model_out)
        body = {"n_points": len(points), "area": catalog.region.area}
    return {"command": "fit-density", "config": config, **body}


def _cmd_significance(args) -> dict:
    catalog = _load_catalog(args)
    predictions = _load_predictions(args)
    density = _resolve_density(args.density, catalog)
    report = significance_report(catalog, predictions, density,
                                 alpha=args.alpha, exact=args.exact)
    config = {"earthquakes": args.earthquakes, "predictions": args.predictions,
              "density": args.density, "alpha": args.alpha, "exact": args.exact}
    return {"command": "significance", "config": config, **report.to_dict()}


def _cmd_enhancement(args) -> dict:
    catalog = _load_catalog(args)
    predictions = _load_predictions(args)
    density = _resolve_density(args.density, catalog)
    cp = chance_probabilities(predictions, density, catalog)
    n_obs = count_successes(catalog, predictions)
    body = {
        "n_predictions": cp.m,
        "n_observed": n_obs,
        "mu": cp.mu,
        "c_hat": enhancement_estimate(cp, n_obs),
    }
    if n_obs >= 1:
        cmin = min_consistent_c(cp, n_obs, args.alpha)
        body.update({"c_min": cmin.value, "c_min_capped": cmin.capped,
                     "c_min_residual": cmin.residual})
    else:
        body.update({"c_min": None, "c_min_capped": False, "c_min_residual": None})
    body["alpha"] = args.alpha
    config = {"earthquakes": args.earthquakes, "predictions": args.predictions,
              "density": args.density, "alpha": args.alpha}
    return {"command": "enhancement", "config": config, **body}


def _cmd_precursor(args) -> dict:
    catalog = _load_catalog(args)
    predictions = _load_predictions(args)
    data = extract_delays(predictions, catalog)
    result = precursor_test(data.observations, data.n_events, data.span,
                            threshold=args.threshold)
    config = {"earthquakes": args.earthquakes, "predictions": args.predictions,
              "threshold": args.threshold}
    body = result.to_dict()
    body["origin"] = data.origin
    body["n_censored"] = sum(o.censored for o in data.observations)
    return {"command": "precursor", "config": config, **body}


def _cmd_simulate(args) -> dict:
    config = {"mode": args.mode, "seed": args.seed, "replicates": args.replicates}
    if args.mode == "delays":
        summary = null_zscores(args.m_signals, args.n_events, args.span,
                               args.replicates, seed=args.seed,
                               suppression_window=args.suppression_window,
                               shared_catalog=args.shared_catalog)
        config.update({"m_signals": args.m_signals, "n_events": args.n_events,
                       "span": args.span,
                       "suppression_window": args.suppression_window,
                       "shared_catalog": args.shared_catalog})
        return {"command": "simulate", "config": config, **summary.to_dict()}

    if args.predictions is None:
        raise ValidationError("simulate --mode significance needs --predictions")
    predictions = parse_predictions(args.predictions, polygons=args.polygons)
    if args.density == "uniform":
        if args.region is None:
            raise ValidationError(
                "simulate with a uniform density needs an explicit --region")
        density = ParametricDensity.uniform(_parse_region_spec(args.region))
    elif args.density == "fit":
        raise ValidationError(
            "simulate needs a concrete density: a model file or 'uniform'")
    else:
        density = load_density(args.density)
    clustering = None
    if args.clustering > 0:
        clustering = ClusteringParams(args.clustering, args.cluster_decay,
                                      args.cluster_spread)
    model = NullModel(args.n_events, args.span, density,
                      clustering=clustering, seed=args.seed)
    sim = empirical_significance(model, predictions, args.replicates,
                                 exclude_injected=args.exclude_injected)
    if args.samples_out:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["replicate", "n_successes", "exact_significance"])
        for r, (count, level) in enumerate(zip(sim.success_counts,
                                               sim.summary.samples)):
            writer.writerow([r, int(count), repr(float(level))])
        Path(args.samples_out).write_text(buf.getvalue(), encoding="utf-8")
    config.update({"n_events": args.n_events, "span": args.span,
                   "density": args.density, "predictions": args.predictions,
                   "clustering": args.clustering,
                   "exclude_injected": args.exclude_injected})
    return {"command": "simulate", "config": config,
            "n_predictions": len(predictions), "mu": sim.mu,
            **sim.summary.to_dict()}


def _cmd_filter(args) -> dict:
    catalog = _load_catalog(args)
    policy = AftershockPolicy(args.time_window, args.distance_window)
    result = filter_aftershocks(catalog, policy)
    serialize_earthquakes(result.kept, args.filtered_out)
    audit_out = args.audit_out or str(Path(args.filtered_out).with_suffix(".exclusions.csv"))
    serialize_exclusions(result, audit_out)
    config = {"earthquakes": args.earthquakes, "time_window": args.time_window,
              "distance_window": args.distance_window,
              "filtered_out": args.filtered_out, "audit_out": audit_out}
    return {"command": "filter-aftershocks", "config": config,
            "n_input": len(catalog), "n_kept": len(result.kept),
            "n_excluded": len(result.excluded)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quakeval",
        description="Evaluate earthquake prediction sets against chance.")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("fit-density",
                        help="fit a spatial density to a catalog")
    _add_catalog_args(p)
    p.add_argument("--kind", choices=["parametric", "kde", "uniform"],
                   default="parametric")
    p.add_argument("--model-out", required=True, help="where to write the model JSON")
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.set_defaults(func=_cmd_fit_density)

    p = subs.add_parser("significance",
                        help="score a prediction set against the chance null")
    _add_catalog_args(p)
    _add_prediction_args(p)
    p.add_argument("--density", default="uniform",
                   help="model JSON path, 'fit', or 'uniform' (default)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--exact", action="store_true",
                   help="add the exact tail probability to the report")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_significance)

    p = subs.add_parser("enhancement",
                        help="estimate the probability enhancement factor")
    _add_catalog_args(p)
    _add_prediction_args(p)
    p.add_argument("--density", default="uniform")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_enhancement)

    p = subs.add_parser("precursor",
                        help="test signal-to-event delays against chance")
    _add_catalog_args(p)
    _add_prediction_args(p)
    p.add_argument("--threshold", type=float, default=2.5,
                   help="|z| level for the precursor/postcursor flags")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_precursor)

    p = subs.add_parser("simulate",
                        help="Monte Carlo studies under the chance null")
    p.add_argument("--mode", choices=["significance", "delays"],
                   default="significance")
    p.add_argument("--replicates", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-events", type=int, required=True)
    p.add_argument("--span", type=float, required=True,
                   help="record length in days")
    p.add_argument("--predictions", default=None)
    p.add_argument("--polygons", default=None)
    p.add_argument("--density", default="uniform",
                   help="model JSON path or 'uniform'")
    p.add_argument("--region", default=None,
                   help="study rectangle for the uniform density")
    p.add_argument("--clustering", type=float, default=0.0,
                   help="fraction of events converted to dependent followers")
    p.add_argument("--cluster-decay", type=float, default=10.0,
                   help="follower lag scale, days")
    p.add_argument("--cluster-spread", type=float, default=5.0,
                   help="follower offset sigma, km")
    p.add_argument("--exclude-injected", action="store_true",
                   help="do not let followers count as successes")
    p.add_argument("--m-signals", type=int, default=None,
                   help="delays mode: signals per replicate")
    p.add_argument("--suppression-window", type=float, default=None,
                   help="delays mode: alarm deadtime after each event, days")
    p.add_argument("--shared-catalog", action="store_true",
                   help="delays mode: one shared record per replicate")
    p.add_argument("--samples-out", default=None,
                   help="significance mode: per-replicate CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = subs.add_parser("filter-aftershocks",
                        help="drop events shadowed by a larger recent neighbour")
    _add_catalog_args(p)
    p.add_argument("--time-window", type=float, default=30.0,
                   help="days (placeholder default; tune per catalog)")
    p.add_argument("--distance-window", type=float, default=50.0,
                   help="km (placeholder default; tune per catalog)")
    p.add_argument("--filtered-out", required=True,
                   help="where to write the surviving events CSV")
    p.add_argument("--audit-out", default=None,
                   help="exclusion audit CSV (default: next to --filtered-out)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_filter)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.subcommand == "simulate" and args.mode == "delays" \
            and args.m_signals is None:
        print("error: simulate --mode delays needs --m-signals", file=sys.stderr)
        return 2
    try:
        payload = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuakevalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = _render(payload)
    if getattr(args, "out", None):
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
