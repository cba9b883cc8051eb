"""Command-line interface: simulate | fit | screen | features | train | classify | pipeline.

Every subcommand exits 0 on success; failures print one JSON line to stderr
and exit 1 so batch drivers can parse the reason mechanically.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import io as bio
from .classifier import (cross_validate, fit_logistic_map, load_model,
                         save_model)
from .pipeline import (PipelineConfig, pipeline_config_from_mapping,
                       process_curve, run_classification, run_features,
                       run_field_filter, run_pipeline, run_screening,
                       simulation_config_from_mapping)
from .simulator import SimulationConfig, generate_corpus

__all__ = ["main"]


def _load_configs(path):
    if path is None:
        return PipelineConfig(), SimulationConfig()
    mapping = bio.read_config(path)
    return (pipeline_config_from_mapping(mapping),
            simulation_config_from_mapping(mapping))


def _cmd_simulate(args) -> int:
    _, sim = _load_configs(args.config)
    if args.seed is not None:
        sim = replace(sim, seed=args.seed)
    info = generate_corpus(sim, args.out, n_null=args.n_null,
                           n_event=args.n_event, n_periodic=args.n_periodic,
                           fields=args.fields)
    print("wrote %d curves to %s" % (info["n_curves"], info["out_dir"]))
    return 0


def _cmd_fit(args) -> int:
    config, _ = _load_configs(args.config)
    rec = process_curve(args.curve, args.source_id, args.field_id, config)
    if rec.flag:
        print("%s\tflagged\t%s" % (rec.source_id or args.curve, rec.flag))
        return 1
    for name, summ in (("null", rec.null), ("alt", rec.alt)):
        print("\t".join([
            rec.source_id or args.curve, name,
            "loglik=%.10g" % summ.loglik,
            "sigma2=%.10g" % summ.sigma2,
            "iterations=%d" % summ.iterations,
            "converged=%d" % int(summ.converged),
            "beta=" + ",".join("%.10g" % b for b in summ.beta),
        ]))
    print("%s\tllr\t%.10g" % (rec.source_id or args.curve, rec.llr))
    return 0


def _cmd_screen(args) -> int:
    config, _ = _load_configs(args.config)
    manifest = bio.read_manifest(args.manifest)
    records = run_screening(manifest, config, args.out, workers=args.workers)
    n_flagged = sum(1 for r in records if r.flag)
    print("screened %d curves (%d flagged)" % (len(records), n_flagged))
    return 0


def _cmd_features(args) -> int:
    config, _ = _load_configs(args.config)
    manifest = bio.read_manifest(args.manifest)
    path = run_features(manifest, config, args.out)
    print("wrote %s" % path)
    return 0


def _cmd_train(args) -> int:
    header, rows = bio.read_table(args.features)
    sid_i = header.index("source_id")
    cusum_i = header.index("cusum")
    dv_i = header.index("dv")
    labels_by_id = {}
    theader, trows = bio.read_table(args.truth)
    tsid_i = theader.index("source_id")
    tcls_i = theader.index("class")
    for r in trows:
        labels_by_id[r[tsid_i]] = 1 if r[tcls_i] == "event" else 0
    feats, labels = [], []
    for r in rows:
        if r[cusum_i] == bio.NA or r[sid_i] not in labels_by_id:
            continue
        feats.append([float(r[cusum_i]), float(r[dv_i])])
        labels.append(labels_by_id[r[sid_i]])
    feats = np.asarray(feats)
    labels = np.asarray(labels)
    cv = cross_validate(feats, labels, k=args.folds, seed=args.seed or 0)
    model = fit_logistic_map(feats, labels, feature_names=("cusum", "dv"))
    model = replace(model, cv_auc=cv.mean_auc)
    save_model(model, args.out_model)
    print("trained on %d curves (%d events); %d-fold mean AUC %.4f"
          % (len(labels), int(labels.sum()), args.folds, cv.mean_auc))
    return 0


def _cmd_classify(args) -> int:
    config, _ = _load_configs(args.config)
    model = load_model(args.model)
    path = run_classification(config, model, args.out)
    run_field_filter(config, args.out)
    print("wrote %s" % path)
    return 0


def _cmd_pipeline(args) -> int:
    config, _ = _load_configs(args.config)
    manifest = bio.read_manifest(args.manifest)
    model = load_model(args.model)
    info = run_pipeline(manifest, config, model, args.out,
                        workers=args.workers)
    print(json.dumps(info))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bumphunt",
        description="Detect temporally isolated events in collections of "
                    "irregularly sampled light curves.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest=False, out=False, workers=False, model=False):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--seed", type=int, default=None)
        if manifest:
            p.add_argument("--manifest", required=True)
        if out:
            p.add_argument("--out", required=True,
                           help="output directory for tables and fit records")
        if workers:
            p.add_argument("--workers", type=int, default=None)
        if model:
            p.add_argument("--model", required=True,
                           help="trained classifier model file")

    p = sub.add_parser("simulate", help="generate a synthetic survey corpus")
    common(p, out=True)
    p.add_argument("--n-null", type=int, default=100)
    p.add_argument("--n-event", type=int, default=50)
    p.add_argument("--n-periodic", type=int, default=50)
    p.add_argument("--fields", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit one curve file and print a summary")
    common(p)
    p.add_argument("--curve", required=True)
    p.add_argument("--source-id", default="")
    p.add_argument("--field-id", default="")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("screen", help="fit and FDR-select a whole manifest")
    common(p, manifest=True, out=True, workers=True)
    p.set_defaults(func=_cmd_screen)

    p = sub.add_parser("features", help="append CUSUM/DV columns")
    common(p, manifest=True, out=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("train", help="train the event classifier")
    p.add_argument("--features", required=True,
                   help="features table from the features stage")
    p.add_argument("--truth", required=True, help="truth table with labels")
    p.add_argument("--out-model", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="score curves with a trained model")
    common(p, out=True, model=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    common(p, manifest=True, out=True, workers=True, model=True)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # single boundary: report and signal failure
        print(json.dumps({"error": str(exc),
                          "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
