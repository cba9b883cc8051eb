"""End-to-end batch orchestration: ingest, fit, screen, classify, filter.

Curves are fitted independently (optionally across a process pool) and every
per-curve result is persisted as a small versioned text record, so re-runs
skip completed fits and later stages never refit.  All batch-level
reductions happen after a deterministic sort by source id, which makes
output tables byte-identical for any worker count.  Individual curve
failures are recorded as flags and never abort a batch.
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import io as bio
from .basis import BasisError, BasisSpec, evaluate_basis, rescale_times
from .classifier import LogisticModel, combine_probability, predict_prob
from .features import features_from_beta
from .robust import (FitError, LightCurve, PriorConfig, fit_alternative,
                     fit_null)
from .screening import chi2_pvalue, fdr_select

__all__ = [
    "CurveRecord",
    "ModelSummary",
    "PipelineConfig",
    "field_cluster_filter",
    "ingest_curve",
    "pipeline_config_from_mapping",
    "process_curve",
    "run_classification",
    "run_features",
    "run_pipeline",
    "run_screening",
    "simulation_config_from_mapping",
]

FIT_FORMAT = "bumphunt-fit v1"

SCREEN_HEADER = ["source_id", "field_id", "n_obs", "llr", "pvalue", "selected"]
FEATURE_COLUMNS = ["cusum", "dv", "degenerate"]
CLASS_COLUMNS = ["prob_event", "class"]


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of a batch run; defaults follow the survey operating point."""

    basis: BasisSpec = BasisSpec()
    prior: PriorConfig = PriorConfig()
    q: float = 1e-4
    fdr_variant: str = "BY"
    df: int = 120
    llr_scale: float = 1.0
    fit_span_fraction: float = 0.875
    probability_threshold: float = 0.5
    field_cluster_cutoff: int = 20
    workers: int = 1
    em_tol: float = 1e-8
    em_max_iter: int = 500
    accelerate: bool = True

    def __post_init__(self):
        if not 0 < self.q < 1:
            raise ValueError("q must lie in (0, 1)")
        if not 0 < self.probability_threshold < 1:
            raise ValueError("probability_threshold must lie in (0, 1)")
        if self.field_cluster_cutoff < 1:
            raise ValueError("field_cluster_cutoff must be >= 1")
        if not 0 < self.fit_span_fraction <= 1:
            raise ValueError("fit_span_fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.llr_scale <= 0:
            raise ValueError("llr_scale must be positive")
        if self.df < 1:
            raise ValueError("df must be >= 1")

    @property
    def fit_span(self) -> float:
        """Length of the sub-interval observations are rescaled onto.

        Leaving (1 - fit_span_fraction) of the periodic interval unobserved
        puts the wrap-around point in unsampled territory, where the ridge
        prior absorbs the mismatch between the two ends of the trend.
        """
        return self.basis.interval_length * self.fit_span_fraction


def pipeline_config_from_mapping(mapping: dict) -> PipelineConfig:
    """Build a PipelineConfig from parsed 'key = value' text."""
    m = dict(mapping)

    def pop(key, conv, default):
        return conv(m.pop(key)) if key in m else default

    basis = BasisSpec(
        interval_length=pop("interval_length", float, 2048.0),
        n_components=pop("n_components", int, 128),
        n_trend=pop("n_trend", int, 8),
        filter_name=pop("filter_name", str, "symmlet4"),
        cascade_depth=pop("cascade_depth", int, 10),
    )
    prior = PriorConfig(tau=pop("tau", float, 0.01), nu=pop("nu", float, 5.0))
    cfg = PipelineConfig(
        basis=basis,
        prior=prior,
        q=pop("q", float, 1e-4),
        fdr_variant=pop("fdr_variant", str, "BY"),
        df=pop("df", int, 120),
        llr_scale=pop("llr_scale", float, 1.0),
        fit_span_fraction=pop("fit_span_fraction", float, 0.875),
        probability_threshold=pop("probability_threshold", float, 0.5),
        field_cluster_cutoff=pop("field_cluster_cutoff", int, 20),
        workers=pop("workers", int, 1),
        em_tol=pop("em_tol", float, 1e-8),
        em_max_iter=pop("em_max_iter", int, 500),
        accelerate=pop("accelerate", lambda s: s not in ("0", "false"), True),
    )
    unknown = [k for k in m if not k.startswith("sim_")]
    if unknown:
        raise ValueError("unknown configuration keys: %s" % ", ".join(sorted(unknown)))
    return cfg


def simulation_config_from_mapping(mapping: dict):
    """Build a SimulationConfig from 'sim_'-prefixed configuration keys."""
    from .simulator import SimulationConfig

    base = SimulationConfig()
    m = {k[4:]: v for k, v in mapping.items() if k.startswith("sim_")}

    def rng_pair(name, conv=float):
        lo = conv(m.pop(name + "_min")) if name + "_min" in m else None
        hi = conv(m.pop(name + "_max")) if name + "_max" in m else None
        cur = getattr(base, name + "_range" if name != "n_obs" else "n_obs_range")
        return (cur[0] if lo is None else lo, cur[1] if hi is None else hi)

    kwargs = dict(
        n_obs_range=tuple(int(v) for v in rng_pair("n_obs", int)),
        u0_range=rng_pair("u0"),
        te_range=rng_pair("te"),
        period_range=rng_pair("period"),
        amplitude_range=rng_pair("amplitude"),
    )
    scalars = dict(n_seasons=int, season_length=float, gap_fraction=float,
                   cadence_jitter=float, baseline_mag=float,
                   trend_amplitude=float, trend_knots=int,
                   season_offset_scale=float, noise_sigma=float,
                   noise_df=float, outlier_rate=float,
                   outlier_magnitude=float, seed=int)
    for key, conv in scalars.items():
        if key in m:
            kwargs[key] = conv(m.pop(key))
    if m:
        raise ValueError("unknown simulator keys: %s"
                         % ", ".join("sim_" + k for k in sorted(m)))
    return replace(base, **kwargs)


# -- ingestion ---------------------------------------------------------------

@dataclass
class IngestResult:
    curve: LightCurve | None
    n_rejected: int
    flag: str


def ingest_curve(path, source_id: str = "", field_id: str = "") -> IngestResult:
    """Read, sort, and sign-convert one curve file.

    Magnitudes are negated so that brightening becomes a positive excursion;
    unreadable files and files with fewer than two valid rows come back
    flagged instead of raising.
    """
    try:
        times, values, n_rejected = bio.read_curve_file(path)
    except (OSError, bio.FormatError) as exc:
        return IngestResult(None, 0, "ingest error: %s" % exc)
    if len(times) < 2:
        return IngestResult(None, n_rejected, "fewer than 2 valid rows")
    curve = LightCurve(source_id=source_id, field_id=field_id,
                       times=times, values=-values)
    problems = curve.problems()
    if problems:
        return IngestResult(None, n_rejected, "; ".join(problems))
    return IngestResult(curve, n_rejected, "")


# -- per-curve fitting and persistence ----------------------------------------

@dataclass
class ModelSummary:
    loglik: float
    sigma2: float
    iterations: int
    converged: bool
    beta: np.ndarray


@dataclass
class CurveRecord:
    """Everything later stages need about one curve, flat and serializable."""

    source_id: str
    field_id: str
    n_obs: int = 0
    n_rejected: int = 0
    flag: str = ""
    null: ModelSummary | None = None
    alt: ModelSummary | None = None

    @property
    def usable(self) -> bool:
        return (not self.flag and self.null is not None
                and self.alt is not None
                and self.null.converged and self.alt.converged)

    @property
    def llr(self) -> float:
        return max(0.0, 2.0 * (self.alt.loglik - self.null.loglik))


def process_curve(path, source_id: str, field_id: str,
                  config: PipelineConfig) -> CurveRecord:
    """Ingest one file and fit both models, capturing failures as flags."""
    rec = CurveRecord(source_id=source_id, field_id=field_id)
    ingest = ingest_curve(path, source_id, field_id)
    rec.n_rejected = ingest.n_rejected
    if ingest.curve is None:
        rec.flag = ingest.flag
        return rec
    curve = ingest.curve
    rec.n_obs = curve.n
    try:
        scaled = rescale_times(curve.times, config.fit_span)
        design = evaluate_basis(config.basis, scaled)
        em = dict(tol=config.em_tol, max_iter=config.em_max_iter,
                  accelerate=config.accelerate)
        null_fit = fit_null(curve, design, config.prior, **em)
        alt_fit = fit_alternative(curve, design, config.prior, **em)
    except (BasisError, FitError) as exc:
        rec.flag = str(exc)
        return rec
    rec.null = ModelSummary(null_fit.loglik, null_fit.sigma2,
                            null_fit.iterations, null_fit.converged,
                            null_fit.beta)
    rec.alt = ModelSummary(alt_fit.loglik, alt_fit.sigma2,
                           alt_fit.iterations, alt_fit.converged,
                           alt_fit.beta)
    if not (null_fit.converged and alt_fit.converged):
        rec.flag = "fit not converged"
    if null_fit.flag or alt_fit.flag:
        rec.flag = (null_fit.flag or alt_fit.flag)
    return rec


def _record_text(rec: CurveRecord) -> str:
    lines = ["# %s" % FIT_FORMAT,
             "source_id\t%s" % rec.source_id,
             "field_id\t%s" % rec.field_id,
             "n_obs\t%d" % rec.n_obs,
             "n_rejected\t%d" % rec.n_rejected,
             "flag\t%s" % (rec.flag or "-")]
    for name, summ in (("null", rec.null), ("alt", rec.alt)):
        if summ is None:
            continue
        lines.append("%s_converged\t%d" % (name, int(summ.converged)))
        lines.append("%s_iterations\t%d" % (name, summ.iterations))
        lines.append("%s_loglik\t%s" % (name, bio.format_float(summ.loglik)))
        lines.append("%s_sigma2\t%s" % (name, bio.format_float(summ.sigma2)))
        lines.append("%s_beta\t%s" % (
            name, "\t".join(bio.format_float(b) for b in summ.beta)))
    return "\n".join(lines) + "\n"


def _record_from_text(text: str) -> CurveRecord:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "# %s" % FIT_FORMAT:
        raise bio.FormatError("unrecognized fit record")
    fields = {}
    for ln in lines[1:]:
        key, *vals = ln.split("\t")
        fields[key] = vals
    rec = CurveRecord(
        source_id=fields["source_id"][0],
        field_id=fields["field_id"][0],
        n_obs=int(fields["n_obs"][0]),
        n_rejected=int(fields["n_rejected"][0]),
        flag="" if fields["flag"][0] == "-" else fields["flag"][0],
    )
    for name in ("null", "alt"):
        if name + "_loglik" not in fields:
            continue
        summ = ModelSummary(
            loglik=float(fields[name + "_loglik"][0]),
            sigma2=float(fields[name + "_sigma2"][0]),
            iterations=int(fields[name + "_iterations"][0]),
            converged=bool(int(fields[name + "_converged"][0])),
            beta=np.array([float(v) for v in fields[name + "_beta"]]),
        )
        setattr(rec, name, summ)
    return rec


def _fit_record_path(out_dir, source_id: str) -> str:
    return os.path.join(out_dir, "fits", source_id + ".fit")


_WORKER_CONFIG: PipelineConfig | None = None


def _worker_init(config: PipelineConfig) -> None:
    global _WORKER_CONFIG
    _WORKER_CONFIG = config
    config.basis.tables()


def _worker_fit(task) -> str:
    path, sid, fid = task
    return _record_text(process_curve(path, sid, fid, _WORKER_CONFIG))


# -- pipeline stages ----------------------------------------------------------

def run_screening(manifest: bio.CatalogManifest, config: PipelineConfig,
                  out_dir, workers: int | None = None):
    """Fit every curve, then select candidates by batch FDR.

    Returns the screening records sorted by source id and writes
    screening.tsv plus one fit record per curve under fits/.  Existing fit
    records are reused, so interrupted runs resume where they stopped.
    """
    workers = config.workers if workers is None else workers
    os.makedirs(os.path.join(out_dir, "fits"), exist_ok=True)
    config.basis.tables()  # build once; forked workers inherit the cache

    todo = []
    records: dict[str, CurveRecord] = {}
    for entry in manifest.entries:
        fit_path = _fit_record_path(out_dir, entry.source_id)
        if os.path.exists(fit_path):
            with open(fit_path) as fh:
                records[entry.source_id] = _record_from_text(fh.read())
        else:
            todo.append((manifest.resolve(entry), entry.source_id,
                         entry.field_id))

    if todo:
        if workers > 1:
            with multiprocessing.Pool(workers, initializer=_worker_init,
                                      initargs=(config,)) as pool:
                texts = pool.map(_worker_fit, todo, chunksize=4)
        else:
            _worker_init(config)
            texts = [_worker_fit(t) for t in todo]
        for (path, sid, fid), text in zip(todo, texts):
            bio.atomic_write(_fit_record_path(out_dir, sid), text)
            records[sid] = _record_from_text(text)

    ordered = [records[e.source_id]
               for e in sorted(manifest.entries, key=lambda e: e.source_id)]
    usable = [rec for rec in ordered if rec.usable]
    pvalues = np.array([
        chi2_pvalue(rec.llr / config.llr_scale, config.df) for rec in usable])
    if len(usable):
        selected, _threshold = fdr_select(pvalues, config.q, config.fdr_variant)
    else:
        selected = np.zeros(0, dtype=bool)
    stats_by_id = {rec.source_id: (p, bool(s))
                   for rec, p, s in zip(usable, pvalues, selected)}

    rows = []
    n_failed = 0
    for rec in ordered:
        if rec.usable:
            p, sel = stats_by_id[rec.source_id]
            rows.append([rec.source_id, rec.field_id, str(rec.n_obs),
                         "%.6f" % rec.llr, "%.6e" % p, str(int(sel))])
        else:
            n_failed += 1
            n_obs = str(rec.n_obs) if rec.n_obs else bio.NA
            rows.append([rec.source_id, rec.field_id, n_obs,
                         bio.NA, bio.NA, "0"])
    bio.write_table(os.path.join(out_dir, "screening.tsv"), SCREEN_HEADER, rows)
    if n_failed:
        flags = {}
        for rec in ordered:
            if rec.flag:
                flags[rec.source_id] = rec.flag
        bio.write_table(os.path.join(out_dir, "failures.tsv"),
                        ["source_id", "flag"],
                        [[sid, flg] for sid, flg in sorted(flags.items())])
    return ordered


def _load_records(out_dir, manifest) -> dict:
    records = {}
    for entry in manifest.entries:
        path = _fit_record_path(out_dir, entry.source_id)
        if os.path.exists(path):
            with open(path) as fh:
                records[entry.source_id] = _record_from_text(fh.read())
    return records


def run_features(manifest: bio.CatalogManifest, config: PipelineConfig,
                 out_dir) -> str:
    """Append feature columns to the screening table for selected curves."""
    screen_path = os.path.join(out_dir, "screening.tsv")
    header, rows = bio.read_table(screen_path)
    records = _load_records(out_dir, manifest)
    paths = {e.source_id: manifest.resolve(e) for e in manifest.entries}

    out_rows = []
    for row in rows:
        sid, selected = row[0], row[-1] == "1"
        rec = records.get(sid)
        if not selected or rec is None or not rec.usable:
            out_rows.append(row + [bio.NA, bio.NA, "0"])
            continue
        ingest = ingest_curve(paths[sid], sid, rec.field_id)
        if ingest.curve is None:
            out_rows.append(row + [bio.NA, bio.NA, "0"])
            continue
        scaled = rescale_times(ingest.curve.times, config.fit_span)
        design = evaluate_basis(config.basis, scaled)
        feats = features_from_beta(rec.alt.beta, design)
        out_rows.append(row + ["%.10g" % feats.cusum, "%.10g" % feats.dv,
                               str(int(feats.degenerate))])
    out_path = os.path.join(out_dir, "features.tsv")
    bio.write_table(out_path, header + FEATURE_COLUMNS, out_rows)
    return out_path


def run_classification(config: PipelineConfig, model: LogisticModel,
                       out_dir) -> str:
    """Score selected curves and append probability and class columns."""
    feat_path = os.path.join(out_dir, "features.tsv")
    header, rows = bio.read_table(feat_path)
    cusum_i = header.index("cusum")
    dv_i = header.index("dv")
    deg_i = header.index("degenerate")
    sel_i = header.index("selected")

    out_rows = []
    for row in rows:
        selected = row[sel_i] == "1"
        degenerate = row[deg_i] == "1"
        if not selected or row[cusum_i] == bio.NA:
            out_rows.append(row + [bio.NA, "0"])
            continue
        if degenerate:
            out_rows.append(row + [bio.NA, "0"])
            continue
        feats = np.array([float(row[cusum_i]), float(row[dv_i])])
        prob = combine_probability(True, predict_prob(model, feats)).p_event
        cls = int(prob >= config.probability_threshold)
        out_rows.append(row + ["%.6f" % prob, str(cls)])
    out_path = os.path.join(out_dir, "candidates.tsv")
    bio.write_table(out_path, header + CLASS_COLUMNS, out_rows)
    return out_path


def field_cluster_filter(field_ids, event_flags, cutoff: int):
    """Drop events in fields hosting `cutoff` or more of them.

    Returns (keep mask, {field_id: event count} of removed fields); the mask
    is False exactly for events whose field reached the cutoff.
    """
    fields = list(field_ids)
    flags = [bool(f) for f in event_flags]
    counts: dict[str, int] = {}
    for fid, ev in zip(fields, flags):
        if ev:
            counts[fid] = counts.get(fid, 0) + 1
    removed = {fid: c for fid, c in counts.items() if c >= cutoff}
    keep = np.array([not (ev and fid in removed)
                     for fid, ev in zip(fields, flags)])
    return keep, removed


def run_field_filter(config: PipelineConfig, out_dir) -> str:
    """Write the post-filtered event list and the removed-field report."""
    cand_path = os.path.join(out_dir, "candidates.tsv")
    header, rows = bio.read_table(cand_path)
    fid_i = header.index("field_id")
    cls_i = header.index("class")
    keep, removed = field_cluster_filter(
        [r[fid_i] for r in rows], [r[cls_i] == "1" for r in rows],
        config.field_cluster_cutoff)
    events = [r for r, k in zip(rows, keep) if k and r[cls_i] == "1"]
    out_path = os.path.join(out_dir, "events.tsv")
    bio.write_table(out_path, header, events)
    bio.write_table(os.path.join(out_dir, "removed_fields.tsv"),
                    ["field_id", "n_events"],
                    [[fid, str(c)] for fid, c in sorted(removed.items())])
    return out_path


def run_pipeline(manifest: bio.CatalogManifest, config: PipelineConfig,
                 model: LogisticModel, out_dir,
                 workers: int | None = None) -> dict:
    """All stages in sequence; equivalent to the CLI subcommands run one
    after another on the same output directory."""
    records = run_screening(manifest, config, out_dir, workers)
    run_features(manifest, config, out_dir)
    run_classification(config, model, out_dir)
    run_field_filter(config, out_dir)
    n_selected = sum(
        1 for r in bio.read_table(os.path.join(out_dir, "screening.tsv"))[1]
        if r[-1] == "1")
    _, event_rows = bio.read_table(os.path.join(out_dir, "events.tsv"))
    return {
        "n_curves": len(records),
        "n_flagged": sum(1 for r in records if r.flag),
        "n_selected": n_selected,
        "n_events": len(event_rows),
    }
