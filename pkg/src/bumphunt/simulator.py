"""Synthetic survey light curves for calibration, training, and testing.

Generates curves in astronomical magnitude convention (brightening is a
decrease): seasonal nightly sampling with jitter and inter-season gaps, a
smooth random spline trend with optional per-season baseline offsets,
heavy-tailed t noise, sporadic gross outliers, and three source classes:
quiet (trend only), point-lens microlensing events, and periodic or
two-harmonic oscillators whose periods sit in the screening band.  Every
curve is a pure function of the configuration and a seed; batch generation
derives one substream per curve index so parallel workers reproduce the
sequential output exactly.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .robust import LightCurve

__all__ = [
    "SimulationConfig",
    "TruthRecord",
    "curve_rng",
    "inject_outliers",
    "paczynski_magnification",
    "sample_observation_times",
    "simulate_event",
    "simulate_null",
    "simulate_periodic",
]


@dataclass(frozen=True)
class SimulationConfig:
    """Ranges and rates governing curve generation."""

    n_obs_range: tuple[int, int] = (800, 1000)
    n_seasons: int = 7
    season_length: float = 365.0
    gap_fraction: float = 0.25
    cadence_jitter: float = 0.3
    baseline_mag: float = 19.0
    trend_amplitude: float = 0.1
    trend_knots: int = 4
    season_offset_scale: float = 0.0
    noise_sigma: float = 0.08
    noise_df: float = 5.0
    outlier_rate: float = 0.005
    outlier_magnitude: float = 10.0
    u0_range: tuple[float, float] = (0.05, 0.5)
    te_range: tuple[float, float] = (10.0, 60.0)
    period_range: tuple[float, float] = (20.0, 400.0)
    amplitude_range: tuple[float, float] = (0.1, 0.5)
    seed: int = 0

    def __post_init__(self):
        for name in ("n_obs_range", "u0_range", "te_range", "period_range",
                     "amplitude_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError("%s is empty" % name)
        if not 0.0 <= self.gap_fraction < 1.0:
            raise ValueError("gap_fraction must lie in [0, 1)")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError("outlier_rate must lie in [0, 1]")
        if self.n_seasons < 1 or self.season_length <= 0:
            raise ValueError("need at least one season of positive length")


@dataclass(frozen=True)
class TruthRecord:
    """Generating parameters of one synthetic curve."""

    source_id: str
    kind: str  # null | event | periodic
    u0: float = float("nan")
    t0: float = float("nan")
    te: float = float("nan")
    period: float = float("nan")
    amplitude: float = float("nan")
    n_outliers: int = 0
    outlier_index: tuple[int, ...] = field(default=(), repr=False)


def curve_rng(seed: int, index: int) -> np.random.Generator:
    """Independent, reproducible substream for one curve of a batch."""
    return np.random.default_rng([seed, index])


def sample_observation_times(config: SimulationConfig,
                             rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing times on a jittered nightly cadence with gaps.

    Each season opens with an active window of (1 - gap_fraction) of its
    length; nights inside active windows are jittered and then thinned at
    random to hit a count drawn from the configured range.
    """
    active = (1.0 - config.gap_fraction) * config.season_length
    nights = []
    for s in range(config.n_seasons):
        start = s * config.season_length
        grid = np.arange(start, start + active, 1.0)
        nights.append(grid + rng.uniform(0.0, config.cadence_jitter, len(grid)))
    nights = np.concatenate(nights)
    lo, hi = config.n_obs_range
    n_target = int(rng.integers(lo, hi + 1))
    if n_target < len(nights):
        keep = rng.permutation(len(nights))[:n_target]
        nights = nights[keep]
    return np.sort(nights)


def _season_of(times: np.ndarray, config: SimulationConfig) -> np.ndarray:
    return np.floor(times / config.season_length).astype(int)


def _trend(times: np.ndarray, config: SimulationConfig,
           rng: np.random.Generator) -> np.ndarray:
    """Smooth low-frequency drift: random spline plus season offsets."""
    knots_x = np.linspace(times[0], times[-1], config.trend_knots)
    knots_y = rng.normal(0.0, config.trend_amplitude, config.trend_knots)
    trend = CubicSpline(knots_x, knots_y)(times)
    if config.season_offset_scale > 0:
        offsets = rng.normal(0.0, config.season_offset_scale, config.n_seasons)
        trend = trend + offsets[_season_of(times, config)]
    return trend


def inject_outliers(values, rate: float, magnitude: float,
                    rng: np.random.Generator, sigma: float):
    """Replace random points by gross excursions of +-magnitude*sigma.

    Each point is hit independently with the given probability; the sign of
    the excursion is random.  Returns (values, hit indices).
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    out = np.array(values, dtype=float)
    hits = np.nonzero(rng.random(len(out)) < rate)[0]
    if len(hits):
        signs = np.where(rng.random(len(hits)) < 0.5, -1.0, 1.0)
        out[hits] = out[hits] + signs * magnitude * sigma
    return out, tuple(int(i) for i in hits)


def paczynski_magnification(t, u0: float, t0: float, tE: float):
    """Point-lens magnification A(u) with u(t) = sqrt(u0^2 + ((t-t0)/tE)^2).

    Always >= 1 and approaching 1 far from the peak.  The caller converts to
    a magnitude shift as -2.5 * log10(A).
    """
    if not u0 > 0:
        raise ValueError("u0 must be positive")
    if not tE > 0:
        raise ValueError("tE must be positive")
    tt = np.asarray(t, dtype=float)
    u2 = u0 * u0 + ((tt - t0) / tE) ** 2
    return (u2 + 2.0) / np.sqrt(u2 * (u2 + 4.0))


def _base_curve(config: SimulationConfig, rng: np.random.Generator):
    """Times plus quiet magnitudes (baseline, trend, noise, outliers).

    Deliberately consumes the generator before any class-specific draws so
    that event and periodic curves share their base with the null curve of
    the same seed and differ from it only by the injected signal.
    """
    times = sample_observation_times(config, rng)
    mags = config.baseline_mag + _trend(times, config, rng)
    noise = config.noise_sigma * rng.standard_t(config.noise_df, len(times))
    mags, hits = inject_outliers(mags + noise, config.outlier_rate,
                                 config.outlier_magnitude, rng,
                                 config.noise_sigma)
    return times, mags, hits


def simulate_null(config: SimulationConfig, rng: np.random.Generator,
                  source_id: str = "null", field_id: str = "F0") -> LightCurve:
    """Quiet source: trend, t noise, and outliers only."""
    times, mags, _ = _base_curve(config, rng)
    return LightCurve(source_id=source_id, field_id=field_id,
                      times=times, values=mags)


def simulate_event(config: SimulationConfig, rng: np.random.Generator,
                   source_id: str = "event", field_id: str = "F0"):
    """Microlensing-like curve; the bump peaks inside an observed season."""
    times, mags, hits = _base_curve(config, rng)
    u0 = rng.uniform(*config.u0_range)
    te = rng.uniform(*config.te_range)
    season = int(rng.integers(0, config.n_seasons))
    active = (1.0 - config.gap_fraction) * config.season_length
    t0 = season * config.season_length + rng.uniform(0.0, active)
    shift = -2.5 * np.log10(paczynski_magnification(times, u0, t0, te))
    curve = LightCurve(source_id=source_id, field_id=field_id,
                       times=times, values=mags + shift)
    truth = TruthRecord(source_id=source_id, kind="event", u0=u0, t0=t0,
                        te=te, n_outliers=len(hits), outlier_index=hits)
    return curve, truth


def simulate_periodic(config: SimulationConfig, rng: np.random.Generator,
                      source_id: str = "periodic", field_id: str = "F0"):
    """Sinusoidal or two-harmonic oscillator in the screening band."""
    times, mags, hits = _base_curve(config, rng)
    period = np.exp(rng.uniform(np.log(config.period_range[0]),
                                np.log(config.period_range[1])))
    amplitude = rng.uniform(*config.amplitude_range)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    second = rng.uniform(0.0, 0.5) if rng.random() < 0.5 else 0.0
    phase2 = rng.uniform(0.0, 2.0 * np.pi)
    omega = 2.0 * np.pi / period
    wave = np.sin(omega * times + phase)
    if second > 0:
        wave = wave + second * np.sin(2.0 * omega * times + phase2)
    curve = LightCurve(source_id=source_id, field_id=field_id,
                       times=times, values=mags + amplitude * wave)
    truth = TruthRecord(source_id=source_id, kind="periodic", period=period,
                        amplitude=amplitude, n_outliers=len(hits),
                        outlier_index=hits)
    return curve, truth


def noiseless(config: SimulationConfig) -> SimulationConfig:
    """Copy of the configuration with noise and outliers switched off."""
    return replace(config, noise_sigma=0.0, outlier_rate=0.0)


TRUTH_HEADER = ["source_id", "class", "u0", "t0", "tE", "period",
                "amplitude", "n_outliers"]


def _truth_row(truth: TruthRecord):
    def fmt(x):
        return "NA" if np.isnan(x) else "%.10g" % x

    return [truth.source_id, truth.kind, fmt(truth.u0), fmt(truth.t0),
            fmt(truth.te), fmt(truth.period), fmt(truth.amplitude),
            str(truth.n_outliers)]


def generate_corpus(config: SimulationConfig, out_dir, n_null: int,
                    n_event: int, n_periodic: int,
                    fields: int = 1) -> dict:
    """Write a manifest, per-curve files, and the truth table.

    Curve i draws from its own seed substream, so the corpus is a pure
    function of (config, counts) and can be regenerated piecewise.  Sources
    are dealt round-robin across `fields` sky fields.
    """
    from . import io as bio

    os.makedirs(os.path.join(out_dir, "curves"), exist_ok=True)
    kinds = ["null"] * n_null + ["event"] * n_event + ["periodic"] * n_periodic
    entries, truth_rows = [], []
    for i, kind in enumerate(kinds):
        sid = "S%06d" % i
        fid = "F%03d" % (i % fields)
        rng = curve_rng(config.seed, i)
        if kind == "null":
            curve = simulate_null(config, rng, sid, fid)
            truth = TruthRecord(source_id=sid, kind="null")
        elif kind == "event":
            curve, truth = simulate_event(config, rng, sid, fid)
        else:
            curve, truth = simulate_periodic(config, rng, sid, fid)
        rel = os.path.join("curves", sid + ".txt")
        bio.write_curve_file(os.path.join(out_dir, rel), curve)
        entries.append(bio.ManifestEntry(sid, fid, rel))
        truth_rows.append(_truth_row(truth))
    bio.write_manifest(os.path.join(out_dir, "manifest.tsv"), entries)
    bio.write_table(os.path.join(out_dir, "truth.tsv"), TRUTH_HEADER,
                    truth_rows)
    return {"n_curves": len(kinds), "out_dir": str(out_dir)}
