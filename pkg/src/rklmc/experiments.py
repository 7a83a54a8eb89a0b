"""Experiment protocols: strong convergence, dimension dependence, GMM histogram, eight-mode scatter.

Each protocol takes a ``RunConfig`` and returns an ``ExperimentReport`` that
can be written as CSV (plus a small matplotlib script for plotting it).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .metrics import (
    fit_loglog_slope,
    gmm_marginal_density,
    gmm_marginal_quantile,
    histogram_density,
    rmse,
    wasserstein_1d,
)
from .potentials import (
    EIGHT_MODE_VARIANCE,
    Potential,
    blr_synthesize,
    make_blr,
    make_eight_mode_gmm,
    make_two_mode_gmm,
)
from .rng import StreamKey, derive_stream
from .schemes import scheme_from_name
from .simulator import SimulationSpec, run_coupled, run_ensemble

log = logging.getLogger(__name__)

ORACLE_TAG = 2
COVERAGE_RADIUS = 3.0 * np.sqrt(EIGHT_MODE_VARIANCE)


@dataclass
class ExperimentReport:
    kind: str
    header: list[str]
    rows: list[tuple]
    footer: list[tuple] = field(default_factory=list)
    slopes: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    stats: dict[str, float] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    extra_tables: dict[str, list[tuple]] = field(default_factory=dict)

    def to_csv(self) -> str:
        return _csv_text([tuple(self.header)] + list(self.rows) + list(self.footer))

    def cell(self, scheme: str, x: float) -> tuple[float, float]:
        """``(rmse, stderr)`` of one grid cell in a convergence/dimension report."""
        for row in self.rows:
            if row[0] == scheme and row[1] == x:
                return row[2], row[3]
        raise KeyError((scheme, x))

    def column(self, scheme: str) -> list[tuple[float, float, float]]:
        return [row[1:] for row in self.rows if row[0] == scheme]

    def write(self, directory) -> list[Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        main = out / f"{self.kind}.csv"
        main.write_text(self.to_csv(), encoding="utf-8")
        written.append(main)
        for name, table in self.extra_tables.items():
            path = out / f"{name}.csv"
            path.write_text(_csv_text(table), encoding="utf-8")
            written.append(path)
        script = out / f"plot_{self.kind}.py"
        script.write_text(PLOT_SCRIPTS[self.kind].format(csv=main.name), encoding="utf-8")
        written.append(script)
        return written


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def derive_seed(master_seed: int, *labels: int) -> int:
    """A 64-bit seed for a sub-experiment (e.g. one dimension) of a run."""
    seq = np.random.SeedSequence([master_seed, *labels])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def build_model(cfg: RunConfig, d: int | None = None) -> Potential:
    d = cfg.d if d is None else d
    if cfg.model == "gmm2":
        return make_two_mode_gmm(d)
    if cfg.model == "blr":
        return make_blr(blr_synthesize(cfg.blr_seed, cfg.blr_n, d, alpha_prior=cfg.alpha_prior))
    return make_eight_mode_gmm()


def _provenance(cfg: RunConfig, **extra) -> dict:
    base = {
        "experiment": cfg.experiment,
        "model": cfg.model,
        "master_seed": cfg.master_seed,
        "M": cfg.M,
        "T": cfg.T,
        "h_ref": cfg.h_ref,
    }
    if cfg.model == "blr":
        base.update(blr_seed=cfg.blr_seed, blr_n=cfg.blr_n, alpha_prior=cfg.alpha_prior)
    base.update(extra)
    return base


def _slope_footer(report: ExperimentReport) -> None:
    for scheme, (slope, _, resid) in report.slopes.items():
        report.footer.append(("slope", scheme, slope, resid))


def convergence_experiment(cfg: RunConfig) -> ExperimentReport:
    """RMSE against the fine-grid reference at each coarse step, and fitted rates."""
    cfg.validate()
    model = build_model(cfg)
    schemes = [scheme_from_name(s) for s in cfg.schemes]
    log.info("convergence: %s d=%d, %d schemes, M=%d", cfg.model, model.dimension, len(schemes), cfg.M)
    result = run_coupled(
        schemes, model, cfg.h_ref, cfg.hs, cfg.T, cfg.M, cfg.master_seed,
        reference=scheme_from_name(cfg.reference), workers=cfg.workers,
    )
    report = ExperimentReport(
        kind="convergence",
        header=["scheme", "h", "rmse", "stderr"],
        rows=[],
        provenance=_provenance(cfg, d=model.dimension, hs=list(cfg.hs), reference=cfg.reference),
    )
    for s in schemes:
        values = []
        for h in cfg.hs:
            value, se = rmse(result.terminals[(s.label, h)], result.reference)
            report.rows.append((s.label, h, value, se))
            values.append(value)
        report.slopes[s.label] = fit_loglog_slope(cfg.hs, values)
    _slope_footer(report)
    return report


def dimension_experiment(cfg: RunConfig) -> ExperimentReport:
    """RMSE at one coarse step for each dimension, and the fitted growth rate in d."""
    cfg.validate()
    schemes = [scheme_from_name(s) for s in cfg.schemes]
    h = cfg.hs[0]
    report = ExperimentReport(
        kind="dimension",
        header=["scheme", "d", "rmse", "stderr"],
        rows=[],
        provenance=_provenance(cfg, ds=list(cfg.ds), h=h, reference=cfg.reference),
    )
    cells = {}
    for d in cfg.ds:
        log.info("dimension: d=%d", d)
        result = run_coupled(
            schemes, build_model(cfg, d), cfg.h_ref, [h], cfg.T, cfg.M, derive_seed(cfg.master_seed, d),
            reference=scheme_from_name(cfg.reference), workers=cfg.workers,
        )
        for s in schemes:
            cells[(s.label, d)] = rmse(result.terminals[(s.label, h)], result.reference)
    for s in schemes:
        for d in cfg.ds:
            report.rows.append((s.label, d, *cells[(s.label, d)]))
        report.slopes[s.label] = fit_loglog_slope(cfg.ds, [cells[(s.label, d)][0] for d in cfg.ds])
    _slope_footer(report)
    return report


def _histogram_stats(x, edges, m):
    centers = 0.5 * (edges[:-1] + edges[1:])
    empirical = histogram_density(x, edges)
    exact = gmm_marginal_density(centers, m)
    gap = float(np.max(np.abs(empirical - exact)))
    w2 = wasserstein_1d(x, lambda p: gmm_marginal_quantile(p, m))
    return centers, empirical, exact, gap, w2


def histogram_experiment(cfg: RunConfig) -> ExperimentReport:
    """First-coordinate histogram of terminal samples against the exact GMM marginal."""
    cfg.validate()
    model = build_model(cfg)
    scheme = scheme_from_name(cfg.schemes[0])
    spec = SimulationSpec.until(scheme, model, cfg.T, cfg.hs[0])
    batch = run_ensemble(spec, cfg.M, cfg.master_seed, workers=cfg.workers)
    edges = np.linspace(cfg.hist_lo, cfg.hist_hi, cfg.bins + 1)
    m = float(model.mean[0])
    centers, empirical, exact, gap, w2 = _histogram_stats(batch.states[:, 0], edges, m)

    oracle_rng = derive_stream(StreamKey(cfg.master_seed, 0, ORACLE_TAG))
    oracle = model.sample(oracle_rng, cfg.M)[:, 0]
    *_, oracle_gap, oracle_w2 = _histogram_stats(oracle, edges, m)

    return ExperimentReport(
        kind="histogram",
        header=["bin_center", "empirical_density", "exact_density"],
        rows=list(zip(centers.tolist(), empirical.tolist(), exact.tolist())),
        footer=[("sup_gap", gap), ("w2_marginal", w2)],
        stats={
            "sup_gap": gap,
            "w2_marginal": w2,
            "oracle_sup_gap": oracle_gap,
            "oracle_w2_marginal": oracle_w2,
            "bin_width": float(edges[1] - edges[0]),
        },
        provenance=_provenance(cfg, d=model.dimension, h=cfg.hs[0], scheme=scheme.label, bins=cfg.bins),
    )


def mode_coverage(samples, centers, radius: float = COVERAGE_RADIUS) -> float:
    """Fraction of mode centers with at least one sample within ``radius``."""
    samples = np.asarray(samples)
    dist = np.linalg.norm(samples[:, None, :] - centers[None, :, :], axis=-1)
    return float(np.mean(np.any(dist <= radius, axis=0)))


def eight_mode_experiment(cfg: RunConfig) -> ExperimentReport:
    """Terminal samples of each scheme on the eight-mode mixture, from N(0, I) starts."""
    cfg.validate()
    model = build_model(cfg)
    report = ExperimentReport(
        kind="scatter",
        header=["scheme", "sample_index", "x1", "x2"],
        rows=[],
        provenance=_provenance(cfg, h=cfg.hs[0], schemes=list(cfg.schemes)),
    )
    coverage_rows = [("scheme", "coverage")]
    for name in cfg.schemes:
        scheme = scheme_from_name(name)
        spec = SimulationSpec.until(scheme, model, cfg.T, cfg.hs[0], x0="normal")
        states = run_ensemble(spec, cfg.M, cfg.master_seed, workers=cfg.workers).states
        report.rows.extend((scheme.label, i, x[0], x[1]) for i, x in enumerate(states))
        cov = mode_coverage(states, model.centers)
        report.stats[f"coverage_{scheme.label}"] = cov
        coverage_rows.append((scheme.label, cov))

    oracle = model.sample(derive_stream(StreamKey(cfg.master_seed, 0, ORACLE_TAG)), cfg.M)
    report.stats["coverage_target"] = mode_coverage(oracle, model.centers)
    coverage_rows.append(("target", report.stats["coverage_target"]))
    report.extra_tables["scatter_coverage"] = coverage_rows
    return report


EXPERIMENT_RUNNERS = {
    "convergence": convergence_experiment,
    "dimension": dimension_experiment,
    "histogram": histogram_experiment,
    "eight_mode": eight_mode_experiment,
}


def run_experiment(cfg: RunConfig) -> ExperimentReport:
    return EXPERIMENT_RUNNERS[cfg.experiment](cfg)


_LOGLOG_SCRIPT = '''"""Plot {{csv}} on log-log axes."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

curves = defaultdict(list)
with open("{{csv}}") as fh:
    rows = list(csv.reader(fh))
for row in rows[1:]:
    if row[0] == "slope":
        continue
    curves[row[0]].append((float(row[1]), float(row[2])))
for scheme, pts in curves.items():
    xs, ys = zip(*sorted(pts))
    plt.loglog(xs, ys, "o-", base=2, label=scheme)
plt.xlabel("{xlabel}")
plt.ylabel("RMSE")
plt.legend()
plt.savefig("{{csv}}".replace(".csv", ".png"), dpi=150)
'''

PLOT_SCRIPTS = {
    "convergence": _LOGLOG_SCRIPT.format(xlabel="step size h"),
    "dimension": _LOGLOG_SCRIPT.format(xlabel="dimension d"),
    "histogram": '''"""Plot the histogram in {csv} against the exact marginal density."""
import csv

import matplotlib.pyplot as plt

with open("{csv}") as fh:
    rows = [r for r in list(csv.reader(fh))[1:] if len(r) == 3]
centers = [float(r[0]) for r in rows]
width = centers[1] - centers[0]
plt.bar(centers, [float(r[1]) for r in rows], width=width, alpha=0.5, label="samples")
plt.plot(centers, [float(r[2]) for r in rows], "k-", label="exact marginal")
plt.legend()
plt.savefig("{csv}".replace(".csv", ".png"), dpi=150)
''',
    "scatter": '''"""Scatter plot of the terminal samples in {csv}."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

points = defaultdict(list)
with open("{csv}") as fh:
    for row in list(csv.reader(fh))[1:]:
        points[row[0]].append((float(row[2]), float(row[3])))
fig, axes = plt.subplots(1, len(points), figsize=(4 * len(points), 4), squeeze=False)
for ax, (scheme, pts) in zip(axes[0], points.items()):
    xs, ys = zip(*pts)
    ax.scatter(xs, ys, s=4)
    ax.set_title(scheme)
    ax.set_aspect("equal")
fig.savefig("{csv}".replace(".csv", ".png"), dpi=150)
''',
}
