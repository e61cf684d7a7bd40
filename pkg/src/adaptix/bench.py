"""Synthetic moving-front benchmark harness.

Each time step samples the synthetic field on the current vertices,
recovers its Hessian, rebuilds the metric and adapts the mesh, recording
per-phase wall time and mesh statistics. Reports land as CSV files
(stats.csv, efficiency.csv, quality_hist.csv); a 1-thread run stores a
baseline so later multi-thread runs can report parallel efficiency.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import _atomic_write, write_vtk
from .kernels import AdaptReport, KernelParams, adapt
from .mesh import Mesh, structured_square_mesh, verify
from .metric import (DEFAULT_ETA, DEFAULT_H_MAX, DEFAULT_H_MIN, MetricField,
                     SyntheticField)
from .runtime import ThreadTeam

PHASES = ("metric", "coarsen", "swap", "refine", "smooth", "total")
BASELINE_NAME = "baseline_1thread.json"


@dataclass
class BenchConfig:
    """Benchmark parameters (CLI-facing)."""
    n: int = 50
    steps: int = 50
    threads: int = 1
    period: float | None = None   # defaults to `steps` (unit step)
    eta: float = DEFAULT_ETA
    h_min: float = DEFAULT_H_MIN
    h_max: float = DEFAULT_H_MAX
    target_elements: int | None = None
    out_dir: str | None = None
    vtk: bool = False
    check: bool = False
    max_iterations: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    @property
    def period_value(self) -> float:
        return self.period if self.period is not None else float(self.steps)


@dataclass
class StepRecord:
    step: int
    t: float
    seconds: dict
    elements: int
    vertices: int
    min_quality: float
    mean_quality: float
    edge_band_fraction: float


@dataclass
class BenchReport:
    config: BenchConfig
    records: list[StepRecord] = field(default_factory=list)
    histogram: np.ndarray = field(default_factory=lambda: np.zeros(20, np.int64))
    eta_used: float = 0.0
    deterministic: bool = True
    notes: list[str] = field(default_factory=list)

    def mean_seconds(self) -> dict:
        out = {}
        for ph in PHASES:
            out[ph] = float(np.mean([r.seconds[ph] for r in self.records])) if self.records else 0.0
        return out

    def steady_state_elements(self) -> int:
        tail = self.records[len(self.records) // 2:]
        return int(np.mean([r.elements for r in tail])) if tail else 0


def edge_band_fraction(mesh: Mesh, metric: MetricField,
                       lo: float = 0.8 / math.sqrt(2.0),
                       hi: float = 1.25 * math.sqrt(2.0)) -> float:
    """Fraction of alive edges whose metric length lies in [lo, hi]."""
    lengths = metric.all_edge_lengths(mesh)
    if not len(lengths):
        return 1.0
    return float(np.mean((lengths >= lo) & (lengths <= hi)))


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Run the moving-front benchmark; returns the collected report.

    With ``config.target_elements`` set, a calibration pre-pass bisects
    eta until the steady-state element count is within 10% of the target.
    """
    report = BenchReport(config=config)
    eta = config.eta
    if config.target_elements:
        eta = calibrate_eta(config)
        report.notes.append(f"calibrated eta={eta:.6g} for target {config.target_elements}")
    report.eta_used = eta
    report.deterministic = config.threads == 1

    mesh = structured_square_mesh(config.n)
    metric = MetricField(mesh, eta=eta, h_min=config.h_min, h_max=config.h_max)
    params = KernelParams()
    period = config.period_value
    out_dir = Path(config.out_dir) if config.out_dir else None

    with ThreadTeam(config.threads) as team:
        for step in range(config.steps):
            t = step * period / config.steps
            t0 = time.perf_counter()
            psi = SyntheticField(period, t)
            values = psi.on_mesh(mesh)
            metric.build_from_values(mesh, values, team=team)
            t_metric = time.perf_counter() - t0
            if config.check:
                rep = verify(mesh)
                if not rep.ok:
                    raise RuntimeError(f"non-conforming mesh entering step {step}: {rep}")

            adapt_report = adapt(mesh, metric, params, team=team,
                                 max_iterations=config.max_iterations,
                                 check=config.check)

            seconds = {ph: adapt_report.seconds.get(ph, 0.0) for ph in PHASES[1:-1]}
            seconds["metric"] = t_metric
            seconds["total"] = t_metric + sum(adapt_report.seconds.values())
            report.records.append(StepRecord(
                step=step, t=t, seconds=seconds,
                elements=adapt_report.elements, vertices=adapt_report.vertices,
                min_quality=adapt_report.min_quality,
                mean_quality=adapt_report.mean_quality,
                edge_band_fraction=edge_band_fraction(mesh, metric)))
            report.histogram = adapt_report.histogram
            if out_dir and config.vtk:
                write_vtk(mesh, out_dir / f"mesh_step{step:04d}.vtk")

    if out_dir:
        emit_report(report, out_dir)
        if config.threads == 1:
            _store_baseline(report, out_dir)
    return report


def calibrate_eta(config: BenchConfig, tolerance: float = 0.10,
                  max_bisections: int = 12) -> float:
    """Bisect log10(eta) until the steady-state element count of a short
    probe run lands within `tolerance` of the requested target.

    Larger eta means laxer error weighting and fewer elements, so the
    count is monotone decreasing in eta.
    """
    target = config.target_elements
    if not target:
        return config.eta

    def probe(eta: float) -> int:
        mesh = structured_square_mesh(config.n)
        metric = MetricField(mesh, eta=eta, h_min=config.h_min, h_max=config.h_max)
        params = KernelParams()
        with ThreadTeam(config.threads) as team:
            last = 0
            for _ in range(6):
                values = SyntheticField(config.period_value, 0.0).on_mesh(mesh)
                metric.build_from_values(mesh, values, team=team)
                rep = adapt(mesh, metric, params, team=team,
                            max_iterations=config.max_iterations)
                if last and abs(rep.elements - last) <= 0.02 * last:
                    break
                last = rep.elements
        return rep.elements

    lo, hi = -5.0, 1.0  # log10(eta) bracket
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        count = probe(10.0 ** mid)
        if abs(count - target) <= tolerance * target:
            return 10.0 ** mid
        if count > target:   # too many elements -> raise eta
            lo = mid
        else:
            hi = mid
    return 10.0 ** (0.5 * (lo + hi))


# ----------------------------------------------------------------------
# report files


def emit_report(report: BenchReport, out_dir) -> list[Path]:
    """Write stats.csv, efficiency.csv and quality_hist.csv (atomically).

    stats.csv rows: step, phase, seconds, elements, vertices, min_q, mean_q.
    efficiency.csv compares against a stored 1-thread baseline when one
    exists; otherwise the file carries only the header and a note is added
    to the report.
    """
    out_dir = Path(out_dir)
    written = []

    lines = ["step,phase,seconds,elements,vertices,min_q,mean_q"]
    for r in report.records:
        for ph in PHASES:
            lines.append(f"{r.step},{ph},{r.seconds[ph]:.6f},{r.elements},"
                         f"{r.vertices},{r.min_quality:.4f},{r.mean_quality:.4f}")
    path = out_dir / "stats.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)

    eff_lines = ["phase,threads,mean_seconds,baseline_seconds,speedup,efficiency"]
    baseline = _load_baseline(out_dir)
    means = report.mean_seconds()
    if baseline is None and report.config.threads != 1:
        report.notes.append("no 1-thread baseline stored; efficiency column omitted")
    elif report.config.threads != 1:
        for ph in PHASES:
            t1 = baseline.get(ph)
            tn = means[ph]
            if t1 and tn > 0:
                s = t1 / tn
                eff_lines.append(f"{ph},{report.config.threads},{tn:.6f},{t1:.6f},"
                                 f"{s:.3f},{s / report.config.threads:.3f}")
    path = out_dir / "efficiency.csv"
    _atomic_write(path, "\n".join(eff_lines) + "\n")
    written.append(path)

    hist_lines = ["bin_lo,bin_hi,count"]
    edgesq = np.linspace(0.0, 1.0, len(report.histogram) + 1)
    for i, c in enumerate(report.histogram):
        hist_lines.append(f"{edgesq[i]:.2f},{edgesq[i + 1]:.2f},{int(c)}")
    path = out_dir / "quality_hist.csv"
    _atomic_write(path, "\n".join(hist_lines) + "\n")
    written.append(path)

    meta = {
        "config": {k: (v if not isinstance(v, Path) else str(v))
                   for k, v in vars(report.config).items()},
        "eta_used": report.eta_used,
        "deterministic": report.deterministic,
        "steady_state_elements": report.steady_state_elements(),
        "notes": report.notes,
    }
    path = out_dir / "report.json"
    _atomic_write(path, json.dumps(meta, indent=2) + "\n")
    written.append(path)
    return written


def _store_baseline(report: BenchReport, out_dir) -> None:
    _atomic_write(Path(out_dir) / BASELINE_NAME,
                  json.dumps(report.mean_seconds(), indent=2) + "\n")


def _load_baseline(out_dir) -> dict | None:
    path = Path(out_dir) / BASELINE_NAME
    if not path.exists():
        return None
    with open(path) as fh:
        return json.load(fh)
