"""Delimited output, JSON metadata sidecars, and figure rendering.

CSV writers format floats with ``repr`` (shortest round-trip form), so files
are bit-identical for identical inputs.  Figures are SVG with a fixed hash
salt and no timestamp, making ``plot`` a pure function of its input rows.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict

import numpy as np

from . import __version__
from .billiard import PhasePoint, TrajectoryResult, reflect
from .harness import ResultRow
from .poisson import PointConfiguration

RESULT_COLUMNS = ["eps", "t", "observable", "estimator", "estimate", "stderr", "n", "seed"]
GREEN_COLUMNS = ["eps", "t", "observable", "estimate", "stderr", "n_samples", "seed"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows_csv(rows: list[ResultRow], path: str) -> None:
    """Result table with one row per (eps, t, observable, estimator) cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in rows:
            writer.writerow(
                [_fmt(r.eps), _fmt(r.t), r.observable, r.estimator,
                 _fmt(r.estimate), _fmt(r.stderr), r.n, r.seed]
            )


def read_rows_csv(path: str) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            ResultRow(
                eps=float(row["eps"]),
                t=float(row["t"]),
                observable=row["observable"],
                estimator=row["estimator"],
                estimate=float(row["estimate"]),
                stderr=float(row["stderr"]),
                n=int(row["n"]),
                seed=int(row["seed"]),
            )
            for row in reader
        ]


def write_green_csv(records: list[dict], path: str) -> None:
    """Endpoint-law experiment table: eps, t, observable, estimate, stderr, n_samples, seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GREEN_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(rec[c]) if isinstance(rec[c], float) else rec[c]
                             for c in GREEN_COLUMNS])


def write_metadata(path: str, params: dict) -> None:
    """JSON sidecar carrying the full parameter set and the code version."""
    payload = dict(params)
    payload["package_version"] = __version__
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_configuration_csv(config: PointConfiguration, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{i + 1}" for i in range(config.dim)])
        for i, center in enumerate(config.centers):
            writer.writerow([i] + [_fmt(float(c)) for c in center])


def trajectory_rows(
    z: PhasePoint, result: TrajectoryResult, config: PointConfiguration,
    eps: float, sample_id: int = 0,
) -> list[list]:
    """One row per collision: sample_id, j, tau_j, obstacle_id, x1..xd, v1..vd.

    The state columns hold the post-collision phase point, reconstructed by
    replaying the recorded collision times and obstacle ids (no new root
    finding, so the replay is exact).
    """
    rows = []
    pos = np.asarray(z.x, dtype=float)
    vel = np.asarray(z.v, dtype=float)
    vel = vel / np.linalg.norm(vel)
    prev_t = 0.0
    for j, (tau, oid) in enumerate(zip(result.collision_times, result.obstacle_ids), start=1):
        pos = pos + (tau - prev_t) * vel
        center = config.centers[int(oid)]
        normal = pos - center
        normal = normal / np.linalg.norm(normal)
        pos = center + eps * normal
        vel = reflect(vel, normal)
        prev_t = float(tau)
        rows.append(
            [sample_id, j, float(tau), int(oid)]
            + [float(c) for c in pos]
            + [float(c) for c in vel]
        )
    return rows


def write_trajectory_csv(rows: list[list], dim: int, path: str) -> None:
    header = (
        ["sample_id", "j", "tau_j", "obstacle_id"]
        + [f"x{i + 1}" for i in range(dim)]
        + [f"v{i + 1}" for i in range(dim)]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lorentzgas"
    return plt


def _save_svg(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def render_result_lines(rows: list[ResultRow], out_dir: str, stem: str = "plot") -> list[str]:
    """Line charts of estimate vs eps, one figure per observable.

    Each estimator becomes one line with stderr error bars; eps = 0 rows
    (the limit process) are drawn as horizontal reference lines.  Returns the
    written file paths.
    """
    plt = _pyplot()
    by_obs: dict[str, list[ResultRow]] = defaultdict(list)
    for r in rows:
        by_obs[r.observable].append(r)

    written = []
    for obs_name in sorted(by_obs):
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        series: dict[tuple[str, float], list[ResultRow]] = defaultdict(list)
        for r in by_obs[obs_name]:
            series[(r.estimator, r.t)].append(r)
        for (estimator, t), cells in sorted(series.items()):
            finite = sorted((c for c in cells if c.eps > 0), key=lambda c: c.eps)
            label = f"{estimator}, t={t:g}"
            if finite:
                xs = [c.eps for c in finite]
                ys = [c.estimate for c in finite]
                es = [c.stderr for c in finite]
                ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2, label=label)
            else:
                for c in cells:
                    ax.axhline(c.estimate, linestyle="--", linewidth=1.0, label=label)
        ax.set_xlabel("eps")
        ax.set_ylabel(obs_name)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{stem}_{obs_name}.svg")
        _save_svg(fig, path)
        plt.close(fig)
        written.append(path)
    return written


def render_gap_figure(rows: list[ResultRow], path: str) -> None:
    """Per-observable convergence gap vs eps on log-log axes."""
    plt = _pyplot()
    gaps: dict[str, list[ResultRow]] = defaultdict(list)
    for r in rows:
        if r.estimator == "gap":
            gaps[r.observable].append(r)
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for name in sorted(gaps):
        cells = sorted(gaps[name], key=lambda c: c.eps)
        ax.errorbar(
            [c.eps for c in cells],
            [max(c.estimate, 1e-12) for c in cells],
            yerr=[c.stderr for c in cells],
            marker="o", capsize=2, label=name,
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("|finite-eps - limit|")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def render_mass_figure(rows: list[ResultRow], path: str) -> None:
    """Mass deficiency and its measured sources vs eps."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    series: dict[str, list[ResultRow]] = defaultdict(list)
    for r in rows:
        if r.eps > 0:
            series[r.estimator].append(r)
    for name in sorted(series):
        cells = sorted(series[name], key=lambda c: c.eps)
        ys = [
            1.0 - c.estimate if name in ("unfiltered", "restricted", "filtered") else c.estimate
            for c in cells
        ]
        label = f"1 - {name}" if name in ("unfiltered", "restricted", "filtered") else name
        ax.errorbar([c.eps for c in cells], ys, yerr=[c.stderr for c in cells],
                    marker="o", capsize=2, label=label)
    ax.set_xscale("log")
    ax.set_xlabel("eps")
    ax.set_ylabel("mass deficiency / source probability")
    ax.legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)
