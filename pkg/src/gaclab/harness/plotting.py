"""Dependency-free SVG rendering of training curves and action scatters."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from ..gac import METRIC_COLUMNS

WIDTH, HEIGHT = 640, 400
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


class PlotError(RuntimeError):
    pass


class MissingColumnError(PlotError):
    def __init__(self, column: str, path):
        super().__init__(f"{path}: missing column {column!r}")
        self.column = column


def read_metrics(path, required: Sequence[str] = METRIC_COLUMNS) -> dict[str, np.ndarray]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise MissingColumnError(col, path)
        rows = list(reader)
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return {col: np.array([float(r[col]) for r in rows]) for col in header}


def read_actions(path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise PlotError(f"{path}: unreadable action dump ({e})") from None
    if data.size == 0:
        raise PlotError(f"{path}: no action samples")
    return data


# -- drawing ------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.4g}"


class Panel:
    """Maps data coordinates into an SVG box and collects its elements."""

    def __init__(self, x0, y0, w, h, xlim, ylim, title="", xlabel="", ylabel=""):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim = _pad(xlim)
        self.ylim = _pad(ylim)
        self.parts: list[str] = []
        self._axes(title, xlabel, ylabel)

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (np.asarray(x) - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (np.asarray(y) - lo) / (hi - lo) * self.h

    def _axes(self, title, xlabel, ylabel):
        x0, y0, w, h = self.x0, self.y0, self.w, self.h
        self.parts.append(f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444"/>')
        for i in range(5):
            fx = self.xlim[0] + i * (self.xlim[1] - self.xlim[0]) / 4
            fy = self.ylim[0] + i * (self.ylim[1] - self.ylim[0]) / 4
            X, Y = float(self.px(fx)), float(self.py(fy))
            self.parts.append(f'<text x="{X:.1f}" y="{y0 + h + 14}" font-size="10" '
                              f'text-anchor="middle">{_fmt(fx)}</text>')
            self.parts.append(f'<text x="{x0 - 4}" y="{Y + 3:.1f}" font-size="10" '
                              f'text-anchor="end">{_fmt(fy)}</text>')
        if title:
            self.parts.append(f'<text x="{x0 + w / 2}" y="{y0 - 8}" font-size="13" '
                              f'text-anchor="middle">{escape(title)}</text>')
        if xlabel:
            self.parts.append(f'<text x="{x0 + w / 2}" y="{y0 + h + 30}" font-size="11" '
                              f'text-anchor="middle">{escape(xlabel)}</text>')
        if ylabel:
            cy = y0 + h / 2
            self.parts.append(f'<text x="{x0 - 44}" y="{cy}" font-size="11" text-anchor="middle" '
                              f'transform="rotate(-90 {x0 - 44} {cy})">{escape(ylabel)}</text>')

    def line(self, x, y, color, label=None):
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(self.px(x), self.py(y)))
        title = f"<title>{escape(label)}</title>" if label else ""
        self.parts.append(f'<polyline class="curve" fill="none" stroke="{color}" stroke-width="1.5" '
                          f'points="{pts}">{title}</polyline>')

    def band(self, x, lo, hi, color):
        xs = np.concatenate([x, x[::-1]])
        ys = np.concatenate([hi, lo[::-1]])
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(self.px(xs), self.py(ys)))
        self.parts.append(f'<polygon class="band" fill="{color}" fill-opacity="0.2" stroke="none" points="{pts}"/>')

    def points(self, x, y, color):
        for a, b in zip(self.px(x), self.py(y)):
            self.parts.append(f'<circle class="point" cx="{a:.2f}" cy="{b:.2f}" r="2" '
                              f'fill="{color}" fill-opacity="0.5"/>')


def _pad(lim):
    lo, hi = float(lim[0]), float(lim[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return (0.0, 1.0)
    if hi - lo < 1e-12:
        return (lo - 0.5, hi + 0.5)
    return (lo, hi)


def _document(parts: list[str], width=WIDTH, height=HEIGHT) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        *parts,
        "</svg>",
    ]) + "\n"


def _write(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text)
    return path


# -- figures -------------------------------------------------------------------

def _aligned(runs: list[dict[str, np.ndarray]], column: str):
    """Rows where every run has a finite value of ``column`` at the same step."""
    steps = None
    for run in runs:
        ok = run["step"][np.isfinite(run[column])]
        steps = set(ok.tolist()) if steps is None else steps & set(ok.tolist())
    steps = np.array(sorted(steps or ()))
    if steps.size == 0:
        raise PlotError(f"no finite {column!r} values shared by all runs")
    env_steps = None
    values = []
    for run in runs:
        idx = np.searchsorted(run["step"], steps)
        values.append(run[column][idx])
        env_steps = run["env_steps"][idx] if env_steps is None else env_steps
    return env_steps, np.vstack(values)


def return_curves(runs: list[dict[str, np.ndarray]], path, title="evaluation return") -> Path:
    """Mean return across runs; the shaded band spans min to max when there are several."""
    if not runs:
        raise PlotError("no runs to plot")
    x, ys = _aligned(runs, "eval_return_mean")
    mean, lo, hi = ys.mean(axis=0), ys.min(axis=0), ys.max(axis=0)
    p = Panel(MARGIN + 10, 30, WIDTH - 2 * MARGIN, HEIGHT - 100, (x.min(), x.max()),
              (lo.min(), hi.max()), title, "environment steps", "return")
    if len(runs) > 1:
        p.band(x, lo, hi, COLORS[0])
    p.line(x, mean, COLORS[0], f"mean of {len(runs)} run(s)")
    return _write(path, _document(p.parts))


def diagnostic_curves(runs: list[dict[str, np.ndarray]], path) -> Path:
    """Stacked mmd / alpha / beta panels, one line per run."""
    if not runs:
        raise PlotError("no runs to plot")
    cols = ("mmd_value", "alpha", "beta")
    height = 3 * 170 + 40
    parts: list[str] = []
    for k, col in enumerate(cols):
        series = [(r["env_steps"], r[col]) for r in runs]
        finite = np.concatenate([y[np.isfinite(y)] for _, y in series])
        xs = np.concatenate([x for x, _ in series])
        ylim = (finite.min(), finite.max()) if finite.size else (0.0, 1.0)
        p = Panel(MARGIN + 10, 30 + k * 170, WIDTH - 2 * MARGIN, 120, (xs.min(), xs.max()), ylim,
                  col, "environment steps" if k == len(cols) - 1 else "", col)
        for i, (x, y) in enumerate(series):
            ok = np.isfinite(y)
            if ok.any():
                p.line(x[ok], y[ok], COLORS[i % len(COLORS)], f"run {i}")
        parts += p.parts
    return _write(path, _document(parts, height=height))


def action_scatter(actions: np.ndarray, path, title="sampled actions") -> Path:
    """One ``<circle>`` per sample. 1-D actions are spread vertically by sample index."""
    actions = np.asarray(actions, dtype=np.float64)
    if actions.ndim == 1:
        actions = actions[:, None]
    n = actions.shape[0]
    if n == 0:
        raise PlotError("no action samples")
    if actions.shape[1] == 1:
        x, y, ylabel = actions[:, 0], np.arange(n) / max(n - 1, 1), "sample index (scaled)"
    else:
        x, y, ylabel = actions[:, 0], actions[:, 1], "a[1]"
    lo = min(-1.0, float(x.min()))
    hi = max(1.0, float(x.max()))
    ylim = (0.0, 1.0) if actions.shape[1] == 1 else (min(-1.0, float(y.min())), max(1.0, float(y.max())))
    p = Panel(MARGIN + 10, 30, WIDTH - 2 * MARGIN, HEIGHT - 100, (lo, hi), ylim, title, "a[0]", ylabel)
    p.points(x, y, COLORS[0])
    return _write(path, _document(p.parts))


# -- directory driver ---------------------------------------------------------------

def _metric_files(d: Path) -> list[Path]:
    if (d / "metrics.csv").is_file():
        return [d / "metrics.csv"]
    return sorted(d.glob("seed_*/metrics.csv"))


def plot_dirs(dirs: Sequence, out_dir=None) -> list[Path]:
    """Render every figure for each run directory.

    A directory either holds ``metrics.csv`` itself or ``seed_*`` subdirectories
    that do; seeds are aggregated. Any ``actions*.csv`` dump found is scattered.
    Everything is read and checked before the first file is written.
    """
    jobs = []
    for d in map(Path, dirs):
        files = _metric_files(d)
        if not files:
            raise PlotError(f"{d}: no metrics.csv found")
        runs = [read_metrics(f) for f in files]
        _aligned(runs, "eval_return_mean")
        dumps = sorted(d.glob("actions*.csv")) + sorted(d.glob("seed_*/actions*.csv"))
        scatters = [(f, read_actions(f)) for f in dumps]
        target = Path(out_dir) if out_dir is not None else d
        jobs.append((d, target, runs, scatters))
    written = []
    for d, target, runs, scatters in jobs:
        target.mkdir(parents=True, exist_ok=True)
        stem = d.name if len(dirs) > 1 and target != d else ""
        pre = f"{stem}_" if stem else ""
        written.append(return_curves(runs, target / f"{pre}returns.svg", f"evaluation return ({d.name})"))
        written.append(diagnostic_curves(runs, target / f"{pre}diagnostics.svg"))
        for f, acts in scatters:
            tag = f.parent.name + "_" if f.parent != d else ""
            written.append(action_scatter(acts, target / f"{pre}{tag}{f.stem}_scatter.svg", f.stem))
    return written
