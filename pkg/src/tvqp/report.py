"""Tracking metrics, summary tables and SVG line charts."""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .engine import RunTrace, _fmt
from .errors import OracleError
from .oracle import StationarySet, find_stationary_set, nearest_stationary, sampled_minimizer
from .qp_model import AggregateObjective, TimeVaryingQP


class OracleCache:
    """Memoized minimizers x*(t) and stationary sets keyed by aggregate content."""

    def __init__(self, qp: TimeVaryingQP, multistarts: int = 64, tol: float = 1e-10, dedup_radius: float = 1e-6):
        self.qp = qp
        self.multistarts = multistarts
        self.tol = tol
        self.dedup_radius = dedup_radius
        self._minimizers: dict[float, tuple[np.ndarray, float]] = {}
        self._sets: dict[str, StationarySet] = {}

    def minimizer(self, t: float) -> tuple[np.ndarray, float]:
        t = float(t)
        if t not in self._minimizers:
            self._minimizers[t] = sampled_minimizer(self.qp, t, self.tol)
        return self._minimizers[t]

    def stationary(self, agg: AggregateObjective) -> StationarySet:
        key = agg.fingerprint()
        if key not in self._sets:
            self._sets[key] = find_stationary_set(agg, self.qp.box, self.multistarts, self.tol, self.dedup_radius)
        return self._sets[key]


@dataclass
class SummaryReport:
    label: str
    rms_error: float
    avg_before_sample: float
    max_error: float
    final_alpha: np.ndarray = field(default_factory=lambda: np.empty(0))
    available: bool = True

    def row(self) -> dict[str, str]:
        last = self.final_alpha[-1] if self.final_alpha.size else math.nan
        return {
            "label": self.label,
            "rms_error": _fmt(self.rms_error),
            "avg_before_sample": _fmt(self.avg_before_sample),
            "max_error": _fmt(self.max_error),
            "final_alpha": _fmt(float(last)),
            "metrics": "ok" if self.available else "unavailable",
        }


def alpha_and_error(trace: RunTrace, oracle: OracleCache) -> tuple[np.ndarray, np.ndarray]:
    """alpha(k; z) against the nearest stationary point and ||x*(t_z) - x(k)||."""
    z_rows = trace.row_interval
    alpha = np.empty(trace.K + 1)
    err = np.empty(trace.K + 1)
    for z, agg in enumerate(trace.aggregates):
        sel = np.flatnonzero(z_rows == z)
        X = trace.states[sel]
        xstar, _ = oracle.minimizer(trace.t[z])
        err[sel] = np.linalg.norm(X - xstar, axis=1)
        sset = oracle.stationary(agg)
        if len(sset) == 0:
            raise OracleError(f"no stationary point found at t_z = {trace.t[z]}")
        if len(sset) == 1:
            ref = np.full(sel.size, sset.costs[0])
        else:
            ref = np.array([nearest_stationary(sset, x)[1] for x in X])
        alpha[sel] = agg.costs(X) - ref
    return alpha, err


def summarize(trace: RunTrace) -> SummaryReport:
    if trace.err_opt is None:
        return SummaryReport(trace.label, math.nan, math.nan, math.nan, available=False)
    e = trace.err_opt
    before = e[trace.eta]
    final_alpha = trace.alpha[trace.eta] if trace.alpha is not None else np.empty(0)
    return SummaryReport(
        trace.label,
        rms_error=float(np.sqrt(np.mean(e**2))),
        avg_before_sample=float(np.mean(before)),
        max_error=float(np.max(e)),
        final_alpha=final_alpha,
    )


def compute_metrics(trace: RunTrace, oracle: OracleCache | None) -> tuple[RunTrace, SummaryReport]:
    """Attach alpha and err_opt columns; with no oracle (or an oracle failure) they stay blank."""
    if oracle is None:
        return trace, summarize(trace)
    try:
        alpha, err = alpha_and_error(trace, oracle)
    except OracleError:
        return trace, summarize(trace)
    trace = trace.with_metrics(alpha, err)
    return trace, summarize(trace)


def atomic_write_csv(path, header, rows) -> None:
    """Write to a temporary file in the target directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_summary_csv(reports: list[SummaryReport], path, extra: list[dict] | None = None) -> None:
    rows = [r.row() for r in reports]
    if extra:
        rows = [{**e, **r} for e, r in zip(extra, rows)]
    header = list(rows[0].keys()) if rows else ["label"]
    atomic_write_csv(path, header, [[row[h] for h in header] for row in rows])


# -- SVG -------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 800, 500
_MARGIN = dict(left=80, right=160, top=40, bottom=60)


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _num(v: float) -> str:
    return format(v, ".4g")


def svg_chart(series: dict[str, tuple[np.ndarray, np.ndarray]], title: str = "", xlabel: str = "", ylabel: str = "") -> str:
    """One polyline per series on linear axes scaled to the data range."""
    finite = [(np.asarray(x, float), np.asarray(y, float)) for x, y in series.values()]
    xs = np.concatenate([x[np.isfinite(y)] for x, y in finite]) if finite else np.zeros(1)
    ys = np.concatenate([y[np.isfinite(y)] for _, y in finite]) if finite else np.zeros(1)
    if xs.size == 0:
        xs = ys = np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    L, R, T, Bm = _MARGIN["left"], _MARGIN["right"], _MARGIN["top"], _MARGIN["bottom"]
    pw, ph = WIDTH - L - R, HEIGHT - T - Bm

    def px(x):
        return L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{L}" y1="{T + ph}" x2="{L + pw}" y2="{T + ph}" stroke="black"/>',
        f'<line x1="{L}" y1="{T}" x2="{L}" y2="{T + ph}" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{px(v):.2f}" y1="{T + ph}" x2="{px(v):.2f}" y2="{T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{T + ph + 20}" text-anchor="middle" font-size="12">{_num(v)}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{L - 5}" y1="{py(v):.2f}" x2="{L}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="12">{_num(v)}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle" font-size="13">{xlabel}</text>')
    out.append(
        f'<text x="18" y="{T + ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {T + ph / 2:.1f})">{ylabel}</text>'
    )
    for idx, (name, (x, y)) in enumerate(series.items()):
        color = _PALETTE[idx % len(_PALETTE)]
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = T + 16 * idx + 8
        out.append(f'<line x1="{L + pw + 15}" y1="{ly}" x2="{L + pw + 35}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{L + pw + 40}" y="{ly + 4}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def plot_csv(csv_path, svg_path, cols: list[str]) -> None:
    """First column is the x axis, the rest are plotted as series."""
    from .engine import read_trace_csv
    from .errors import ConfigError

    data = read_trace_csv(csv_path)
    missing = [c for c in cols if c not in data]
    if missing:
        raise ConfigError(f"columns not in {csv_path}: {', '.join(missing)}")
    if len(cols) < 2:
        raise ConfigError("need an x column and at least one y column")
    x = data[cols[0]]
    series = {c: (x, data[c]) for c in cols[1:]}
    write_svg(svg_path, svg_chart(series, title=os.path.basename(str(csv_path)), xlabel=cols[0], ylabel=", ".join(cols[1:])))
