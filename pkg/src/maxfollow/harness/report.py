"""Run reports and their CSV / JSON / SVG renderings. All writes are atomic."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

CSV_COLUMNS = ("scenario", "algorithm", "seed_count", "mean_return", "ci_half_width", "exact")


def atomic_write(path, data: str | bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class ReturnRow:
    algorithm: str
    mean_return: float
    ci_half_width: float = 0.0
    seed_count: int = 1
    exact: bool = True


@dataclass
class RunReport:
    scenario: str
    rows: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def row(self, algorithm: str) -> ReturnRow:
        for r in self.rows:
            if r.algorithm == algorithm:
                return r
        raise KeyError(algorithm)

    def returns_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([self.scenario, r.algorithm, r.seed_count, repr(float(r.mean_return)),
                        repr(float(r.ci_half_width)), "true" if r.exact else "false"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "returns": [r.__dict__ for r in self.rows],
            "checks": self.checks,
            "diagnostics": self.diagnostics,
            "wall_clock_seconds": self.wall_clock,
        }


def _fmt(x: float) -> str:
    return f"{x:.4f}"


# plot geometry (pixels)
WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 90


def plot_scale(rows) -> float:
    """Upper end of the value axis."""
    top = max([r.mean_return + r.ci_half_width for r in rows] + [1e-12])
    return top * 1.1 if top > 0 else 1.0


def render_svg(report: RunReport) -> str:
    """Bar chart of mean returns with CI whiskers. Output has no timestamps."""
    rows = report.rows
    ymax = plot_scale(rows)
    plot_h = HEIGHT - TOP - BOTTOM
    plot_w = WIDTH - LEFT - RIGHT
    y0 = TOP + plot_h

    def ypix(v):
        return y0 - plot_h * v / ymax

    n = max(len(rows), 1)
    slot = plot_w / n
    bar_w = slot * 0.6
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-ymax="{_fmt(ymax)}">',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(report.scenario)}</text>',
        f'<line id="x-axis" x1="{LEFT}" y1="{y0}" x2="{WIDTH - RIGHT}" y2="{y0}" stroke="black"/>',
        f'<line id="y-axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{y0}" stroke="black"/>',
        f'<text x="18" y="{TOP + plot_h / 2:.1f}" transform="rotate(-90 18 {TOP + plot_h / 2:.1f})" '
        f'text-anchor="middle" font-size="12">expected return</text>',
        f'<text x="{LEFT + plot_w / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">algorithm</text>',
    ]
    for i in range(5):
        v = ymax * i / 4
        y = ypix(v)
        out.append(f'<line class="tick" x1="{LEFT - 5}" y1="{y:.4f}" x2="{LEFT}" y2="{y:.4f}" stroke="black"/>')
        out.append(f'<text class="tick-label" x="{LEFT - 8}" y="{y + 4:.4f}" text-anchor="end" '
                   f'font-size="10">{v:.3g}</text>')
    for i, r in enumerate(rows):
        x = LEFT + slot * i + (slot - bar_w) / 2
        top = ypix(r.mean_return)
        out.append(f'<rect class="bar" data-algorithm="{escape(r.algorithm)}" x="{x:.4f}" y="{top:.4f}" '
                   f'width="{bar_w:.4f}" height="{y0 - top:.4f}" fill="#4878a8"/>')
        if r.ci_half_width > 0:
            cx = x + bar_w / 2
            lo, hi = ypix(r.mean_return - r.ci_half_width), ypix(r.mean_return + r.ci_half_width)
            out.append(f'<line class="whisker" x1="{cx:.4f}" y1="{lo:.4f}" x2="{cx:.4f}" y2="{hi:.4f}" '
                       f'stroke="black"/>')
        lx, ly = x + bar_w / 2, y0 + 14
        out.append(f'<text x="{lx:.4f}" y="{ly}" transform="rotate(30 {lx:.4f} {ly})" font-size="10">'
                   f'{escape(r.algorithm)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


def emit_plot(report: RunReport, path) -> None:
    atomic_write(path, render_svg(report))


def write_report(report: RunReport, out_dir) -> dict:
    """Write returns.csv, plot.svg, then report.json (last, so it marks a complete run)."""
    paths = {name: os.path.join(out_dir, name) for name in ("returns.csv", "plot.svg", "report.json")}
    atomic_write(paths["returns.csv"], report.returns_csv())
    emit_plot(report, paths["plot.svg"])
    atomic_write(paths["report.json"], json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return paths
