"""Aggregated experiment reports: delimited output, text tables, figures.

A report holds one row per (method, N_aug) cell with mean and population std
over seeds for AP, precision, and recall. Each method also gets a derived
average row: the mean of its per-row means paired with the mean of its
per-row stds. Rendering is pinned to 3 decimals with round-half-even, so
``parse(emit(report))`` reproduces the report at that precision.
"""

import json
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

from .errors import ValidationError
from .metrics import aggregate

AVERAGE_KEY = "average"


def round3(x: float) -> float:
    """Round to 3 decimals, half-even, on the shortest decimal form of x."""
    return float(Decimal(repr(float(x))).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN))


def fmt3(x: float) -> str:
    """Render like the tables: 3 decimals, no leading zero (.626, 1.000)."""
    q = Decimal(repr(float(x))).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    s = f"{q:.3f}"
    if s.startswith("0."):
        return s[1:]
    if s.startswith("-0."):
        return "-" + s[2:]
    return s


@dataclass(frozen=True)
class ReportRow:
    method: str
    n_aug: int
    ap_mean: float
    ap_std: float
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    num_seeds: int


@dataclass
class MetricsReport:
    rows: list
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        seen = set()
        for row in self.rows:
            key = (row.method, row.n_aug)
            if key in seen:
                raise ValidationError(f"duplicate report row {key}")
            seen.add(key)

    def methods(self) -> list:
        out = []
        for row in self.rows:
            if row.method not in out:
                out.append(row.method)
        return out

    def average_rows(self) -> dict:
        """Per method: mean of the per-row means and mean of the per-row stds."""
        out = {}
        for method in self.methods():
            rows = [r for r in self.rows if r.method == method]
            out[method] = ReportRow(
                method=method,
                n_aug=-1,
                ap_mean=_mean(r.ap_mean for r in rows),
                ap_std=_mean(r.ap_std for r in rows),
                precision_mean=_mean(r.precision_mean for r in rows),
                precision_std=_mean(r.precision_std for r in rows),
                recall_mean=_mean(r.recall_mean for r in rows),
                recall_std=_mean(r.recall_std for r in rows),
                num_seeds=rows[0].num_seeds,
            )
        return out

    def rounded(self) -> "MetricsReport":
        rows = [
            replace(
                r,
                ap_mean=round3(r.ap_mean),
                ap_std=round3(r.ap_std),
                precision_mean=round3(r.precision_mean),
                precision_std=round3(r.precision_std),
                recall_mean=round3(r.recall_mean),
                recall_std=round3(r.recall_std),
            )
            for r in self.rows
        ]
        return MetricsReport(rows=rows, metadata=dict(self.metadata))


def _mean(values) -> float:
    vals = list(values)
    return sum(vals) / len(vals)


def build_row(method: str, n_aug: int, per_seed_triples) -> ReportRow:
    """Aggregate per-seed (ap, precision, recall) triples into one row."""
    triples = list(per_seed_triples)
    if not triples:
        raise ValidationError(f"row ({method}, {n_aug}) has no per-seed results")
    ap_m, ap_s = aggregate([t[0] for t in triples])
    p_m, p_s = aggregate([t[1] for t in triples])
    r_m, r_s = aggregate([t[2] for t in triples])
    return ReportRow(method, int(n_aug), ap_m, ap_s, p_m, p_s, r_m, r_s, len(triples))


_CSV_HEADER = "method|n_aug|num_seeds|ap_mean|ap_std|precision_mean|precision_std|recall_mean|recall_std"


def emit_report(report: MetricsReport, fmt: str = "csv") -> str:
    """Serialize a report. ``fmt`` is ``csv`` (pipe-delimited) or ``table``."""
    report.validate()
    if fmt == "csv":
        return _emit_csv(report)
    if fmt == "table":
        return _emit_table(report)
    raise ValidationError(f"unknown report format {fmt!r}")


def _emit_csv(report: MetricsReport) -> str:
    lines = []
    if report.metadata:
        lines.append("# " + json.dumps(report.metadata, sort_keys=True))
    lines.append(_CSV_HEADER)
    averages = report.average_rows()
    for row in report.rows:
        lines.append(_csv_row(row, str(row.n_aug)))
    for method in report.methods():
        lines.append(_csv_row(averages[method], AVERAGE_KEY))
    return "\n".join(lines) + "\n"


def _csv_row(row: ReportRow, n_aug_text: str) -> str:
    vals = [
        row.ap_mean, row.ap_std,
        row.precision_mean, row.precision_std,
        row.recall_mean, row.recall_std,
    ]
    cells = [row.method, n_aug_text, str(row.num_seeds)] + [fmt3(v) for v in vals]
    return "|".join(cells)


def _emit_table(report: MetricsReport) -> str:
    headers = ["Method", "N_aug", "AP", "Precision", "Recall"]
    body = []
    averages = report.average_rows()
    for row in report.rows:
        body.append(_table_cells(row, str(row.n_aug)))
    for method in report.methods():
        body.append(_table_cells(averages[method], "Average"))
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    for cells in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)))
    return "\n".join(lines) + "\n"


def _table_cells(row: ReportRow, n_aug_text: str) -> list:
    return [
        row.method,
        n_aug_text,
        f"{fmt3(row.ap_mean)} ({fmt3(row.ap_std)})",
        f"{fmt3(row.precision_mean)} ({fmt3(row.precision_std)})",
        f"{fmt3(row.recall_mean)} ({fmt3(row.recall_std)})",
    ]


def _parse_cell(text: str) -> float:
    t = text.strip()
    if t.startswith("."):
        t = "0" + t
    elif t.startswith("-."):
        t = "-0" + t[1:]
    return float(t)


def parse_report(text: str) -> MetricsReport:
    """Inverse of ``emit_report(..., "csv")`` at 3-decimal precision."""
    metadata = {}
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for ln in lines:
        if ln.startswith("#"):
            try:
                metadata = json.loads(ln[1:].strip())
            except json.JSONDecodeError as exc:
                raise ValidationError(f"malformed report metadata line: {exc}") from exc
            continue
        if ln == _CSV_HEADER:
            continue
        cells = ln.split("|")
        if len(cells) != 9:
            raise ValidationError(f"malformed report row: {ln!r}")
        if cells[1] == AVERAGE_KEY:
            continue  # derived, recomputed from the kept rows
        rows.append(
            ReportRow(
                method=cells[0],
                n_aug=int(cells[1]),
                num_seeds=int(cells[2]),
                ap_mean=_parse_cell(cells[3]),
                ap_std=_parse_cell(cells[4]),
                precision_mean=_parse_cell(cells[5]),
                precision_std=_parse_cell(cells[6]),
                recall_mean=_parse_cell(cells[7]),
                recall_std=_parse_cell(cells[8]),
            )
        )
    report = MetricsReport(rows=rows, metadata=metadata)
    report.validate()
    return report


def render_report_figures(report: MetricsReport, out_dir) -> list:
    """Plot each metric against N_aug per method; returns the written paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = [
        ("ap", "AP", lambda r: (r.ap_mean, r.ap_std)),
        ("precision", "Precision", lambda r: (r.precision_mean, r.precision_std)),
        ("recall", "Recall", lambda r: (r.recall_mean, r.recall_std)),
    ]
    paths = []
    for key, label, pick in panels:
        fig, ax = plt.subplots(figsize=(5.0, 3.4))
        for method in report.methods():
            rows = sorted((r for r in report.rows if r.method == method), key=lambda r: r.n_aug)
            xs = [r.n_aug for r in rows]
            means = [pick(r)[0] for r in rows]
            stds = [pick(r)[1] for r in rows]
            ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3, label=method)
        ax.set_xlabel("N_aug")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{key}_vs_n_aug.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths
