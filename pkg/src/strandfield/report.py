"""Evaluation report writer: key=value text, per-view CSV, and figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def summary_line(report: EvalReport, prefix: str = "eval") -> str:
    return (f"{prefix} ok views={len(report.per_view)} "
            f"hairsale_deg={report.hairsale_deg:.4f} "
            f"hairrida_pct={report.hairrida_pct:.4f} "
            f"iou={report.iou:.4f}")


def write_eval_report(report: EvalReport, out_dir, extra: dict | None = None) -> list[str]:
    """Write report.txt, per_view.csv and metric figures; returns the list
    of files written (relative to out_dir)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    lines = [
        f"hairsale_deg={report.hairsale_deg!r}",
        f"hairrida_pct={report.hairrida_pct!r}",
        f"iou={report.iou!r}",
        f"n_views={len(report.per_view)}",
        f"n_pairs_requested={report.n_pairs_requested}",
        f"seed={report.seed}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"{k}={v}")
    (out / "report.txt").write_text("\n".join(lines) + "\n")
    written.append("report.txt")

    with open(out / "per_view.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "hairsale_deg", "hairrida_pct", "iou",
                    "n_orient_pixels", "n_depth_pairs"])
        for v in report.per_view:
            w.writerow([v.view, v.hairsale_deg, v.hairrida_pct, v.iou,
                        v.n_orient_pixels, v.n_depth_pairs])
    written.append("per_view.csv")

    written.append(_metrics_figure(report, out / "metrics_per_view.png"))
    return written


def _metrics_figure(report: EvalReport, path: Path) -> str:
    views = [v.view for v in report.per_view]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    panels = [
        ("HairSale (deg)", [v.hairsale_deg for v in report.per_view], report.hairsale_deg),
        ("HairRida (%)", [v.hairrida_pct for v in report.per_view], report.hairrida_pct),
        ("Mask IoU", [v.iou for v in report.per_view], report.iou),
    ]
    for ax, (title, vals, mean) in zip(axes, panels):
        ax.bar(views, vals, color="#4878a8")
        ax.axhline(mean, color="#c44e52", lw=1, ls="--", label=f"mean {mean:.3f}")
        ax.set_title(title)
        ax.set_xlabel("view")
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path.name
