"""IoU / HD95 versus threshold curves."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import ParameterError  # noqa: E402
from .metrics import MetricReport  # noqa: E402


def sweep_plot(reports: dict[str, MetricReport], path, title: str | None = None) -> Path:
    """Two-panel sweep figure; format follows the suffix (.svg or .png).

    Output bytes depend only on the reports: the SVG id salt is fixed and
    the creation date is left out of the metadata.
    """
    path = Path(path)
    fmt = path.suffix.lower().lstrip(".")
    if fmt not in ("svg", "png"):
        raise ParameterError(f"plot format must be svg or png, got {path.suffix!r}")
    if not reports:
        raise ParameterError("nothing to plot")
    tags = sorted({f"{r.meta.get('config_hash', '?')}/seed={r.meta.get('seed', '?')}" for r in reports.values()})
    with plt.rc_context({"svg.hashsalt": "crackjoint", "svg.fonttype": "none"}):
        fig, (ax_i, ax_h) = plt.subplots(1, 2, figsize=(9, 3.6))
        for label, r in reports.items():
            ax_i.plot(r.thresholds, r.iou_curve, label=f"{label} (AIU {r.AIU:.3f})")
            ax_h.plot(r.thresholds, r.hd95_curve, label=f"{label} (AHD95 {r.AHD95:.2f})")
        ax_i.set(xlabel="threshold", ylabel="mean IoU", xlim=(0, 1), ylim=(0, 1))
        ax_h.set(xlabel="threshold", ylabel="mean HD95 [px]", xlim=(0, 1))
        for ax in (ax_i, ax_h):
            ax.grid(alpha=0.3)
            ax.legend(fontsize=7)
        fig.suptitle(title or "threshold sweep", fontsize=10)
        fig.text(0.99, 0.01, "; ".join(tags), ha="right", va="bottom", fontsize=6, color="0.4")
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"Date": None} if fmt == "svg" else {"Software": None}
        meta["Description"] = "; ".join(tags)
        fig.savefig(path, format=fmt, metadata=meta)
        plt.close(fig)
    return path
