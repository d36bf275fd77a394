"""Report rendering: matplotlib figures written next to the delimited data.

Each section of the report writes its machine-readable payload (JSONL/JSON,
same serialization the API uses) and a PNG figure beside it. Rendering is
deterministic given the platform state.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .alerts import AlertFeed
from .platform import NotTrained, Platform
from .records import ActivityCategory

ALERT_COLORS = {"red": "#d62728", "yellow": "#e6b417", "green": "#2ca02c"}


def render_alert_summary(feed: AlertFeed, out_dir: Path) -> list[Path]:
    data_path = out_dir / "alerts.jsonl"
    data_path.write_bytes(feed.to_jsonl())

    kinds = sorted({a.dimension.split(":")[0] for a in feed.alerts}) or ["inschool"]
    counts = {kind: {"red": 0, "yellow": 0, "green": 0} for kind in kinds}
    for a in feed.alerts:
        counts[a.dimension.split(":")[0]][a.color.value] += 1

    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(kinds))
    bottom = np.zeros(len(kinds))
    for color in ("green", "yellow", "red"):
        values = np.array([counts[k][color] for k in kinds], dtype=float)
        ax.bar(x, values, bottom=bottom, color=ALERT_COLORS[color], label=color)
        bottom += values
    ax.set_xticks(x, kinds)
    ax.set_ylabel("alerts")
    ax.set_title("Early-warning alerts by dimension")
    ax.legend()
    fig.tight_layout()
    fig_path = out_dir / "alerts.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [data_path, fig_path]


def render_wordcloud(entries: list[dict], out_dir: Path) -> list[Path]:
    data_path = out_dir / "wordcloud.json"
    data_path.write_text(json.dumps(entries, indent=1, sort_keys=True))

    fig, ax = plt.subplots(figsize=(8, 5))
    ax.set_axis_off()
    if entries:
        top = max(e["count"] for e in entries)
        cols = 4
        for i, entry in enumerate(entries[:32]):
            row, col = divmod(i, cols)
            size = 8 + 16 * entry["count"] / top
            ax.text(0.02 + col * 0.25, 0.95 - row * 0.11, entry["term"],
                    fontsize=size, transform=ax.transAxes,
                    color=plt.cm.viridis(entry["count"] / top))
    ax.set_title("IEP narrative word cloud")
    fig.tight_layout()
    fig_path = out_dir / "wordcloud.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [data_path, fig_path]


def render_heatmap(cells: list[dict], out_dir: Path, low_support: int = 5) -> list[Path]:
    data_path = out_dir / "heatmap.json"
    data_path.write_text(json.dumps(cells, indent=1, sort_keys=True))

    sen_types = sorted({c["sen_type"] for c in cells})
    categories = [c.value for c in ActivityCategory]
    grid = np.full((len(sen_types), len(categories)), np.nan)
    support = np.zeros_like(grid)
    for c in cells:
        i = sen_types.index(c["sen_type"])
        j = categories.index(c["activity_category"])
        if c["phi"] is not None:
            grid[i, j] = c["phi"]
        support[i, j] = c["support"]

    fig, ax = plt.subplots(figsize=(8, max(3, 0.6 * len(sen_types) + 1.5)))
    masked = np.ma.masked_invalid(grid)
    cmap = plt.cm.RdBu_r.copy()
    cmap.set_bad("#bbbbbb")
    im = ax.imshow(masked, vmin=-1, vmax=1, cmap=cmap, aspect="auto")
    ax.set_xticks(range(len(categories)), categories, rotation=30, ha="right")
    ax.set_yticks(range(len(sen_types)), sen_types)
    for i in range(len(sen_types)):
        for j in range(len(categories)):
            if support[i, j] < low_support:  # grey out thin evidence
                ax.add_patch(plt.Rectangle((j - 0.5, i - 0.5), 1, 1,
                                           fill=True, color="#dddddd", alpha=0.7))
    fig.colorbar(im, ax=ax, label="phi")
    ax.set_title("SEN type vs activity category")
    fig.tight_layout()
    fig_path = out_dir / "heatmap.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [data_path, fig_path]


def render_federation(history: list[dict], out_dir: Path) -> list[Path]:
    data_path = out_dir / "federation_history.jsonl"
    data_path.write_text("".join(json.dumps(h, sort_keys=True) + "\n" for h in history))

    fig, ax = plt.subplots(figsize=(7, 4))
    if history:
        rounds = [h["round"] for h in history]
        metric = [h["metric"] for h in history]
        ax.plot(rounds, metric, marker="o", ms=3)
    ax.set_xlabel("round")
    ax.set_ylabel("holdout hit-rate@5")
    ax.set_title("Federated training progress")
    fig.tight_layout()
    fig_path = out_dir / "federation.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [data_path, fig_path]


def render_talents(platform: Platform, out_dir: Path, k: int = 10, min_score: float = 5.0) -> list[Path]:
    payload = {}
    for category in [c.value for c in ActivityCategory]:
        payload[category] = platform.talent_list(category, k, min_score)
    data_path = out_dir / "talents.json"
    data_path.write_text(json.dumps(payload, indent=1, sort_keys=True))

    fig, ax = plt.subplots(figsize=(7, 4))
    cats = list(payload)
    counts = [len(payload[c]) for c in cats]
    ax.bar(range(len(cats)), counts, color="#1f77b4")
    ax.set_xticks(range(len(cats)), cats, rotation=30, ha="right")
    ax.set_ylabel(f"students with score >= {min_score}")
    ax.set_title("Talent list sizes by category")
    fig.tight_layout()
    fig_path = out_dir / "talents.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    return [data_path, fig_path]


def render_report(platform: Platform, out_dir: Path) -> list[Path]:
    """The full report: every payload with a figure alongside it."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    written += render_alert_summary(platform.alert_feed(), out_dir)
    written += render_wordcloud(platform.iep_wordcloud(50), out_dir)
    written += render_heatmap(platform.iep_heatmap(), out_dir)
    written += render_talents(platform, out_dir)
    try:
        platform.popularity()
        written += render_federation(platform.fed_history, out_dir)
    except NotTrained:
        pass
    return written
