"""Matplotlib figures written next to the CSV/JSON report artifacts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .locator import AttackDistribution, Topology  # noqa: E402

FIG_SIZE = (6.4, 4.0)
DPI = 120
_SAVE_KW = {"dpi": DPI, "bbox_inches": "tight", "metadata": {"Software": None}}


def _bras_order(topology: Topology):
    return sorted(topology.bras_ids, key=lambda b: (topology.bras_to_br[b], len(b), b))


def plot_roc(points, path, baseline=None, title="Hijack detection ROC"):
    """ROC over suspicion deltas; ``baseline`` overlays the hop-only detector."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for pts, label, style in ((points, "hop + duplicate seq", "o-"), (baseline, "hop anomaly only", "s--")):
        if not pts:
            continue
        xy = [(p.false_alarm_rate, p.detection_rate, p.delta) for p in pts
              if p.false_alarm_rate is not None and p.detection_rate is not None]
        if not xy:
            continue
        xs, ys, ds = zip(*xy)
        ax.plot(xs, ys, style, label=label)
        for x, y, d in xy:
            ax.annotate(f"d={d}", (x, y), textcoords="offset points", xytext=(4, -10), fontsize=7)
    ax.plot([0, 1], [0, 1], color="0.8", lw=0.8, zorder=0)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("False alarm rate")
    ax.set_ylabel("Detection rate")
    ax.set_title(title)
    ax.legend(loc="lower right", frameon=False)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_attack_distribution(dist: AttackDistribution, topology: Topology, path, converged=None):
    """Hijack records per BRAS, bars grouped and colored by border router."""
    order = _bras_order(topology)
    brs = topology.border_routers
    cmap = plt.get_cmap("tab10")
    colors = [cmap(brs.index(topology.bras_to_br[b]) % 10) for b in order]
    fig, ax = plt.subplots(figsize=(max(FIG_SIZE[0], 0.35 * len(order)), FIG_SIZE[1]))
    ax.bar(range(len(order)), [dist.counts.get(b, 0) for b in order], color=colors)
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels(order, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("Hijack records")
    title = "Hijack records by BRAS area"
    if converged is not None:
        title += f" (converged: {converged})"
    ax.set_title(title)
    handles = [plt.Rectangle((0, 0), 1, 1, color=cmap(i % 10)) for i in range(len(brs))]
    ax.legend(handles, brs, title="border router", fontsize=7, frameon=False)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_redirect_share(shares: dict, topology: Topology, path, highlight=()):
    """Share of 302 responses per BRAS; ``highlight`` marks the supporting domains."""
    order = [b for b in _bras_order(topology) if b in shares]
    hl = set(highlight)
    fig, ax = plt.subplots(figsize=(max(FIG_SIZE[0], 0.35 * len(order)), FIG_SIZE[1]))
    ax.bar(range(len(order)), [shares[b] for b in order],
           color=["tab:red" if b in hl else "tab:gray" for b in order])
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels(order, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("302 share of responses")
    ax.set_title("HTTP 302 responses by BRAS area")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_hop_trend(observations, path, key=None, title=None):
    """Observed hop counts over time for one (host, server_ip, bras_id) key.

    Duplicate-sequence packets show up as low outliers under attack.
    """
    obs = [o for o in observations if key is None or (o.host, o.server_ip, o.bras_id) == key]
    obs.sort(key=lambda o: o.timestamp)
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.plot([o.timestamp / 1e6 for o in obs], [o.hops for o in obs], ".-", lw=0.6, ms=3)
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Route hops")
    ax.set_title(title or ("Route hops " + (" / ".join(key) if key else "(all keys)")))
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
