"""Figure rendering for run and feature reports.

Three PNGs summarize a capture next to its delimited output: traffic volume
over time split by label, per-flow feature distributions, and per-source
activity. All rendering is headless.
"""

from __future__ import annotations

import ipaddress
import logging
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  backend must be fixed first

from .capture import Flow, PacketRecord, extract_features, label_flow

log = logging.getLogger(__name__)

_NORMAL_COLOR = "#2a7fba"
_ATTACK_COLOR = "#c23b22"


def _is_attack_ip(ip: str, attack_cidr: ipaddress.IPv4Network) -> bool:
    return ipaddress.IPv4Address(ip) in attack_cidr


def render_figures(records: list[PacketRecord], flows: list[Flow],
                   attack_cidr: ipaddress.IPv4Network, out_dir) -> list[Path]:
    """Write timeline.png, flow_features.png, device_activity.png; returns
    the paths actually written (empty inputs produce no figures)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if records:
        written.append(_timeline(records, attack_cidr, out / "timeline.png"))
        written.append(_device_activity(records, attack_cidr, out / "device_activity.png"))
    if flows:
        written.append(_flow_features(flows, attack_cidr, out / "flow_features.png"))
    for path in written:
        log.info("wrote %s", path)
    return written


def _timeline(records, attack_cidr, path: Path) -> Path:
    normal = Counter()
    attack = Counter()
    for rec in records:
        bucket = rec.ts_us // 1_000_000
        if _is_attack_ip(rec.src_ip, attack_cidr) or _is_attack_ip(rec.dst_ip, attack_cidr):
            attack[bucket] += 1
        else:
            normal[bucket] += 1
    last = max(max(normal, default=0), max(attack, default=0))
    xs = range(last + 1)
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.plot(xs, [normal.get(x, 0) for x in xs], label="normal",
            color=_NORMAL_COLOR, linewidth=0.9)
    ax.plot(xs, [attack.get(x, 0) for x in xs], label="attack",
            color=_ATTACK_COLOR, linewidth=0.9)
    ax.set_xlabel("virtual time (s)")
    ax.set_ylabel("packets / s")
    ax.set_title("Traffic volume")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _flow_features(flows, attack_cidr, path: Path) -> Path:
    picks = ("pkt_len_mean", "total_packets", "iat_mean", "bytes_per_s")
    by_label = {"normal": [], "attack": []}
    for flow in flows:
        by_label[label_flow(flow, attack_cidr)].append(extract_features(flow))
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    for ax, name in zip(axes.flat, picks):
        for label, color in (("normal", _NORMAL_COLOR), ("attack", _ATTACK_COLOR)):
            values = [f[name] for f in by_label[label]]
            if values:
                ax.hist(values, bins=30, alpha=0.6, label=label, color=color)
        ax.set_title(name)
        ax.set_yscale("log")
        ax.legend()
    fig.suptitle("Per-flow feature distributions")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def _device_activity(records, attack_cidr, path: Path) -> Path:
    per_src = Counter(rec.src_ip for rec in records)
    items = sorted(per_src.items(), key=lambda kv: ipaddress.IPv4Address(kv[0]))
    colors = [_ATTACK_COLOR if _is_attack_ip(ip, attack_cidr) else _NORMAL_COLOR
              for ip, _ in items]
    fig, ax = plt.subplots(figsize=(max(6, len(items) * 0.25), 4.5))
    ax.bar(range(len(items)), [n for _, n in items], color=colors)
    ax.set_xticks(range(len(items)))
    ax.set_xticklabels([ip for ip, _ in items], rotation=90, fontsize=6)
    ax.set_ylabel("packets sent")
    ax.set_yscale("log")
    ax.set_title("Per-source activity")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
