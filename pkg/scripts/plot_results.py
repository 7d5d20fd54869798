#!/usr/bin/env python3
"""Render PNG plots from ddlink sweep CSVs.

Standalone on purpose: the simulator only emits data, and this script only
consumes the CSV, so plotting needs (matplotlib) never leak into the package
dependencies.

Usage:
    python scripts/plot_results.py out/fig3a/results.csv --out plots/
"""

from __future__ import annotations

import argparse
import csv
import os
from collections import defaultdict


def load_rows(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = dict(raw)
            for key in ("nu_max_hz", "snr_db", "ber", "ber_ci95", "nmse_db",
                        "se_bits_per_s_per_hz"):
                row[key] = float(row[key]) if row[key] else None
            row["trials"] = int(row["trials"])
            row["data_frames"] = int(row["data_frames"]) if row["data_frames"] else None
            rows.append(row)
        return rows


def series_label(scheme: str, mode: str, F) -> str:
    if mode == "data":
        return f"{scheme} data F={F}"
    return f"{scheme} {mode}"


def plot_metric(rows, x_key, y_key, out_path, log_y, title, x_label, y_label):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = defaultdict(list)
    for row in rows:
        if row["frame"] != "all" or row[y_key] is None:
            continue
        key = (row["scheme"], row["mode"], row["data_frames"])
        groups[key].append((row[x_key], row[y_key]))
    if not groups:
        return False
    fig, ax = plt.subplots(figsize=(7, 5))
    for key in sorted(groups, key=str):
        points = sorted(groups[key])
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", label=series_label(*key))
    if log_y:
        ax.set_yscale("log")
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return True


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_path")
    parser.add_argument("--out", default=".", help="directory for PNGs")
    args = parser.parse_args()

    rows = load_rows(args.csv_path)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.csv_path))[0]

    snrs = {row["snr_db"] for row in rows}
    nus = {row["nu_max_hz"] for row in rows}
    sweep_x, x_label = (("snr_db", "SNR (dB)") if len(snrs) >= len(nus)
                        else ("nu_max_hz", "max Doppler (Hz)"))

    made = []
    targets = [
        ("ber", True, "bit error rate", f"{stem}_ber.png"),
        ("nmse_db", False, "tap NMSE (dB)", f"{stem}_nmse.png"),
        ("se_bits_per_s_per_hz", False, "spectral efficiency (bits/s/Hz)",
         f"{stem}_se.png"),
    ]
    for y_key, log_y, y_label, fname in targets:
        out_path = os.path.join(args.out, fname)
        if plot_metric(rows, sweep_x, y_key, out_path, log_y,
                       stem, x_label, y_label):
            made.append(out_path)
    print("wrote: " + ", ".join(made) if made else "nothing to plot")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
