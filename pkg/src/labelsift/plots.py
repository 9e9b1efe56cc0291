"""Figure rendering for run outputs.

Each CLI report path saves PNG figures next to the CSV logs: training
curves, the clean-probability histogram, the per-class concentration box
plot, the estimation-error curve, and sweep/benchmark summaries.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _ema(values, weight=0.7):
    out = []
    acc = None
    for v in values:
        if v is None or (isinstance(v, float) and np.isnan(v)):
            out.append(np.nan)
            continue
        acc = v if acc is None else weight * acc + (1.0 - weight) * v
        out.append(acc)
    return out


def training_figures(record, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    config = record.config

    # held-out retrieval curves
    if record.eval_rows:
        iters = [r["iter"] for r in record.eval_rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(iters, [r["p_at_1"] for r in record.eval_rows], marker="o", label="P@1")
        ax.plot(iters, [r["map_at_r"] for r in record.eval_rows], marker="s", label="MAP@R")
        ax.set_xlabel("iteration")
        ax.set_ylabel("held-out score")
        ax.set_ylim(0, 1.05)
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / "metrics.png", dpi=150)
        plt.close(fig)

    # filter accuracy over iterations, smoothed
    acc = _ema(record.filter_accs)
    if any(not np.isnan(v) for v in acc):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(record.iters, acc, lw=1)
        ax.set_xlabel("iteration")
        ax.set_ylabel("filter accuracy (EMA 0.7)")
        ax.set_ylim(0, 1.05)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / "filter_accuracy.png", dpi=150)
        plt.close(fig)

    # clean-probability histogram at the probe window
    half = config.histogram_window / 2.0
    lo, hi = config.histogram_iter - half, config.histogram_iter + half
    probs, clean = record.pooled_probs(lo, hi)
    if probs.size:
        fig, ax = plt.subplots(figsize=(6, 4))
        bins = np.linspace(0, 1, config.histogram_bins + 1)
        ax.hist(probs[clean], bins=bins, alpha=0.6, label="clean")
        ax.hist(probs[~clean], bins=bins, alpha=0.6, label="noisy")
        ax.set_xlabel("clean probability")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / "pclean_histogram.png", dpi=150)
        plt.close(fig)

    # concentration growth across snapshots
    if record.kappa_rows:
        snaps = sorted({t for t, _, _ in record.kappa_rows})
        data = [[k for t, _, k in record.kappa_rows if t == s] for s in snaps]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.boxplot(data, tick_labels=[str(s) for s in snaps])
        ax.set_xlabel("iteration")
        ax.set_ylabel("fitted concentration")
        plt.setp(ax.get_xticklabels(), rotation=45, ha="right")
        fig.tight_layout()
        fig.savefig(out_dir / "kappa_box.png", dpi=150)
        plt.close(fig)


def kappa_mse_figure(rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot([r["n"] for r in rows], [r["mse"] for r in rows], marker="o")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("samples per fit")
    ax.set_ylabel("MSE of fitted concentration")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(parameter, results, path):
    values = [v for v, _ in results]
    finals = [rec.summary.get("final_p_at_1") for _, rec in results]
    bests = [rec.summary.get("best_p_at_1") for _, rec in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(values, finals, marker="o", label="final P@1")
    ax.plot(values, bests, marker="s", label="best P@1")
    ax.set_xlabel(parameter)
    ax.set_ylabel("held-out P@1")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bench_figure(report, path):
    rows = report["rows"]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar([r["variant"] for r in rows], [r["seconds"] for r in rows])
    ax.set_ylabel(f"seconds for {rows[0]['iterations']} filter iterations")
    ax.set_title(f"speedup {report['ratio']:.1f}x")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
