"""Experiment harness: the filtered training loop, the similarity-path
timing benchmark, the concentration-estimation experiment, and parameter
sweeps.  Every run is deterministic given its config and emits CSV logs
(plus rendered figures) into an output directory."""

import csv
import time
from dataclasses import dataclass, field, fields as dc_fields, replace

import numpy as np

from .config import ConfigError, ExperimentConfig, write_effective_config
from .datagen import (
    SyntheticSpec,
    apply_small_cluster_noise,
    apply_symmetric_noise,
    gen_dataset,
    pk_sample,
)
from .encoder import Encoder, OptimizerState, lr_at
from .filters import FilterState, batch_probs, filter_batch, refresh_vmf_params
from .losses import ProxySet, contrastive_batch_loss, memory_contrastive_loss, soft_triple_loss
from .membank import MemoryBank
from .metrics import filter_accuracy, kappa_snapshot, pclean_auc, pclean_histogram, retrieval_report
from .thresholds import ThresholdPolicy
from .vmf import kappa_mse_experiment, write_kappa_mse_csv

# The held-out split redraws the same classes from a disjoint sample
# stream, kept noise-free.
EVAL_SAMPLE_STREAM = 1

_BANK_ESTIMATORS = {"avgsim_naive", "avgsim_centers", "vmfsim", "memory_positive"}


@dataclass
class RunRecord:
    """Everything a finished training run produced, in memory.

    CSV files are views of this record; tests and figures read it directly.
    """

    config: ExperimentConfig
    iters: list = field(default_factory=list)
    loss_values: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    kept_counts: list = field(default_factory=list)
    kept_idx_per_iter: list = field(default_factory=list)
    estimator_used: list = field(default_factory=list)
    probs_per_iter: list = field(default_factory=list)
    clean_per_iter: list = field(default_factory=list)
    shadow_probs_per_iter: list = field(default_factory=list)
    filter_accs: list = field(default_factory=list)
    true_pos_pair_frac: list = field(default_factory=list)
    skipped_iters: list = field(default_factory=list)
    eval_rows: list = field(default_factory=list)
    kappa_rows: list = field(default_factory=list)
    seconds: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def window(self, lo, hi):
        """Indices of recorded iterations t with lo <= t < hi."""
        return [i for i, t in enumerate(self.iters) if lo <= t < hi]

    def mean_filter_acc(self, lo, hi):
        vals = [self.filter_accs[i] for i in self.window(lo, hi) if self.filter_accs[i] is not None]
        return float(np.mean(vals)) if vals else None

    def pooled_probs(self, lo, hi, shadow=False):
        source = self.shadow_probs_per_iter if shadow else self.probs_per_iter
        probs, clean = [], []
        for i in self.window(lo, hi):
            if source[i] is None:
                continue
            probs.append(source[i])
            clean.append(self.clean_per_iter[i])
        if not probs:
            return np.zeros(0), np.zeros(0, dtype=bool)
        return np.concatenate(probs), np.concatenate(clean)

    def pooled_auc(self, lo, hi, shadow=False):
        probs, clean = self.pooled_probs(lo, hi, shadow)
        if probs.size == 0 or clean.all() or not clean.any():
            return None
        return pclean_auc(probs, clean)

    def median_kappa(self, iteration):
        vals = [k for t, _, k in self.kappa_rows if t == iteration]
        return float(np.median(vals)) if vals else None


def _make_policy(config):
    return ThresholdPolicy(
        kind=config.threshold,
        fixed_m=config.fixed_m,
        rate=config.filter_rate_R,
        tau=config.window_tau,
    )


def _build_dataset(config):
    spec = SyntheticSpec(
        num_classes=config.num_classes,
        samples_per_class=config.samples_per_class,
        input_dim=config.input_dim,
        concentration=config.concentration,
        seed=config.seed,
    )
    ds = gen_dataset(spec)
    if config.noise_model == "symmetric" and config.noise_rate > 0:
        ds = apply_symmetric_noise(ds, config.noise_rate, np.random.default_rng((config.seed, 1)))
    elif config.noise_model == "small_cluster" and config.noise_rate > 0:
        ds = apply_small_cluster_noise(
            ds,
            config.noise_rate,
            np.random.default_rng((config.seed, 1)),
            cluster_size=config.cluster_size,
        )
    eval_ds = gen_dataset(spec, sample_stream=EVAL_SAMPLE_STREAM)
    return ds, eval_ds


def _true_positive_pair_fraction(given, true):
    same_given = given[:, None] == given[None, :]
    np.fill_diagonal(same_given, False)
    n_given = int(same_given.sum())
    if n_given == 0:
        return None
    same_true = true[:, None] == true[None, :]
    return float((same_given & same_true).sum() / n_given)


def run_training(config, out_dir=None):
    """Run the full filtered training loop; see the module docstring.

    Per iteration: sample a class-balanced batch, embed it, score clean
    probabilities (first-seen classes trusted; the directional estimator
    warms up on centers), threshold, enqueue the kept features, compute the
    loss on the kept subset only, and take an SGD step with cosine decay.
    Held-out retrieval metrics are logged every eval_cadence iterations.
    """
    config.validate()
    t0 = time.perf_counter()
    train_ds, eval_ds = _build_dataset(config)

    model_rng = np.random.default_rng((config.seed, 2))
    dims = (config.input_dim, *config.hidden_dims, config.embed_dim)
    enc = Encoder.init_random(dims, model_rng)
    proxies = None
    if config.loss == "softtriple":
        proxies = ProxySet.init_random(
            range(config.num_classes),
            config.st_proxies,
            config.embed_dim,
            model_rng,
            scale_gamma=config.st_gamma,
            scale_lambda=config.st_lambda,
            margin_delta=config.st_delta,
        )

    batch_rng = np.random.default_rng((config.seed, 3))
    needs_bank = config.estimator in _BANK_ESTIMATORS or config.loss == "mcl"
    bank = MemoryBank(config.memory_capacity) if needs_bank else None
    state = None
    if config.estimator != "none":
        state = FilterState(
            estimator=config.estimator,
            warmup_iters=config.warmup_iters,
            kappa_formula=config.kappa_formula,
        )
    policy = _make_policy(config)
    opt = OptimizerState(base_lr=config.base_lr, total_iters=config.total_iters)

    record = RunRecord(config=config)
    setup_seconds = time.perf_counter() - t0
    t_loop = time.perf_counter()
    last_eval = 1
    batch_size = config.batch_size

    for t in range(1, config.total_iters + 1):
        idx = pk_sample(train_ds, config.batch_p, config.batch_k, batch_rng)
        x = train_ds.inputs[idx]
        y = train_ds.given_labels[idx]
        clean = train_ds.clean_mask[idx]
        emb, cache = enc.forward(x)

        if state is None:
            kept = np.arange(batch_size)
            probs = np.ones(batch_size)
            threshold = None
            est_used = "none"
        else:
            state.iteration = t
            result = filter_batch(emb, y, state, bank, proxies, policy)
            kept, probs, threshold = result.kept, result.probs, result.threshold
            est_used = result.estimator_used

        shadow = None
        if (
            state is not None
            and state.estimator == "vmfsim"
            and t > config.warmup_iters
            and bank is not None
        ):
            shadow, _ = batch_probs(emb, y, state, bank, proxies, estimator="avgsim_centers")

        if bank is not None and kept.size:
            bank.enqueue_batch(emb[kept], y[kept])
        if state is not None and state.estimator == "vmfsim" and bank is not None:
            refresh_vmf_params(state, bank, config.embed_dim)

        min_kept = 1 if config.loss == "softtriple" else 2
        if kept.size < min_kept:
            record.skipped_iters.append(t)
            loss_value = float("nan")
        else:
            f_kept, y_kept = emb[kept], y[kept]
            if config.loss == "contrastive":
                out = contrastive_batch_loss(f_kept, y_kept, config.margin_lambda, config.pair_mean)
            elif config.loss == "mcl":
                out = memory_contrastive_loss(
                    f_kept, y_kept, bank, config.margin_lambda, config.pair_mean
                )
            else:
                out = soft_triple_loss(f_kept, y_kept, proxies)
            grad_emb = np.zeros_like(emb)
            grad_emb[kept] = out.grad_features
            grads = enc.backward(cache, grad_emb)
            opt.iteration = t - 1
            lr = lr_at(opt)
            enc.sgd_step(grads, lr, config.momentum)
            if proxies is not None and out.grad_proxies is not None:
                proxies.proxies -= lr * out.grad_proxies
                proxies.renormalize()
            loss_value = out.value

        record.iters.append(t)
        record.loss_values.append(loss_value)
        record.thresholds.append(threshold)
        record.kept_counts.append(int(kept.size))
        record.kept_idx_per_iter.append(kept)
        record.estimator_used.append(est_used)
        record.probs_per_iter.append(probs)
        record.clean_per_iter.append(clean)
        record.shadow_probs_per_iter.append(shadow)
        record.filter_accs.append(filter_accuracy(kept, clean))
        record.true_pos_pair_frac.append(_true_positive_pair_fraction(y, train_ds.true_labels[idx]))

        if t % config.eval_cadence == 0:
            eval_emb, _ = enc.forward(eval_ds.inputs)
            report = retrieval_report(eval_emb, eval_ds.true_labels)
            row = {
                "iter": t,
                "p_at_1": report["p_at_1"],
                "map_at_r": report["map_at_r"],
                "filter_acc": record.mean_filter_acc(last_eval, t + 1),
                "pclean_auc": record.pooled_auc(last_eval, t + 1),
                "kept_frac": float(
                    np.mean([k / batch_size for k in record.kept_counts[last_eval - 1 : t]])
                ),
            }
            record.eval_rows.append(row)
            if state is not None and state.estimator == "vmfsim":
                for cls, kap in kappa_snapshot(state):
                    record.kappa_rows.append((t, cls, kap))
            last_eval = t + 1

    record.seconds["setup"] = setup_seconds
    record.seconds["loop"] = time.perf_counter() - t_loop
    record.seconds["total"] = time.perf_counter() - t0

    if record.eval_rows:
        best = max(record.eval_rows, key=lambda r: r["p_at_1"])
        final = record.eval_rows[-1]
        record.summary = {
            "final_iter": final["iter"],
            "final_p_at_1": final["p_at_1"],
            "final_map_at_r": final["map_at_r"],
            "best_iter": best["iter"],
            "best_p_at_1": best["p_at_1"],
        }

    if out_dir is not None:
        write_run_outputs(record, out_dir, encoder=enc)
    return record


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_run_outputs(record, out_dir, encoder=None):
    """Write the CSV views, the effective config, the checkpoint, and (if
    configured) the figures for a finished run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    config = record.config
    write_effective_config(config, out_dir)

    with open(out_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "p_at_1", "map_at_r", "filter_acc", "pclean_auc", "kept_frac"])
        for row in record.eval_rows:
            writer.writerow(
                [
                    row["iter"],
                    _fmt(row["p_at_1"]),
                    _fmt(row["map_at_r"]),
                    _fmt(row["filter_acc"]),
                    _fmt(row["pclean_auc"]),
                    _fmt(row["kept_frac"]),
                ]
            )

    with open(out_dir / "filter_diag.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "iter",
                "estimator",
                "threshold",
                "kept",
                "discarded",
                "mean_prob_kept",
                "mean_prob_discarded",
            ]
        )
        batch_size = config.batch_size
        for i, t in enumerate(record.iters):
            probs = record.probs_per_iter[i]
            kept_n = record.kept_counts[i]
            thr = record.thresholds[i]
            kept_mask = np.zeros(batch_size, dtype=bool)
            kept_mask[record.kept_idx_per_iter[i]] = True
            mean_kept = float(probs[kept_mask].mean()) if kept_mask.any() else None
            mean_disc = float(probs[~kept_mask].mean()) if (~kept_mask).any() else None
            writer.writerow(
                [
                    t,
                    record.estimator_used[i],
                    _fmt(thr),
                    kept_n,
                    batch_size - kept_n,
                    _fmt(mean_kept),
                    _fmt(mean_disc),
                ]
            )

    with open(out_dir / "kappa.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "class", "kappa"])
        for t, cls, kap in record.kappa_rows:
            writer.writerow([t, cls, _fmt(kap)])

    half = config.histogram_window / 2.0
    lo, hi = config.histogram_iter - half, config.histogram_iter + half
    probs, clean = record.pooled_probs(lo, hi)
    _write_histogram_csv(out_dir / "histogram.csv", probs, clean, config.histogram_bins)
    shadow_probs, shadow_clean = record.pooled_probs(lo, hi, shadow=True)
    if shadow_probs.size:
        _write_histogram_csv(
            out_dir / "histogram_avgsim.csv", shadow_probs, shadow_clean, config.histogram_bins
        )

    with open(out_dir / "timing.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "seconds"])
        for phase, seconds in record.seconds.items():
            writer.writerow([phase, _fmt(float(seconds))])

    if encoder is not None:
        encoder.save(out_dir / "checkpoint.txt")

    if config.figures:
        from . import plots

        plots.training_figures(record, out_dir)


def _write_histogram_csv(path, probs, clean, bins):
    edges = np.linspace(0.0, 1.0, bins + 1)
    clean_counts = pclean_histogram(probs[clean], bins) if probs.size else np.zeros(bins, int)
    noisy_counts = pclean_histogram(probs[~clean], bins) if probs.size else np.zeros(bins, int)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count_clean", "count_noisy"])
        for b in range(bins):
            writer.writerow([_fmt(edges[b]), _fmt(edges[b + 1]), clean_counts[b], noisy_counts[b]])


def bench_avgsim(config, out_dir=None):
    """Time the filter-only inner loop of the two mean-similarity paths.

    Fills a bank of memory_capacity random unit features over num_classes
    labels, pre-generates bench_iters identical query batches, then times
    the full-member path against the centers path.  Reports seconds and the
    deterministic similarity-evaluation counts per iteration.
    """
    config.validate()
    rng = np.random.default_rng((config.seed, 4))
    d = config.embed_dim
    m, c, b = config.memory_capacity, config.num_classes, config.batch_size
    bank = MemoryBank(m)
    feats = rng.standard_normal((m, d))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    labels = np.arange(m) % c
    for start in range(0, m, 512):
        bank.enqueue_batch(feats[start : start + 512], labels[start : start + 512])

    queries = []
    for _ in range(config.bench_iters):
        q = rng.standard_normal((b, d))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        queries.append((q, rng.integers(0, c, size=b)))

    timings = {}
    for name in ("avgsim_naive", "avgsim_centers"):
        # one untimed pass warms allocator caches
        batch_probs(queries[0][0], queries[0][1], None, bank, estimator=name)
        start = time.perf_counter()
        for q, ql in queries:
            batch_probs(q, ql, None, bank, estimator=name)
        timings[name] = time.perf_counter() - start

    rows = [
        {
            "variant": name,
            "seconds": timings[name],
            "iterations": config.bench_iters,
            "batch": b,
            "bank_size": m,
            "num_classes": c,
            "sims_per_iter": b * (m if name == "avgsim_naive" else c),
        }
        for name in ("avgsim_naive", "avgsim_centers")
    ]
    report = {
        "rows": rows,
        "ratio": timings["avgsim_naive"] / timings["avgsim_centers"],
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_effective_config(config, out_dir)
        with open(out_dir / "timing.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        if config.figures:
            from . import plots

            plots.bench_figure(report, out_dir / "timing.png")
    return report


def run_kappa_experiment(config, out_dir=None):
    """Concentration-estimation error vs sample count (CSV + figure)."""
    config.validate()
    rows = kappa_mse_experiment(
        dim=config.kmse_dim,
        true_kappa=config.kmse_kappa,
        sample_counts=config.kmse_counts,
        trials=config.kmse_trials,
        seed=config.seed,
        formula=config.kappa_formula,
    )
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        write_effective_config(config, out_dir)
        write_kappa_mse_csv(rows, out_dir / "kappa_mse.csv")
        if config.figures:
            from . import plots

            plots.kappa_mse_figure(rows, out_dir / "kappa_mse.png")
    return rows


def sweep(config, parameter, values, out_dir=None):
    """Independent training runs across values of one config key.

    Seeds are offset deterministically per sweep point (base seed + index).
    Returns the list of (value, RunRecord) pairs and writes a summary CSV.
    """
    names = {f.name for f in dc_fields(ExperimentConfig)}
    if parameter not in names:
        raise ConfigError(f"unknown config key for sweep: {parameter!r}")
    results = []
    for i, value in enumerate(values):
        cfg = replace(config, **{parameter: value, "seed": config.seed + i})
        cfg.validate()
        run_dir = None
        if out_dir is not None:
            run_dir = out_dir / f"{parameter}_{value}"
        results.append((value, run_training(cfg, run_dir)))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["parameter", "value", "seed", "final_p_at_1", "best_p_at_1", "final_map_at_r"]
            )
            for value, record in results:
                writer.writerow(
                    [
                        parameter,
                        value,
                        record.config.seed,
                        _fmt(record.summary.get("final_p_at_1")),
                        _fmt(record.summary.get("best_p_at_1")),
                        _fmt(record.summary.get("final_map_at_r")),
                    ]
                )
        if config.figures:
            from . import plots

            plots.sweep_figure(parameter, results, out_dir / "sweep.png")
    return results
