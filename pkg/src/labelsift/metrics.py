"""Retrieval metrics and noise-filter diagnostics."""

import numpy as np


def _neighbor_ranks(embeddings):
    """Per-query gallery indices sorted by descending cosine similarity,
    self excluded; similarity ties break by ascending gallery index."""
    emb = np.asarray(embeddings, dtype=float)
    n = emb.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, : n - 1]


def retrieval_report(embeddings, labels):
    """Precision@1 and MAP@R in one ranking pass.

    Queries whose class has fewer than 2 members have an undefined
    retrieval window; they are skipped and tallied.
    """
    labels = np.asarray(labels)
    ranks = _neighbor_ranks(embeddings)
    counts = {c: int(v) for c, v in zip(*np.unique(labels, return_counts=True))}
    hits = 0
    ap_sum = 0.0
    valid = 0
    skipped = 0
    for q in range(labels.size):
        size = counts[int(labels[q])]
        if size < 2:
            skipped += 1
            continue
        valid += 1
        rel = labels[ranks[q]] == labels[q]
        hits += int(rel[0])
        r = size - 1
        window = rel[:r]
        precision = np.cumsum(window) / np.arange(1, r + 1)
        ap_sum += float(np.sum(precision * window)) / r
    if valid == 0:
        raise ValueError("no query has a class with >= 2 members")
    return {
        "p_at_1": hits / valid,
        "map_at_r": ap_sum / valid,
        "skipped": skipped,
    }


def precision_at_1(embeddings, labels):
    """Fraction of queries whose nearest non-self neighbor shares the class."""
    return retrieval_report(embeddings, labels)["p_at_1"]


def map_at_r(embeddings, labels):
    """Mean average precision with per-query window R = class size - 1."""
    return retrieval_report(embeddings, labels)["map_at_r"]


def filter_accuracy(kept_indices, clean_mask):
    """Among kept samples, the fraction that are truly clean.

    Returns None for an empty kept set (undefined; callers log a null
    record).
    """
    kept_indices = np.asarray(kept_indices, dtype=int)
    if kept_indices.size == 0:
        return None
    clean_mask = np.asarray(clean_mask, dtype=bool)
    return float(np.mean(clean_mask[kept_indices]))


def pclean_auc(probs, clean_mask):
    """ROC AUC of the clean probabilities as a clean-vs-noisy classifier,
    computed by rank sums; ties contribute 1/2."""
    probs = np.asarray(probs, dtype=float)
    clean_mask = np.asarray(clean_mask, dtype=bool)
    n_pos = int(clean_mask.sum())
    n_neg = clean_mask.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both clean and noisy samples for an AUC")
    order = np.argsort(probs, kind="stable")
    ranks = np.empty(probs.size)
    ranks[order] = np.arange(1, probs.size + 1)
    # midranks for ties
    sorted_probs = probs[order]
    i = 0
    while i < probs.size:
        j = i
        while j + 1 < probs.size and sorted_probs[j + 1] == sorted_probs[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + 1 + j + 1)
        i = j + 1
    rank_sum = float(ranks[clean_mask].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pclean_histogram(probs, bins):
    """Counts over equal-width bins of [0, 1]; the last bin includes 1."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    counts, _ = np.histogram(probs, bins=bins, range=(0.0, 1.0))
    return counts


def kappa_snapshot(filter_state):
    """Current fitted concentration per class, sorted by class id."""
    return sorted((int(c), float(p.kappa)) for c, p in filter_state.vmf_params.items())
