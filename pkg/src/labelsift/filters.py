"""Clean-probability estimators and the per-batch filtering protocol.

Every estimator turns a feature/label pair into the softmax-posterior
probability that the label is correct, judged against per-class statistics
(memory-bank members, their centers, fitted directional distributions, or
learnable proxies).  filter_batch applies the shared protocol: first-seen
classes are trusted, the estimator scores the rest, and a threshold policy
decides what is kept.
"""

from dataclasses import dataclass, field

import numpy as np

from .membank import AbsentClassError
from .numerics import DegenerateInputError, l2_normalize, l2_normalize_rows, softmax
from .vmf import ResultantStats, fit_from_stats, log_vmf_normalizer, vmf_log_pdf

CORE_ESTIMATORS = ("avgsim_naive", "avgsim_centers", "proxysim", "vmfsim")
ABLATION_ESTIMATORS = ("batch_positive", "memory_positive")
ESTIMATORS = CORE_ESTIMATORS + ABLATION_ESTIMATORS


@dataclass
class FilterState:
    """Mutable state of the filtering protocol for one training run."""

    estimator: str
    warmup_iters: int = 0
    iteration: int = 0
    vmf_params: dict = field(default_factory=dict)  # class -> VmfParams
    seen_classes: set = field(default_factory=set)
    kappa_formula: str = "standard"

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator: {self.estimator!r}")

    def active_estimator(self):
        """The estimator actually used this iteration; the directional-
        distribution estimator delegates to centers during its warm-up."""
        if self.estimator == "vmfsim" and self.iteration <= self.warmup_iters:
            return "avgsim_centers"
        return self.estimator


@dataclass
class FilterResult:
    kept: np.ndarray  # indices into the batch
    probs: np.ndarray
    threshold: float
    estimator_used: str
    first_seen: np.ndarray  # bool mask


def refresh_vmf_params(state, bank, dim):
    """Refit per-class (mu, kappa) from the bank's running sums.

    Classes with fewer than 2 stored members (or a zero resultant) get no
    parameters and fall back to probability 1 at query time.
    """
    params = {}
    for label in bank.classes():
        count = bank.count_of(label)
        if count < 2:
            continue
        stats = ResultantStats(sum_vector=bank.sum_of(label), count=count)
        try:
            params[label] = fit_from_stats(stats, dim, state.kappa_formula)
        except DegenerateInputError:
            continue
    state.vmf_params = params


def avg_sim_naive(bank, feature, label):
    """Posterior from per-class mean similarity to every stored member."""
    if bank.count_of(label) == 0:
        raise AbsentClassError(label)
    u = l2_normalize(feature)
    classes = bank.classes()
    sims = [float(np.mean([m @ u for m in bank.members_of(c)])) for c in classes]
    return float(softmax(sims)[classes.index(label)])


def avg_sim_centers(bank, feature, label):
    """Same posterior computed from class centers; algebraically identical
    to avg_sim_naive because stored features are unit norm."""
    if bank.count_of(label) == 0:
        raise AbsentClassError(label)
    u = l2_normalize(feature)
    centers, classes = bank.center_matrix()
    return float(softmax(centers @ u)[classes.index(label)])


def proxy_sim(proxies, feature, label):
    """Posterior over each class's best-matching proxy."""
    if label not in proxies.index:
        raise AbsentClassError(label)
    u = l2_normalize(feature)
    best = np.max(proxies.proxies @ u, axis=1)
    return float(softmax(best)[proxies.index[label]])


def vmf_sim(state, feature, label):
    """Posterior under the fitted per-class directional distributions.

    Works in log space; per-class concentrations mean the normalizers do
    not cancel and must be included.
    """
    if label not in state.vmf_params:
        raise AbsentClassError(label)
    u = l2_normalize(feature)
    classes = sorted(state.vmf_params)
    logp = [vmf_log_pdf(state.vmf_params[c], u) for c in classes]
    return float(softmax(logp)[classes.index(label)])


def _probs_avgsim_batch(bank, feats, labels, naive):
    """Vectorized per-class-mean-similarity posteriors for a whole batch.

    naive=True recomputes the mean over every stored member (O(B M D));
    otherwise the maintained class centers are used (O(B C D)).
    Returns (probs, scored) where scored is False for labels absent from
    the bank.
    """
    if naive:
        members, starts, counts, classes = bank.grouped_members()
        if not classes:
            return np.ones(len(labels)), np.zeros(len(labels), dtype=bool)
        sims = feats @ members.T
        table = np.add.reduceat(sims, starts, axis=1) / counts
    else:
        centers, classes = bank.center_matrix()
        if not classes:
            return np.ones(len(labels)), np.zeros(len(labels), dtype=bool)
        table = feats @ centers.T
    table -= table.max(axis=1, keepdims=True)
    np.exp(table, out=table)
    table /= table.sum(axis=1, keepdims=True)
    col = {c: i for i, c in enumerate(classes)}
    probs = np.ones(len(labels))
    scored = np.zeros(len(labels), dtype=bool)
    for i, label in enumerate(labels):
        j = col.get(int(label))
        if j is not None:
            probs[i] = table[i, j]
            scored[i] = True
    return probs, scored


def _probs_vmf_batch(state, feats, labels):
    classes = sorted(state.vmf_params)
    if not classes:
        return np.ones(len(labels)), np.zeros(len(labels), dtype=bool)
    mus = np.stack([state.vmf_params[c].mu for c in classes])
    kappas = np.array([state.vmf_params[c].kappa for c in classes])
    norm = np.array(
        [log_vmf_normalizer(state.vmf_params[c].dim, state.vmf_params[c].kappa) for c in classes]
    )
    table = feats @ (mus * kappas[:, None]).T + norm[None, :]
    table -= table.max(axis=1, keepdims=True)
    np.exp(table, out=table)
    table /= table.sum(axis=1, keepdims=True)
    col = {c: i for i, c in enumerate(classes)}
    probs = np.ones(len(labels))
    scored = np.zeros(len(labels), dtype=bool)
    for i, label in enumerate(labels):
        j = col.get(int(label))
        if j is not None:
            probs[i] = table[i, j]
            scored[i] = True
    return probs, scored


def _probs_proxy_batch(proxies, feats, labels):
    best = np.einsum("nd,chd->nch", feats, proxies.proxies).max(axis=2)
    best -= best.max(axis=1, keepdims=True)
    np.exp(best, out=best)
    best /= best.sum(axis=1, keepdims=True)
    rows = proxies.rows_for(labels)
    return best[np.arange(len(labels)), rows], np.ones(len(labels), dtype=bool)


def _scores_batch_positive(feats, labels):
    """Mean similarity to same-given-label batch members, affinely mapped
    from [-1, 1] to [0, 1].  No cross-class normalization."""
    labels = np.asarray(labels)
    sims = feats @ feats.T
    same = (labels[:, None] == labels[None, :]) & ~np.eye(len(labels), dtype=bool)
    n_pos = same.sum(axis=1)
    scored = n_pos > 0
    mean_sim = (sims * same).sum(axis=1) / np.maximum(n_pos, 1)
    scores = np.where(scored, (mean_sim + 1.0) / 2.0, 1.0)
    return scores, scored


def _scores_memory_positive(bank, feats, labels):
    """Mean similarity to same-class bank members (their center), affinely
    mapped to [0, 1]."""
    probs = np.ones(len(labels))
    scored = np.zeros(len(labels), dtype=bool)
    for i, label in enumerate(labels):
        if bank.count_of(int(label)) > 0:
            probs[i] = (float(bank.class_center(int(label)) @ feats[i]) + 1.0) / 2.0
            scored[i] = True
    return probs, scored


def batch_probs(feats, labels, state, bank=None, proxies=None, estimator=None):
    """Clean probabilities for a batch under the given estimator, with
    unscored samples (no statistics for their class) resolved to 1."""
    estimator = estimator or state.active_estimator()
    feats = l2_normalize_rows(np.asarray(feats, dtype=float))
    if estimator == "avgsim_naive":
        probs, scored = _probs_avgsim_batch(bank, feats, labels, naive=True)
    elif estimator == "avgsim_centers":
        probs, scored = _probs_avgsim_batch(bank, feats, labels, naive=False)
    elif estimator == "vmfsim":
        probs, scored = _probs_vmf_batch(state, feats, labels)
    elif estimator == "proxysim":
        probs, scored = _probs_proxy_batch(proxies, feats, labels)
    elif estimator == "batch_positive":
        probs, scored = _scores_batch_positive(feats, labels)
    elif estimator == "memory_positive":
        probs, scored = _scores_memory_positive(bank, feats, labels)
    else:
        raise ValueError(f"unknown estimator: {estimator!r}")
    probs = np.where(scored, probs, 1.0)
    return probs, scored


def filter_batch(feats, labels, state, bank=None, proxies=None, policy=None):
    """Apply the filtering protocol to one batch.

    Samples of classes never seen before this batch get probability 1 and
    are always kept; the rest are scored by the active estimator and kept
    iff probability > threshold.  All probabilities (first-seen included)
    enter the threshold computation.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ValueError("empty batch")
    first_seen = np.array([int(y) not in state.seen_classes for y in labels])
    state.seen_classes.update(int(y) for y in labels)

    estimator = state.active_estimator()
    probs, _ = batch_probs(feats, labels, state, bank, proxies, estimator)
    probs = np.where(first_seen, 1.0, probs)

    threshold = policy.compute_threshold(probs.tolist())
    kept = np.flatnonzero((probs > threshold) | first_seen)
    return FilterResult(
        kept=kept,
        probs=probs,
        threshold=float(threshold),
        estimator_used=estimator,
        first_seen=first_seen,
    )
