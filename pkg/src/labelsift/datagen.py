"""Synthetic labeled datasets on the unit sphere, label-noise synthesis,
and the class-balanced batch sampler."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .vmf import VmfParams, _as_rng, sample_uniform_sphere, vmf_sample


@dataclass
class SyntheticSpec:
    num_classes: int = 16
    samples_per_class: int = 100
    input_dim: int = 32
    concentration: float = 64.0
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if min(self.samples_per_class, self.input_dim) < 1 or self.concentration < 0:
            raise ValueError("spec fields must be positive")


@dataclass
class NoisyDataset:
    inputs: np.ndarray  # (N, D) unit rows
    given_labels: np.ndarray
    true_labels: np.ndarray
    num_classes: int
    requested_noise_rate: float = 0.0
    note: str = ""

    @property
    def clean_mask(self):
        return self.given_labels == self.true_labels

    @property
    def achieved_noise_rate(self):
        return float(np.mean(~self.clean_mask))

    def __len__(self):
        return self.inputs.shape[0]


def gen_dataset(spec, sample_stream=0):
    """Noise-free dataset: class mean directions uniform on the sphere,
    samples vMF-concentrated around them.  Deterministic given spec.seed.

    The class means and the samples come from separate seeded streams, so a
    different sample_stream yields fresh draws of the same classes (used
    for noise-free held-out splits).
    """
    means_rng = np.random.default_rng((spec.seed, 17))
    means = sample_uniform_sphere(spec.input_dim, spec.num_classes, means_rng)
    rng = np.random.default_rng((spec.seed, 23, sample_stream))
    blocks = []
    for k in range(spec.num_classes):
        params = VmfParams(mu=means[k], kappa=spec.concentration, dim=spec.input_dim)
        blocks.append(vmf_sample(params, spec.samples_per_class, rng))
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    return NoisyDataset(
        inputs=np.concatenate(blocks),
        given_labels=labels.copy(),
        true_labels=labels.copy(),
        num_classes=spec.num_classes,
    )


def apply_symmetric_noise(ds, rate, rng):
    """Reassign round(rate * n) samples of every class uniformly among the
    other classes.  True labels and inputs are untouched."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("noise rate must be in [0, 1)")
    if ds.num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = _as_rng(rng)
    given = ds.given_labels.copy()
    for k in range(ds.num_classes):
        idx = np.flatnonzero(ds.true_labels == k)
        n_flip = int(np.floor(rate * idx.size + 0.5))  # round half up
        if n_flip == 0:
            continue
        flip = rng.choice(idx, size=n_flip, replace=False)
        offsets = rng.integers(1, ds.num_classes, size=n_flip)
        given[flip] = (k + offsets) % ds.num_classes
    return replace(ds, given_labels=given, requested_noise_rate=rate, note="")


def apply_small_cluster_noise(ds, rate, rng, cluster_size=5):
    """Flip coherent sub-clusters of whole classes until the requested noise
    rate is reached.

    Classes are processed at most once, in random order: each victim class
    is k-means split into ceil(n / cluster_size) clusters and every cluster
    is relabeled to one random other class.  Overshoot is bounded by one
    class's size; if the rate is unreachable the achieved rate is reported
    in the dataset note.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError("noise rate must be in [0, 1)")
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    rng = _as_rng(rng)
    given = ds.given_labels.copy()
    n_total = len(ds)
    noisy = int(np.sum(given != ds.true_labels))
    note = ""
    for k in rng.permutation(ds.num_classes):
        if noisy / n_total >= rate:
            break
        idx = np.flatnonzero(ds.true_labels == k)
        if idx.size == 0:
            continue
        n_clusters = int(np.ceil(idx.size / cluster_size))
        assignments = kmeans(ds.inputs[idx], n_clusters, iters=25, rng=rng)
        for c in range(n_clusters):
            members = idx[assignments == c]
            if members.size == 0:
                continue
            target = (k + rng.integers(1, ds.num_classes)) % ds.num_classes
            given[members] = target
        noisy = int(np.sum(given != ds.true_labels))
    else:
        if noisy / n_total < rate:
            note = (
                f"warning: requested noise rate {rate:.4f} unreachable; "
                f"achieved {noisy / n_total:.4f}"
            )
    return replace(ds, given_labels=given, requested_noise_rate=rate, note=note)


def kmeans(points, k, iters=50, rng=None):
    """Lloyd's algorithm from k random distinct points; empty clusters are
    re-seeded from the point farthest from its center.  Returns assignments."""
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if k > n:
        raise ValueError("more clusters than points")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = _as_rng(rng)
    centers = points[rng.choice(n, size=k, replace=False)].copy()
    assignments = np.zeros(n, dtype=int)
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignments = d2.argmin(axis=1)
        dist_to_own = d2[np.arange(n), new_assignments]
        for c in range(k):
            members = points[new_assignments == c]
            if members.size == 0:
                far = int(np.argmax(dist_to_own))
                centers[c] = points[far]
                new_assignments[far] = c
                dist_to_own[far] = 0.0
            else:
                centers[c] = members.mean(axis=0)
        if np.array_equal(new_assignments, assignments):
            assignments = new_assignments
            break
        assignments = new_assignments
    return assignments


def pk_sample(ds, p, k, rng):
    """Batch of p distinct given-label classes x k samples each.

    Classes are chosen uniformly among classes with at least one sample;
    within a class, sampling is without replacement unless the class has
    fewer than k samples.  Returns sample indices into the dataset.
    """
    rng = _as_rng(rng)
    present = np.unique(ds.given_labels)
    if present.size < p:
        raise ValueError(f"only {present.size} non-empty classes; need {p}")
    chosen = rng.choice(present, size=p, replace=False)
    parts = []
    for c in chosen:
        pool = np.flatnonzero(ds.given_labels == c)
        parts.append(rng.choice(pool, size=k, replace=pool.size < k))
    return np.concatenate(parts)


def write_dataset(ds, out_dir):
    """Dataset manifest (labels/cleanliness), input sidecar, and meta file."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "dataset.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "true_label", "given_label", "is_clean"])
        clean = ds.clean_mask
        for i in range(len(ds)):
            writer.writerow([i, ds.true_labels[i], ds.given_labels[i], int(clean[i])])
    with open(out_dir / "inputs.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in ds.inputs:
            writer.writerow([repr(float(v)) for v in row])
    with open(out_dir / "dataset_meta", "w") as fh:
        fh.write(f"num_samples = {len(ds)}\n")
        fh.write(f"num_classes = {ds.num_classes}\n")
        fh.write(f"input_dim = {ds.inputs.shape[1]}\n")
        fh.write(f"requested_noise_rate = {ds.requested_noise_rate}\n")
        fh.write(f"achieved_noise_rate = {ds.achieved_noise_rate}\n")
        if ds.note:
            fh.write(f"note = {ds.note}\n")
