"""Bounded FIFO memory of accepted features with per-class running statistics.

The bank stores l2-normalized features with their (possibly noisy) labels.
Per-class vector sums are maintained incrementally with compensated
accumulation so that thousands of add/evict cycles stay within 1e-9 of a
from-scratch recomputation.
"""

from collections import deque

import numpy as np

from .numerics import is_unit


class AbsentClassError(KeyError):
    """Requested statistics for a class with no stored members."""


class _CompensatedSum:
    """Kahan-style accumulating vector; supports subtraction for evictions."""

    def __init__(self, dim):
        self.total = np.zeros(dim)
        self._comp = np.zeros(dim)

    def add(self, v):
        y = v - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t

    def subtract(self, v):
        self.add(-np.asarray(v, dtype=float))


class MemoryBank:
    """First-in-first-out feature queue with per-class sums and counts."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.entries = deque()  # (feature, label)
        self.class_sum = {}  # label -> _CompensatedSum
        self.class_count = {}  # label -> int
        self.seen_classes = set()

    def __len__(self):
        return len(self.entries)

    def _add_entry(self, feature, label):
        self.entries.append((feature, label))
        if label not in self.class_count:
            self.class_count[label] = 0
            self.class_sum[label] = _CompensatedSum(feature.shape[0])
        self.class_count[label] += 1
        self.class_sum[label].add(feature)
        self.seen_classes.add(label)

    def _evict_oldest(self):
        feature, label = self.entries.popleft()
        self.class_count[label] -= 1
        self.class_sum[label].subtract(feature)
        if self.class_count[label] == 0:
            del self.class_count[label]
            del self.class_sum[label]

    def enqueue_batch(self, features, labels):
        """Append (feature, label) pairs in order, evicting the oldest
        entries while over capacity.  Features must be unit norm."""
        features = np.asarray(features, dtype=float)
        for feature, label in zip(features, labels):
            if not is_unit(feature):
                raise ValueError("memory bank features must be unit norm")
            self._add_entry(feature.copy(), int(label))
            while len(self.entries) > self.capacity:
                self._evict_oldest()

    def classes(self):
        """Labels with at least one stored member, sorted."""
        return sorted(self.class_count)

    def count_of(self, label):
        return self.class_count.get(label, 0)

    def sum_of(self, label):
        if label not in self.class_count:
            raise AbsentClassError(label)
        return self.class_sum[label].total.copy()

    def class_center(self, label):
        """Mean of the stored unit features of a class (not re-normalized,
        so its norm is <= 1)."""
        if label not in self.class_count:
            raise AbsentClassError(label)
        return self.class_sum[label].total / self.class_count[label]

    def members_of(self, label):
        """Stored features with the given label, oldest first."""
        return [f for f, lab in self.entries if lab == label]

    def feature_matrix(self):
        """All stored features as an (n, D) array, FIFO order, with labels."""
        if not self.entries:
            return np.zeros((0, 0)), np.zeros(0, dtype=int)
        feats = np.stack([f for f, _ in self.entries])
        labels = np.array([lab for _, lab in self.entries], dtype=int)
        return feats, labels

    def grouped_members(self):
        """Features regrouped by class for batched similarity work.

        Returns (features, group_offsets, group_counts, class_labels) where
        features[group_offsets[i] : group_offsets[i] + group_counts[i]] are
        the members of class_labels[i].
        """
        feats, labels = self.feature_matrix()
        if feats.size == 0:
            return feats, np.zeros(0, dtype=int), np.zeros(0, dtype=int), []
        order = np.argsort(labels, kind="stable")
        feats = feats[order]
        labels = labels[order]
        classes, starts, counts = np.unique(labels, return_index=True, return_counts=True)
        return feats, starts, counts, [int(c) for c in classes]

    def center_matrix(self):
        """(centers, class_labels) for every class with stored members."""
        classes = self.classes()
        if not classes:
            return np.zeros((0, 0)), []
        centers = np.stack([self.class_center(c) for c in classes])
        return centers, classes

    def dump(self, fh):
        """Debug snapshot: one `label,feature_csv` line per entry."""
        for feature, label in self.entries:
            fh.write(f"{label}," + ",".join(repr(float(v)) for v in feature) + "\n")
