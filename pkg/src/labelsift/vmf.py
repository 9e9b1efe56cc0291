"""von Mises-Fisher distributions on the unit hypersphere.

Density evaluation (log space), maximum-likelihood fitting of (mu, kappa),
Wood-style rejection sampling, and the kappa-estimation error experiment.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .numerics import DegenerateInputError, log_bessel_i, log_unit_sphere_area

# Fitted concentrations are clamped here; the mean-resultant-length inversion
# diverges as the data collapse onto a single direction.
KAPPA_MAX = 1e5

KAPPA_FORMULAS = ("standard", "literal")


class InsufficientDataError(ValueError):
    """Too few samples to fit a distribution."""


@dataclass
class VmfParams:
    """Mean direction, concentration and ambient dimension of one vMF."""

    mu: np.ndarray
    kappa: float
    dim: int

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if self.mu.shape != (self.dim,):
            raise ValueError("mu has wrong dimension")
        if abs(np.linalg.norm(self.mu) - 1.0) > 1e-6:
            raise ValueError("mu must be unit norm")
        if not 0.0 <= self.kappa <= KAPPA_MAX:
            raise ValueError(f"kappa outside [0, {KAPPA_MAX:g}]")


@dataclass
class ResultantStats:
    """Sufficient statistics of a sample of unit vectors."""

    sum_vector: np.ndarray
    count: int

    @property
    def mean_resultant_length(self):
        return float(np.linalg.norm(self.sum_vector)) / self.count

    @classmethod
    def from_samples(cls, samples):
        samples = np.asarray(samples, dtype=float)
        return cls(sum_vector=samples.sum(axis=0), count=samples.shape[0])


def log_vmf_normalizer(dim, kappa):
    """log C_D(kappa); the kappa -> 0 limit is the uniform sphere density."""
    if kappa <= 0.0:
        return -log_unit_sphere_area(dim)
    half = dim / 2.0
    return (half - 1.0) * np.log(kappa) - half * np.log(2.0 * np.pi) - log_bessel_i(
        half - 1.0, kappa
    )


def vmf_log_pdf(params, x):
    """log density of x under params; x must be a unit vector of params.dim."""
    x = np.asarray(x, dtype=float)
    if x.shape != (params.dim,):
        raise ValueError("dimension mismatch between params and x")
    return log_vmf_normalizer(params.dim, params.kappa) + params.kappa * float(params.mu @ x)


def fit_from_stats(stats, dim, formula="standard"):
    """Fit (mu, kappa) from sufficient statistics.

    "standard" uses rbar = ||sum|| / n and kappa = rbar (dim - rbar^2) /
    (1 - rbar^2), clamped to [0, KAPPA_MAX] (rbar -> 1 diverges).
    "literal" is a study variant that skips the 1/n and uses (dim - rbar)
    in the numerator; for concentrated data it produces rbar > 1 and a
    negative ratio, which is clamped into range rather than rejected.
    """
    if formula not in KAPPA_FORMULAS:
        raise ValueError(f"unknown kappa formula: {formula!r}")
    if stats.count < 2:
        raise InsufficientDataError("need at least 2 samples to fit a vMF")
    norm = float(np.linalg.norm(stats.sum_vector))
    if norm <= 1e-12:
        raise DegenerateInputError("resultant vector is zero; no preferred direction")
    mu = stats.sum_vector / norm
    if formula == "standard":
        rbar = norm / stats.count
        if rbar >= 1.0 - 1e-12:
            kappa = KAPPA_MAX
        else:
            kappa = rbar * (dim - rbar**2) / (1.0 - rbar**2)
    else:
        rbar = norm
        denom = 1.0 - rbar**2
        kappa = KAPPA_MAX if denom == 0.0 else rbar * (dim - rbar) / denom
    kappa = float(min(max(kappa, 0.0), KAPPA_MAX))
    return VmfParams(mu=mu, kappa=kappa, dim=dim)


def vmf_fit(samples, formula="standard"):
    """Maximum-likelihood fit of a vMF to unit-vector samples."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be a 2-d array of unit vectors")
    stats = ResultantStats.from_samples(samples)
    return fit_from_stats(stats, samples.shape[1], formula)


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_uniform_sphere(dim, n, rng):
    """n points uniform on S^(dim-1)."""
    rng = _as_rng(rng)
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def vmf_sample(params, n, rng):
    """Draw n unit vectors from the distribution.

    Rejection sampling of the cosine w = mu.x (Wood's envelope) combined
    with a uniform tangent direction; deterministic given a seeded rng.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _as_rng(rng)
    d = params.dim
    kappa = params.kappa
    if kappa == 0.0:
        return sample_uniform_sphere(d, n, rng)

    b = (d - 1) / (np.sqrt(4.0 * kappa**2 + (d - 1) ** 2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + (d - 1) * np.log(1.0 - x0**2)

    ws = np.empty(n)
    filled = 0
    while filled < n:
        m = n - filled
        z = rng.beta((d - 1) / 2.0, (d - 1) / 2.0, size=m)
        u = rng.uniform(size=m)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        ok = kappa * w + (d - 1) * np.log1p(-x0 * w) - c >= np.log(u)
        k = int(ok.sum())
        ws[filled : filled + k] = w[ok]
        filled += k

    # tangent directions orthogonal to mu, uniform on the (d-2)-sphere
    v = rng.standard_normal((n, d))
    v -= np.outer(v @ params.mu, params.mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = ws[:, None] * params.mu + np.sqrt(np.clip(1.0 - ws**2, 0.0, None))[:, None] * v
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def mean_resultant_of_kappa(dim, kappa):
    """Population mean resultant length I_(D/2)(k) / I_(D/2-1)(k)."""
    if kappa == 0.0:
        return 0.0
    return float(np.exp(log_bessel_i(dim / 2.0, kappa) - log_bessel_i(dim / 2.0 - 1.0, kappa)))


def kappa_mse_experiment(dim, true_kappa, sample_counts, trials, seed, formula="standard"):
    """Mean squared error of the concentration estimate vs sample count.

    For each n: draw n samples from a vMF with a fresh uniform-random mean
    direction and kappa = true_kappa, fit, and average the squared kappa
    error over the trials.  Each trial owns an rng derived from
    (seed, n, trial) so results do not depend on execution order.
    Returns a list of row dicts matching the CSV schema.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for n in sample_counts:
        sq = 0.0
        for trial in range(trials):
            rng = np.random.default_rng((seed, n, trial))
            mu = sample_uniform_sphere(dim, 1, rng)[0]
            x = vmf_sample(VmfParams(mu=mu, kappa=true_kappa, dim=dim), n, rng)
            fitted = vmf_fit(x, formula=formula)
            sq += (fitted.kappa - true_kappa) ** 2
        rows.append(
            {
                "n": n,
                "mse": sq / trials,
                "trials": trials,
                "dim": dim,
                "kappa_true": true_kappa,
            }
        )
    return rows


def write_kappa_mse_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["n", "mse", "trials", "dim", "kappa_true"])
        writer.writeheader()
        writer.writerows(rows)
