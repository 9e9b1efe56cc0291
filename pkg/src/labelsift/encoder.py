"""Small dense embedding network with exact backpropagation.

Rectifier between layers, l2-normalized output, plain SGD (optional
momentum) with cosine learning-rate decay.  No autodiff: the backward pass
is hand-written, including the normalization-layer Jacobian.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import ZERO_NORM_EPS, DegenerateInputError


@dataclass
class OptimizerState:
    base_lr: float
    total_iters: int
    iteration: int = 0


def lr_at(state):
    """Cosine decay: base_lr/2 * (1 + cos(pi * iteration / total_iters))."""
    if state.total_iters < 1:
        raise ValueError("total_iters must be >= 1")
    if state.iteration > state.total_iters:
        raise ValueError("iteration past the end of the schedule")
    return state.base_lr * 0.5 * (1.0 + np.cos(np.pi * state.iteration / state.total_iters))


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list
    activations: list
    raw_output: np.ndarray
    norms: np.ndarray
    embeddings: np.ndarray
    dims: tuple


class Encoder:
    """Dense layers with relu between them and a unit-norm output."""

    FORMAT_VERSION = 1

    def __init__(self, layers):
        self.layers = [(np.asarray(w, dtype=float), np.asarray(b, dtype=float)) for w, b in layers]
        dims = [self.layers[0][0].shape[1]]
        for w, b in self.layers:
            if w.shape[1] != dims[-1]:
                raise ValueError("layer dimensions do not chain")
            if b.shape != (w.shape[0],):
                raise ValueError("bias shape mismatch")
            dims.append(w.shape[0])
        self.dims = tuple(dims)
        self._velocity = None

    @classmethod
    def init_random(cls, dims, rng):
        """Uniform fan-in-scaled initialization for the given layer sizes.

        Weight bound sqrt(3/fan_in) keeps unit activation variance through
        the stack (deep rectifier nets with smaller scales collapse the
        embedding directions at init, which distorts early concentration
        statistics)."""
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        layers = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w_bound = np.sqrt(3.0 / fan_in)
            b_bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-w_bound, w_bound, size=(fan_out, fan_in))
            b = rng.uniform(-b_bound, b_bound, size=fan_out)
            layers.append((w, b))
        return cls(layers)

    @property
    def output_dim(self):
        return self.dims[-1]

    def forward(self, x):
        """Embed a batch (n, input_dim) -> unit rows (n, output_dim) + cache."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dims[0]:
            raise ValueError("input dimension mismatch")
        activations = [x]
        pre_activations = []
        a = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            z = a @ w.T + b
            pre_activations.append(z)
            a = z if i == last else np.maximum(z, 0.0)
            activations.append(a)
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        if np.any(norms <= ZERO_NORM_EPS):
            raise DegenerateInputError("encoder output collapsed to zero norm")
        emb = a / norms
        cache = ForwardCache(
            inputs=x,
            pre_activations=pre_activations,
            activations=activations,
            raw_output=a,
            norms=norms,
            embeddings=emb,
            dims=self.dims,
        )
        return emb, cache

    def backward(self, cache, grad_embeddings):
        """Parameter gradients for a scalar loss given d(loss)/d(embedding).

        Applies the sphere-projection Jacobian (I - e e^T)/||y|| of the
        output normalization, then standard dense backprop.
        """
        if cache.dims != self.dims:
            raise ValueError("cache does not match this encoder")
        g = np.asarray(grad_embeddings, dtype=float)
        if g.shape != cache.embeddings.shape:
            raise ValueError("gradient shape mismatch")
        e = cache.embeddings
        da = (g - np.sum(g * e, axis=1, keepdims=True) * e) / cache.norms
        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[i]
            if i != len(self.layers) - 1:
                da = da * (cache.pre_activations[i] > 0.0)
            grads[i] = (da.T @ cache.activations[i], da.sum(axis=0))
            if i > 0:
                da = da @ w
        return grads

    def sgd_step(self, grads, lr, momentum=0.0):
        """In-place p <- p - lr * g (with optional heavy-ball momentum)."""
        if len(grads) != len(self.layers):
            raise ValueError("gradient list length mismatch")
        if momentum:
            if self._velocity is None:
                self._velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in self.layers]
            for (w, b), (gw, gb), (vw, vb) in zip(self.layers, grads, self._velocity):
                if gw.shape != w.shape or gb.shape != b.shape:
                    raise ValueError("gradient shape mismatch")
                vw *= momentum
                vw += gw
                vb *= momentum
                vb += gb
                w -= lr * vw
                b -= lr * vb
        else:
            for (w, b), (gw, gb) in zip(self.layers, grads):
                if gw.shape != w.shape or gb.shape != b.shape:
                    raise ValueError("gradient shape mismatch")
                w -= lr * gw
                b -= lr * gb

    def save(self, path):
        """Versioned text checkpoint: dims line, then row-major W rows and a
        bias line per layer, full-precision floats."""
        with open(path, "w") as fh:
            fh.write(f"labelsift-encoder {self.FORMAT_VERSION}\n")
            fh.write(" ".join(str(d) for d in self.dims) + "\n")
            for w, b in self.layers:
                for row in w:
                    fh.write(" ".join(repr(float(v)) for v in row) + "\n")
                fh.write(" ".join(repr(float(v)) for v in b) + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            if header[:1] != ["labelsift-encoder"] or int(header[1]) != cls.FORMAT_VERSION:
                raise ValueError("unrecognized checkpoint format")
            dims = [int(v) for v in fh.readline().split()]
            layers = []
            for fan_in, fan_out in zip(dims[:-1], dims[1:]):
                rows = [
                    np.array([float(v) for v in fh.readline().split()]) for _ in range(fan_out)
                ]
                w = np.stack(rows)
                if w.shape != (fan_out, fan_in):
                    raise ValueError("checkpoint layer shape mismatch")
                b = np.array([float(v) for v in fh.readline().split()])
                layers.append((w, b))
        return cls(layers)
