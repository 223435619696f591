"""Minimal dense feed-forward networks with hand-rolled reverse-mode gradients.

Everything downstream (decomposition nets, denoisers, quantile learners) is
built from these pieces: ``DenseNet`` for the function approximator,
``AdamState`` for parameter updates, ``RandomSource`` for all randomness.
The arithmetic-heavy inner loops live in :mod:`noisedecomp.backend`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DataError, NumericError, ShapeError, StateError

ACTIVATION_CODES = {
    "identity": backend.ACT_IDENTITY,
    "relu": backend.ACT_RELU,
    "tanh": backend.ACT_TANH,
    "sigmoid": backend.ACT_SIGMOID,
    "softplus": backend.ACT_SOFTPLUS,
}
_CODE_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}

_CHECKPOINT_MAGIC = b"NDNET001"


class RandomSource:
    """Seeded random stream; identical seed and stream give identical draws."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,)))
        )

    def spawn(self, key: int) -> "RandomSource":
        """Derive an independent stream reproducibly from this source's seed."""
        return RandomSource(self.seed, stream=self.stream * 1_000_003 + int(key) + 1)

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, p=None, replace=True):
        return self._gen.choice(a, size=size, p=p, replace=replace)

    def gamma(self, shape, scale=1.0, size=None):
        return self._gen.gamma(shape, scale, size)

    def beta(self, a, b, size=None):
        return self._gen.beta(a, b, size)

    def chisquare(self, df, size=None):
        return self._gen.chisquare(df, size)


@dataclass
class Gradients:
    """Parameter gradients for one net, plus the gradient at its input."""

    d_weights: list
    d_biases: list
    d_input: np.ndarray


def _default_activations(n_layers: int):
    return tuple(["relu"] * (n_layers - 1) + ["identity"])


class DenseNet:
    """Fully connected stack with per-layer activations.

    Weights initialize uniformly in +-sqrt(6 / (fan_in + fan_out)) and biases
    at zero when an rng is given; with ``rng=None`` all parameters start at
    zero (useful for analytic edge cases).
    """

    def __init__(self, layer_sizes, activations=None, rng: RandomSource | None = None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ShapeError(f"layer_sizes must be >= 2 positive entries, got {layer_sizes}")
        if activations is None:
            activations = _default_activations(len(sizes) - 1)
        activations = tuple(activations)
        if len(activations) != len(sizes) - 1:
            raise ShapeError(
                f"need {len(sizes) - 1} activations for {len(sizes)} layer sizes, got {len(activations)}"
            )
        for name in activations:
            if name not in ACTIVATION_CODES:
                raise ValueError(f"unknown activation {name!r}")
        self.layer_sizes = tuple(sizes)
        self.activations = activations
        self._act_codes = tuple(ACTIVATION_CODES[a] for a in activations)
        self.seed = rng.seed if rng is not None else 0
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((n_in, n_out))
            else:
                bound = np.sqrt(6.0 / (n_in + n_out))
                w = rng.uniform(-bound, bound, size=(n_in, n_out))
            self.weights.append(np.ascontiguousarray(w, dtype=np.float64))
            self.biases.append(np.zeros(n_out, dtype=np.float64))
        self._cache = None

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, x) -> np.ndarray:
        """Evaluate the net; records intermediates for a later backward call.

        Accepts a single input vector or a (batch, input_size) matrix and
        returns the matching shape.
        """
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_size:
            raise ShapeError(
                f"expected input with {self.input_size} features, got shape {np.shape(x)}"
            )
        out, inputs, preacts = backend.dense_forward(arr, self.weights, self.biases, self._act_codes)
        self._cache = (inputs, preacts, single)
        return out[0] if single else out

    def backward(self, grad_output) -> Gradients:
        """Backpropagate a loss gradient through the most recent forward pass."""
        if self._cache is None:
            raise StateError("backward called with no recorded forward pass")
        inputs, preacts, single = self._cache
        grad = np.asarray(grad_output, dtype=np.float64)
        if single:
            grad = grad[None, :]
        if grad.shape != (inputs[0].shape[0], self.output_size):
            raise ShapeError(
                f"gradient shape {np.shape(grad_output)} does not match output "
                f"({inputs[0].shape[0]} x {self.output_size})"
            )
        d_ws, d_bs, d_x = backend.dense_backward(grad, self.weights, self._act_codes, inputs, preacts)
        return Gradients(d_ws, d_bs, d_x[0] if single else d_x)

    def copy(self) -> "DenseNet":
        dup = DenseNet(self.layer_sizes, self.activations)
        dup.seed = self.seed
        dup.load_state_from(self)
        return dup

    def load_state_from(self, other: "DenseNet") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ShapeError("cannot copy parameters between differently shaped nets")
        for mine, theirs in zip(self.weights, other.weights):
            mine[...] = theirs
        for mine, theirs in zip(self.biases, other.biases):
            mine[...] = theirs

    def parameter_arrays(self):
        """Weights and biases interleaved per layer: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def save(self, path) -> None:
        """Write a checkpoint: small header, then flat little-endian float64 data."""
        sizes = self.layer_sizes
        with open(path, "wb") as fh:
            fh.write(_CHECKPOINT_MAGIC)
            fh.write(struct.pack("<q", self.seed))
            fh.write(struct.pack("<i", len(sizes)))
            fh.write(struct.pack(f"<{len(sizes)}i", *sizes))
            fh.write(struct.pack(f"<{len(self._act_codes)}i", *self._act_codes))
            for arr in self.parameter_arrays():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "DenseNet":
        with open(path, "rb") as fh:
            magic = fh.read(len(_CHECKPOINT_MAGIC))
            if magic != _CHECKPOINT_MAGIC:
                raise DataError(f"{path} is not a net checkpoint (bad magic)")
            (seed,) = struct.unpack("<q", fh.read(8))
            (n_sizes,) = struct.unpack("<i", fh.read(4))
            sizes = struct.unpack(f"<{n_sizes}i", fh.read(4 * n_sizes))
            codes = struct.unpack(f"<{n_sizes - 1}i", fh.read(4 * (n_sizes - 1)))
            net = cls(sizes, tuple(_CODE_NAMES[c] for c in codes))
            net.seed = seed
            for arr in net.parameter_arrays():
                raw = fh.read(8 * arr.size)
                arr[...] = np.frombuffer(raw, dtype="<f8").reshape(arr.shape)
        return net


class AdamState:
    """Adaptive-moment optimizer state for one net (beta1=0.9, beta2=0.999)."""

    def __init__(self, net: DenseNet, learning_rate: float):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.learning_rate = float(learning_rate)
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.epsilon = 1e-8
        self.step_count = 0
        self.first_moments = [np.zeros_like(p) for p in net.parameter_arrays()]
        self.second_moments = [np.zeros_like(p) for p in net.parameter_arrays()]


def adam_update_array(opt_like, param, grad, m, v, t):
    """One bias-corrected adaptive-moment update, in place on ``param``."""
    m *= opt_like.beta1
    m += (1.0 - opt_like.beta1) * grad
    v *= opt_like.beta2
    v += (1.0 - opt_like.beta2) * grad * grad
    m_hat = m / (1.0 - opt_like.beta1**t)
    v_hat = v / (1.0 - opt_like.beta2**t)
    param -= opt_like.learning_rate * m_hat / (np.sqrt(v_hat) + opt_like.epsilon)


def step(opt: AdamState, net: DenseNet, grads: Gradients) -> DenseNet:
    """Apply one optimizer step to the net's parameters, in place."""
    params = net.parameter_arrays()
    grad_arrays = []
    for layer, (dw, db) in enumerate(zip(grads.d_weights, grads.d_biases)):
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError(f"non-finite gradient in layer {layer}")
        grad_arrays.append(dw)
        grad_arrays.append(db)
    if len(grad_arrays) != len(params):
        raise ShapeError("gradient layer count does not match net")
    opt.step_count += 1
    t = opt.step_count
    for param, grad, m, v in zip(params, grad_arrays, opt.first_moments, opt.second_moments):
        if param.shape != np.shape(grad):
            raise ShapeError("gradient shape does not match parameter shape")
        adam_update_array(opt, param, grad, m, v, t)
    return net


def gradient_check(net: DenseNet, x, loss_grad_fn, h: float = 1e-5) -> float:
    """Max relative error between analytic and central finite-difference gradients.

    ``loss_grad_fn(output) -> (loss, d_loss/d_output)`` defines the scalar loss.
    Relative error uses an absolute floor of 1e-8 in the denominator.
    """
    out = net.forward(x)
    _, d_out = loss_grad_fn(out)
    grads = net.backward(d_out)
    analytic = grads.d_weights + grads.d_biases
    arrays = net.weights + net.biases
    worst = 0.0
    for param, grad in zip(arrays, analytic):
        flat = param.ravel()
        gflat = np.asarray(grad).ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lo_plus, _ = loss_grad_fn(net.forward(x))
            flat[idx] = orig - h
            lo_minus, _ = loss_grad_fn(net.forward(x))
            flat[idx] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * h)
            denom = max(abs(numeric), abs(gflat[idx]), 1e-8)
            worst = max(worst, abs(numeric - gflat[idx]) / denom)
    net.forward(x)
    return worst
