"""Decomposition of a noisy shared reward into per-agent Gaussian credit.

One small dense net per agent maps that agent's encoded observation/action to
a Gaussian mean and scale; a shared logit vector carries the mixture weights.
Training matches the implied mixture density to a kernel density estimate of
the observed global rewards, with penalties that spread the means evenly and
keep the weights near uniform so the decomposition stays identifiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np
from scipy.special import expit

from . import backend
from .dists import GMM, EmpiricalDistribution, Gaussian, fit_empirical
from .errors import DataError, DomainError, NumericError, ShapeError
from .nets import AdamState, DenseNet, RandomSource, adam_update_array
from .nets import step as adam_step

PDF_GRID_POINTS = 256
_SIGMA_FLOOR = 1e-3
_PDF_CLIP = 1e-12


class DecompositionModel:
    """Per-agent Gaussian predictors plus shared mixture-weight logits."""

    def __init__(self, agent_nets, weight_logits=None):
        nets = tuple(agent_nets)
        if not nets:
            raise DataError("need at least one agent net")
        for net in nets:
            if net.output_size != 2:
                raise ShapeError("agent nets must emit (mean, raw scale) pairs")
        self.agent_nets = nets
        if weight_logits is None:
            weight_logits = np.zeros(len(nets))
        self.weight_logits = np.asarray(weight_logits, dtype=np.float64).copy()
        if self.weight_logits.shape != (len(nets),):
            raise ShapeError("one weight logit per agent required")
        self.fitted = False

    @property
    def n_agents(self) -> int:
        return len(self.agent_nets)

    def weights(self) -> np.ndarray:
        shifted = self.weight_logits - self.weight_logits.max()
        e = np.exp(shifted)
        return e / e.sum()

    def component_params(self, encodings):
        """Forward every agent net; returns (means, scales, raw_scales), each (B, N)."""
        encodings = _as_batch_encodings(self, encodings)
        batch = encodings[0].shape[0]
        means = np.empty((batch, self.n_agents))
        raws = np.empty((batch, self.n_agents))
        for i, (net, enc) in enumerate(zip(self.agent_nets, encodings)):
            out = net.forward(enc)
            means[:, i] = out[:, 0]
            raws[:, i] = out[:, 1]
        scales = np.logaddexp(0.0, raws) + _SIGMA_FLOOR
        return means, scales, raws

    def agent_params(self, agent: int, encoding):
        """Gaussian (means, scales) one agent assigns to a batch of encodings."""
        net = self.agent_nets[agent]
        arr = np.asarray(encoding, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        out = net.forward(arr)
        return out[:, 0].copy(), np.logaddexp(0.0, out[:, 1]) + _SIGMA_FLOOR


def make_decomposition_model(
    encoding_dims, rng: RandomSource, hidden=(64, 64)
) -> DecompositionModel:
    nets = [
        DenseNet([int(dim), *hidden, 2], rng=rng.spawn(i))
        for i, dim in enumerate(encoding_dims)
    ]
    return DecompositionModel(nets)


def _as_batch_encodings(model: DecompositionModel, encodings):
    if len(encodings) != model.n_agents:
        raise ShapeError(
            f"model has {model.n_agents} agents but got {len(encodings)} encodings"
        )
    out = []
    batch = None
    for net, enc in zip(model.agent_nets, encodings):
        arr = np.asarray(enc, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != net.input_size:
            raise ShapeError(
                f"encoding shape {arr.shape} does not match net input {net.input_size}"
            )
        if batch is None:
            batch = arr.shape[0]
        elif arr.shape[0] != batch:
            raise ShapeError("agents disagree on batch size")
        out.append(arr)
    return out


@dataclass(frozen=True)
class DecompositionBatch:
    """Reward samples with per-agent encodings and the KDE target to match."""

    encodings: tuple
    rewards: np.ndarray
    target: EmpiricalDistribution
    grid: np.ndarray
    cell: float
    target_pdf: np.ndarray

    @property
    def size(self) -> int:
        return len(self.rewards)

    @property
    def transitions(self) -> int:
        return int(self.encodings[0].shape[0])


def _target_grid(target: EmpiricalDistribution):
    lo, hi = target.r_min, target.r_max
    if not hi > lo:
        raise DataError("target support is degenerate")
    edges = np.linspace(lo, hi, PDF_GRID_POINTS + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    cell = (hi - lo) / PDF_GRID_POINTS
    density = np.clip(target.pdf(mids), _PDF_CLIP, None)
    return mids, cell, density


def make_batch(rewards, encodings, bandwidth=None) -> DecompositionBatch:
    """Pair reward samples with per-agent transition encodings.

    The reward set feeds only the KDE target, so it may be larger than the
    encoded transition count (augmented rewards have no transitions).
    """
    r = np.asarray(rewards, dtype=np.float64).ravel()
    if not np.all(np.isfinite(r)):
        raise DataError("reward samples must be finite")
    encs = []
    n_transitions = None
    for enc in encodings:
        arr = np.asarray(enc, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"encodings must be 2-d per agent, got shape {arr.shape}")
        if n_transitions is None:
            n_transitions = arr.shape[0]
        elif arr.shape[0] != n_transitions:
            raise ShapeError("agents disagree on transition count")
        encs.append(arr)
    if not encs:
        raise DataError("need encodings for at least one agent")
    if bandwidth is None:
        target = fit_empirical(r)
    else:
        if not bandwidth > 0:
            raise DomainError(f"bandwidth must be positive, got {bandwidth}")
        target = EmpiricalDistribution(r, float(bandwidth))
    grid, cell, density = _target_grid(target)
    return DecompositionBatch(
        encodings=tuple(encs),
        rewards=r,
        target=target,
        grid=grid,
        cell=cell,
        target_pdf=density,
    )


def decompose(model: DecompositionModel, encodings) -> GMM:
    """Evaluate the model on one transition's encodings; returns the global mixture."""
    means, scales, _ = model.component_params(encodings)
    if means.shape[0] != 1:
        raise ShapeError("decompose expects encodings for a single transition")
    components = tuple(
        Gaussian(float(mu), float(sd) ** 2) for mu, sd in zip(means[0], scales[0])
    )
    return GMM(components, model.weights())


def loss_pdf(model_output: GMM, target: EmpiricalDistribution) -> float:
    """Integrated squared density mismatch over the target's support."""
    grid, cell, density = _target_grid(target)
    resid = model_output.pdf(grid) - density
    return float(cell * (resid @ resid))


def loss_mean(means) -> float:
    mu = np.asarray(means, dtype=np.float64).ravel()
    if mu.size == 0:
        raise DataError("need at least one mean")
    centered = mu - mu.mean()
    return float(centered @ centered)


def loss_weight(weights) -> float:
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise DataError("need at least one weight")
    return float(np.linalg.norm(w - 1.0 / w.size))


@dataclass
class TotalLoss:
    value: float
    pdf_term: float
    mean_term: float
    weight_term: float
    net_gradients: tuple
    logit_gradient: np.ndarray


def total_loss(
    model: DecompositionModel,
    batch: DecompositionBatch,
    lam: float = 1.0,
    alpha: float = 1.0,
    indices=None,
) -> TotalLoss:
    """Three-term training loss with gradients for every net and the logits.

    The density term averages the predicted mixture over the (sub)batch of
    transitions before comparing against the target KDE.
    """
    if lam < 0 or alpha < 0:
        raise DomainError("penalty multipliers must be nonnegative")
    if indices is None:
        encodings = batch.encodings
    else:
        idx = np.asarray(indices)
        encodings = tuple(enc[idx] for enc in batch.encodings)
    means, scales, raws = model.component_params(encodings)
    n_batch = means.shape[0]
    weights = model.weights()

    _, pdf_term, d_mu, d_sigma, d_w = backend.mixture_fit_terms(
        batch.grid, batch.cell, means, scales, weights, batch.target_pdf
    )

    centered = means - means.mean(axis=1, keepdims=True)
    mean_term = float((centered * centered).sum() / n_batch)
    d_mu_mean = (2.0 / n_batch) * centered

    uniform_gap = weights - 1.0 / model.n_agents
    weight_term = float(np.linalg.norm(uniform_gap))
    d_w_weight = uniform_gap / weight_term if weight_term > 0 else np.zeros_like(weights)

    d_mu_total = d_mu + lam * d_mu_mean
    d_raw = d_sigma * expit(raws)
    d_w_total = d_w + alpha * d_w_weight
    # Softmax backward: logits see the weight-space gradient re-centered.
    logit_grad = weights * (d_w_total - float(d_w_total @ weights))

    net_grads = []
    for i, net in enumerate(model.agent_nets):
        net.forward(encodings[i])
        d_out = np.column_stack([d_mu_total[:, i], d_raw[:, i]])
        net_grads.append(net.backward(d_out))

    value = pdf_term + lam * mean_term + alpha * weight_term
    if not np.isfinite(value):
        raise NumericError("non-finite decomposition loss")
    return TotalLoss(
        value=float(value),
        pdf_term=float(pdf_term),
        mean_term=mean_term,
        weight_term=weight_term,
        net_gradients=tuple(net_grads),
        logit_gradient=logit_grad,
    )


@dataclass
class FitResult:
    model: DecompositionModel
    error: float
    rounds: int
    converged: bool
    loss_history: np.ndarray


def fit(
    model: DecompositionModel,
    batch: DecompositionBatch,
    e_min: float = 1e-3,
    max_rounds: int = 2000,
    learning_rate: float = 3e-3,
    lam: float = 1.0,
    alpha: float = 1.0,
    subsample: int | None = None,
    rng: RandomSource | None = None,
) -> FitResult:
    """Adam-train the model until the density mismatch drops below e_min.

    Non-convergence within max_rounds is reported through the flag, not an
    error. The model is updated in place and also returned.
    """
    if subsample is not None and rng is None:
        raise DomainError("subsampling requires an rng")
    optimizers = [AdamState(net, learning_rate) for net in model.agent_nets]
    logit_m = np.zeros_like(model.weight_logits)
    logit_v = np.zeros_like(model.weight_logits)
    logit_config = SimpleNamespace(
        learning_rate=learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8
    )
    logit_steps = 0
    history = np.empty(max_rounds)
    error = np.inf
    rounds = 0
    converged = False
    for round_idx in range(max_rounds):
        if subsample is not None and subsample < batch.transitions:
            indices = rng.integers(0, batch.transitions, size=subsample)
        else:
            indices = None
        result = total_loss(model, batch, lam=lam, alpha=alpha, indices=indices)
        history[round_idx] = result.pdf_term
        error = result.pdf_term
        rounds = round_idx + 1
        if error <= e_min:
            converged = True
            break
        for net, opt, grads in zip(model.agent_nets, optimizers, result.net_gradients):
            adam_step(opt, net, grads)
        logit_steps += 1
        adam_update_array(
            logit_config,
            model.weight_logits,
            result.logit_gradient,
            logit_m,
            logit_v,
            logit_steps,
        )
    model.fitted = True
    return FitResult(
        model=model,
        error=float(error),
        rounds=rounds,
        converged=converged,
        loss_history=history[:rounds].copy(),
    )
