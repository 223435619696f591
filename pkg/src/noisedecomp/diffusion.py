"""Scalar denoising-diffusion model for reward augmentation.

The forward process corrupts a reward sample toward a standard normal over a
fixed number of steps; a small dense net per step learns to predict the
injected noise, and the reverse process runs the learned chain backwards to
generate new reward samples. Used to stretch scarce reward data before
distribution fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DomainError, ShapeError
from .nets import AdamState, DenseNet, RandomSource
from .nets import step as adam_step

DEFAULT_STEPS = 25
_MIN_TRAIN_SAMPLES = 32


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step noise rates and their running products."""

    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def n_steps(self) -> int:
        return len(self.betas)


def build_schedule(n_steps: int = DEFAULT_STEPS) -> DiffusionSchedule:
    """Sigmoid ramp of noise rates from 1e-5 up to roughly 5e-3."""
    if n_steps < 1:
        raise DomainError("schedule needs at least one step")
    ramp = np.linspace(-6.0, 6.0, n_steps)
    betas = 0.499e-2 / (1.0 + np.exp(-ramp)) + 1e-5
    alphas = 1.0 - betas
    return DiffusionSchedule(
        betas=betas, alphas=alphas, alpha_bars=np.cumprod(alphas)
    )


def forward_diffuse(schedule: DiffusionSchedule, x0, step: int, rng=None, eps=None):
    """Jump straight to the given step of the forward process (step 0 is a no-op).

    Returns (noised, eps). Exactly one of rng/eps must be supplied.
    """
    if not 0 <= step <= schedule.n_steps:
        raise DomainError(f"step must lie in [0, {schedule.n_steps}], got {step}")
    x = np.asarray(x0, dtype=np.float64)
    if step == 0:
        return x.copy(), np.zeros_like(x)
    if eps is None:
        if rng is None:
            raise DomainError("forward_diffuse needs either rng or eps")
        eps = rng.standard_normal(x.shape)
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != x.shape:
            raise ShapeError(f"eps shape {eps.shape} != data shape {x.shape}")
    abar = schedule.alpha_bars[step - 1]
    return np.sqrt(abar) * x + np.sqrt(1.0 - abar) * eps, eps


@dataclass
class DenoiserStack:
    """One noise-prediction net per diffusion step.

    Each net maps (value, step / n_steps) to a predicted standard-normal draw.
    """

    nets: tuple
    n_steps: int
    _optimizers: list = field(default_factory=list, repr=False)

    def predict(self, step: int, values) -> np.ndarray:
        vals = np.atleast_1d(np.asarray(values, dtype=np.float64))
        features = np.column_stack([vals, np.full(vals.shape, step / self.n_steps)])
        return self.nets[step - 1].forward(features)[:, 0]


def make_denoiser_stack(
    schedule: DiffusionSchedule, rng: RandomSource | None = None, hidden=(64, 64)
) -> DenoiserStack:
    """Build the per-step nets; without an rng they start at zero (predict nothing)."""
    sizes = [2, *hidden, 1]
    nets = tuple(
        DenseNet(sizes, rng=None if rng is None else rng.spawn(k))
        for k in range(schedule.n_steps)
    )
    return DenoiserStack(nets=nets, n_steps=schedule.n_steps)


def _ensure_optimizers(stack: DenoiserStack, learning_rate: float):
    if stack._optimizers and abs(stack._optimizers[0].learning_rate - learning_rate) < 1e-15:
        return
    stack._optimizers = [AdamState(net, learning_rate) for net in stack.nets]


def train(
    stack: DenoiserStack,
    schedule: DiffusionSchedule,
    samples,
    rng: RandomSource,
    n_iterations: int = 5000,
    batch_size: int = 64,
    learning_rate: float = 3e-3,
):
    """Fit the noise predictors by regression on forward-diffused samples.

    Each iteration picks one step uniformly, corrupts a fresh batch to that
    step, and takes one Adam move on the squared prediction error. Optimizer
    state lives on the stack, so repeated calls continue training.
    Returns the per-iteration loss history.
    """
    data = np.asarray(samples, dtype=np.float64).ravel()
    if data.size < _MIN_TRAIN_SAMPLES:
        raise DataError(
            f"diffusion training needs at least {_MIN_TRAIN_SAMPLES} samples, got {data.size}"
        )
    _ensure_optimizers(stack, learning_rate)
    losses = np.empty(n_iterations)
    for it in range(n_iterations):
        step = int(rng.integers(1, schedule.n_steps + 1))
        idx = rng.integers(0, data.size, size=batch_size)
        batch = data[idx]
        noised, eps = forward_diffuse(schedule, batch, step, rng=rng)
        net = stack.nets[step - 1]
        features = np.column_stack(
            [noised, np.full(batch_size, step / schedule.n_steps)]
        )
        pred = net.forward(features)[:, 0]
        resid = pred - eps
        losses[it] = float(resid @ resid) / batch_size
        grads = net.backward((2.0 / batch_size) * resid[:, None])
        adam_step(stack._optimizers[step - 1], net, grads)
    return losses


def validation_loss(
    stack: DenoiserStack, schedule: DiffusionSchedule, samples, rng: RandomSource
) -> float:
    """Average squared noise-prediction error over every step."""
    data = np.asarray(samples, dtype=np.float64).ravel()
    if data.size == 0:
        raise DataError("validation needs samples")
    total = 0.0
    for step in range(1, schedule.n_steps + 1):
        noised, eps = forward_diffuse(schedule, data, step, rng=rng)
        pred = stack.predict(step, noised)
        total += float(np.mean((pred - eps) ** 2))
    return total / schedule.n_steps


def generate(
    stack: DenoiserStack, schedule: DiffusionSchedule, n: int, rng: RandomSource
) -> np.ndarray:
    """Run the reverse chain from standard-normal starts; returns n samples."""
    if n < 0:
        raise DomainError("sample count must be nonnegative")
    if n == 0:
        return np.empty(0)
    values = rng.standard_normal(n)
    for step in range(schedule.n_steps, 0, -1):
        beta = schedule.betas[step - 1]
        alpha = schedule.alphas[step - 1]
        abar = schedule.alpha_bars[step - 1]
        predicted = stack.predict(step, values)
        values = (values - beta / np.sqrt(1.0 - abar) * predicted) / np.sqrt(alpha)
        if step > 1:
            prev_abar = schedule.alpha_bars[step - 2]
            sigma = np.sqrt((1.0 - prev_abar) / (1.0 - abar) * beta)
            values = values + sigma * rng.standard_normal(n)
    return values


@dataclass(frozen=True)
class GenerationErrorConstants:
    """Scalars bounding how reverse-process error accumulates.

    noise_gain_sum scales the per-step noise contribution, total_gain is the
    end-to-end product of per-step gains, and data_mean_coeff multiplies the
    mean of the predicted noise in the generated-sample mean.
    """

    noise_gain_sum: float
    total_gain: float
    data_mean_coeff: float


def _step_gains(schedule: DiffusionSchedule) -> np.ndarray:
    alphas = schedule.alphas
    abars = schedule.alpha_bars
    gains = np.empty(schedule.n_steps)
    gains[0] = 1.0 / np.sqrt(alphas[0])
    gains[1:] = (alphas[1:] - abars[1:]) / ((1.0 - abars[1:]) * np.sqrt(alphas[1:]))
    return gains


def generation_error_constants(schedule: DiffusionSchedule) -> GenerationErrorConstants:
    gains = _step_gains(schedule)
    running = np.cumprod(gains)
    # Strict-prefix products of the per-step gains: empty prefix for the first
    # step, then running[:-1]; the noise-gain sum drops the empty prefix.
    prefixes = np.concatenate(([1.0], running[:-1]))
    coeffs = (
        np.sqrt(schedule.alpha_bars)
        * (1.0 - schedule.alphas)
        / ((1.0 - schedule.alpha_bars) * np.sqrt(schedule.alphas))
    )
    coeffs[0] = 0.0
    return GenerationErrorConstants(
        noise_gain_sum=float(running[:-1].sum()),
        total_gain=float(running[-1]),
        data_mean_coeff=float(coeffs @ prefixes),
    )


def augment(real_samples, generated_samples, data_fraction: float) -> np.ndarray:
    """Top up real rewards with already-generated ones.

    data_fraction is the share of the full dataset the real samples are meant
    to represent; enough generated samples are appended to fill in the rest,
    so a fraction of 0.5 doubles the data and a fraction of 1 returns the
    real samples unchanged.
    """
    if not 0.0 < data_fraction <= 1.0:
        raise DomainError("data fraction must lie in (0, 1]")
    real = np.asarray(real_samples, dtype=np.float64).ravel()
    count = int(round(real.size * (1.0 - data_fraction) / data_fraction))
    if count == 0:
        return real.copy()
    generated = np.asarray(generated_samples, dtype=np.float64).ravel()
    if generated.size < count:
        raise DataError(
            f"need {count} generated samples to reach the target size, got {generated.size}"
        )
    return np.concatenate([real, generated[:count]])
