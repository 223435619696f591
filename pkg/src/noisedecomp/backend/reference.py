"""Pure-numpy implementations of the hot numeric kernels.

This module is the reference semantics for the compiled extension in
``_speedups``: both expose the same functions over float64 arrays, and the
parity tests in the suite hold them to each other.  Everything here is
deterministic for fixed inputs; across backends results may differ by normal
float reassociation (BLAS vs simple loops), never by more.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

BACKEND_NAME = "python"

# activation codes shared with the compiled kernels
ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2
ACT_SIGMOID = 3
ACT_SOFTPLUS = 4

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softplus(z):
    # log(1 + e^z), saturating to z for large z without overflow
    return np.where(z > 30.0, z, np.log1p(np.exp(np.minimum(z, 30.0))))


def activate(z: np.ndarray, code: int) -> np.ndarray:
    if code == ACT_IDENTITY:
        return z.copy()
    if code == ACT_RELU:
        return np.maximum(z, 0.0)
    if code == ACT_TANH:
        return np.tanh(z)
    if code == ACT_SIGMOID:
        return _sigmoid(z)
    if code == ACT_SOFTPLUS:
        return _softplus(z)
    raise ValueError(f"unknown activation code {code}")


def activation_gradient(preact: np.ndarray, activated: np.ndarray, code: int) -> np.ndarray:
    if code == ACT_IDENTITY:
        return np.ones_like(preact)
    if code == ACT_RELU:
        return (preact > 0.0).astype(np.float64)
    if code == ACT_TANH:
        return 1.0 - activated * activated
    if code == ACT_SIGMOID:
        return activated * (1.0 - activated)
    if code == ACT_SOFTPLUS:
        return _sigmoid(preact)
    raise ValueError(f"unknown activation code {code}")


def dense_forward(x, weights, biases, acts):
    """Batched forward pass through an affine+activation stack.

    x: (B, n_in) float64.  Returns (out, inputs, preacts) where inputs[l] is
    the input to layer l and preacts[l] its pre-activation, both kept for the
    backward pass.
    """
    current = np.ascontiguousarray(x, dtype=np.float64)
    inputs = []
    preacts = []
    for w, b, code in zip(weights, biases, acts):
        inputs.append(current)
        z = current @ w + b
        preacts.append(z)
        current = activate(z, code)
    return current, inputs, preacts


def dense_backward(d_out, weights, acts, inputs, preacts):
    """Backpropagate d_out through the stack recorded by dense_forward.

    Returns (d_weights, d_biases, d_x).
    """
    n_layers = len(weights)
    d_ws = [None] * n_layers
    d_bs = [None] * n_layers
    grad = np.ascontiguousarray(d_out, dtype=np.float64)
    for l in range(n_layers - 1, -1, -1):
        act_out = activate(preacts[l], acts[l]) if l == n_layers - 1 else inputs[l + 1]
        d_pre = grad * activation_gradient(preacts[l], act_out, acts[l])
        d_ws[l] = inputs[l].T @ d_pre
        d_bs[l] = d_pre.sum(axis=0)
        grad = d_pre @ weights[l].T
    return d_ws, d_bs, grad


def gaussian_mixture_pdf(x, means, variances, weights):
    """Mixture density sum_i w_i N(x; mean_i, variance_i) evaluated pointwise."""
    x = np.asarray(x, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    diff = x[..., None] - means
    expo = np.exp(-0.5 * diff * diff / variances)
    comp = expo / (_SQRT_2PI * np.sqrt(variances))
    return comp @ weights


def mixture_fit_terms(grid, cell, mus, sigmas, weights, target_pdf):
    """Fused loss and gradients for fitting a conditional Gaussian mixture.

    grid: (G,) quadrature midpoints; cell: quadrature cell width.
    mus, sigmas: (B, N) per-transition component means and stds.
    weights: (N,) mixture weights.  target_pdf: (G,) target density values.

    The predictive density is averaged over the batch:
        pdf_hat(g) = (1/B) sum_b sum_i w_i N(grid_g; mu_bi, sigma_bi^2)
    and the loss is the midpoint quadrature of the squared residual.
    Returns (pdf_hat, loss, d_mu, d_sigma, d_w).
    """
    grid = np.asarray(grid, dtype=np.float64)
    mus = np.atleast_2d(np.asarray(mus, dtype=np.float64))
    sigmas = np.atleast_2d(np.asarray(sigmas, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    target_pdf = np.asarray(target_pdf, dtype=np.float64)
    b_size = mus.shape[0]

    diff = grid[None, None, :] - mus[:, :, None]          # (B, N, G)
    inv_sig = 1.0 / sigmas
    z = diff * inv_sig[:, :, None]
    phi = np.exp(-0.5 * z * z) * (inv_sig[:, :, None] / _SQRT_2PI)
    pdf_hat = np.einsum("i,big->g", weights, phi) / b_size
    resid = pdf_hat - target_pdf
    loss = float(cell * np.dot(resid, resid))

    scale = 2.0 * cell / b_size
    # d pdf_hat_g / d mu_bi = w_i phi * z / sigma ; chain through the residual
    rphi = phi * resid[None, None, :]
    d_mu = scale * weights[None, :] * np.einsum("big,big->bi", rphi, z * inv_sig[:, :, None])
    d_sigma = scale * weights[None, :] * np.einsum(
        "big,big->bi", rphi, (z * z - 1.0) * inv_sig[:, :, None]
    )
    d_w = scale * np.einsum("big->i", rphi)
    return pdf_hat, loss, d_mu, d_sigma, d_w


def kde_cdf(x, sorted_samples, bandwidth):
    """Gaussian-KDE cumulative distribution at points x.

    sorted_samples must be ascending.  Evaluated in chunks to bound memory.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x).astype(np.float64, copy=False)
    n = sorted_samples.size
    out = np.empty(flat.shape, dtype=np.float64)
    chunk = max(1, int(2_000_000 // max(n, 1)))
    for start in range(0, flat.size, chunk):
        sl = flat[start : start + chunk]
        out[start : start + chunk] = ndtr(
            (sl[:, None] - sorted_samples[None, :]) / bandwidth
        ).mean(axis=1)
    return out if x.ndim else float(out[0])


def kde_pdf(x, sorted_samples, bandwidth):
    """Gaussian-KDE density at points x."""
    x = np.asarray(x, dtype=np.float64)
    flat = np.atleast_1d(x).astype(np.float64, copy=False)
    n = sorted_samples.size
    out = np.empty(flat.shape, dtype=np.float64)
    chunk = max(1, int(2_000_000 // max(n, 1)))
    norm = 1.0 / (n * bandwidth * _SQRT_2PI)
    for start in range(0, flat.size, chunk):
        sl = flat[start : start + chunk]
        z = (sl[:, None] - sorted_samples[None, :]) / bandwidth
        out[start : start + chunk] = np.exp(-0.5 * z * z).sum(axis=1) * norm
    return out if x.ndim else float(out[0])
