"""Parity and selection checks for the numeric backends.

The compiled extension must agree with the numpy reference on every
kernel up to float reassociation noise.
"""

import os
import subprocess
import sys

import numpy as np
import pytest

from noisedecomp.backend import reference

speedups = pytest.importorskip("noisedecomp.backend._speedups")

RTOL = 1e-10
ATOL = 1e-12


def _net_fixture(seed=0):
    rng = np.random.default_rng(seed)
    sizes = [5, 8, 6, 3]
    acts = [reference.ACT_TANH, reference.ACT_RELU, reference.ACT_IDENTITY]
    weights = [rng.normal(size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(size=b) for b in sizes[1:]]
    x = rng.normal(size=(7, sizes[0]))
    return x, weights, biases, acts


def test_dense_forward_parity():
    x, weights, biases, acts = _net_fixture()
    out_r, inputs_r, pre_r = reference.dense_forward(x, weights, biases, acts)
    out_c, inputs_c, pre_c = speedups.dense_forward(x, weights, biases, acts)
    assert np.allclose(out_r, out_c, rtol=RTOL, atol=ATOL)
    for a, b in zip(inputs_r, inputs_c):
        assert np.allclose(a, b, rtol=RTOL, atol=ATOL)
    for a, b in zip(pre_r, pre_c):
        assert np.allclose(a, b, rtol=RTOL, atol=ATOL)


def test_dense_backward_parity():
    x, weights, biases, acts = _net_fixture(1)
    out, inputs, preacts = reference.dense_forward(x, weights, biases, acts)
    d_out = np.random.default_rng(2).normal(size=out.shape)
    dw_r, db_r, dx_r = reference.dense_backward(d_out, weights, acts, inputs, preacts)
    dw_c, db_c, dx_c = speedups.dense_backward(d_out, weights, acts, inputs, preacts)
    for a, b in zip(dw_r, dw_c):
        assert np.allclose(a, b, rtol=RTOL, atol=ATOL)
    for a, b in zip(db_r, db_c):
        assert np.allclose(a, b, rtol=RTOL, atol=ATOL)
    assert np.allclose(dx_r, dx_c, rtol=RTOL, atol=ATOL)


def test_mixture_pdf_parity():
    rng = np.random.default_rng(3)
    x = rng.normal(size=300) * 4.0
    means = np.array([-2.0, 0.5, 3.0])
    variances = np.array([1.5, 0.4, 2.5])
    weights = np.array([0.2, 0.5, 0.3])
    r = reference.gaussian_mixture_pdf(x, means, variances, weights)
    c = speedups.gaussian_mixture_pdf(x, means, variances, weights)
    assert np.allclose(r, c, rtol=RTOL, atol=ATOL)


def test_mixture_fit_terms_parity():
    rng = np.random.default_rng(4)
    grid = np.linspace(-6.0, 6.0, 128)
    cell = float(grid[1] - grid[0])
    mus = rng.normal(size=(10, 3))
    sigmas = rng.random((10, 3)) + 0.5
    weights = np.array([0.25, 0.35, 0.4])
    target = reference.gaussian_mixture_pdf(
        grid, np.array([0.0]), np.array([2.0]), np.array([1.0])
    )
    pdf_r, loss_r, dmu_r, dsig_r, dw_r = reference.mixture_fit_terms(
        grid, cell, mus, sigmas, weights, target
    )
    pdf_c, loss_c, dmu_c, dsig_c, dw_c = speedups.mixture_fit_terms(
        grid, cell, mus, sigmas, weights, target
    )
    assert np.allclose(pdf_r, pdf_c, rtol=RTOL, atol=ATOL)
    assert abs(loss_r - loss_c) <= 1e-12 + 1e-10 * abs(loss_r)
    assert np.allclose(dmu_r, dmu_c, rtol=RTOL, atol=ATOL)
    assert np.allclose(dsig_r, dsig_c, rtol=RTOL, atol=ATOL)
    assert np.allclose(dw_r, dw_c, rtol=RTOL, atol=ATOL)


def test_kde_parity():
    rng = np.random.default_rng(5)
    samples = np.sort(rng.normal(size=400))
    x = np.linspace(-4.0, 4.0, 257)
    assert np.allclose(
        reference.kde_pdf(x, samples, 0.3),
        speedups.kde_pdf(x, samples, 0.3),
        rtol=RTOL,
        atol=ATOL,
    )
    assert np.allclose(
        reference.kde_cdf(x, samples, 0.3),
        speedups.kde_cdf(x, samples, 0.3),
        rtol=RTOL,
        atol=ATOL,
    )


def test_kde_scalar_and_repeat_calls_are_deterministic():
    rng = np.random.default_rng(6)
    samples = np.sort(rng.normal(size=64))
    first = speedups.kde_pdf(0.37, samples, 0.25)
    second = speedups.kde_pdf(0.37, samples, 0.25)
    assert isinstance(first, float)
    assert first == second
    assert reference.kde_cdf(-50.0, samples, 0.25) < 1e-12
    assert reference.kde_cdf(50.0, samples, 0.25) > 1.0 - 1e-12


def _backend_name_with_env(value):
    env = dict(os.environ)
    if value is None:
        env.pop("NOISEDECOMP_PURE_PYTHON", None)
    else:
        env["NOISEDECOMP_PURE_PYTHON"] = value
    out = subprocess.run(
        [sys.executable, "-c", "import noisedecomp.backend as b; print(b.BACKEND_NAME)"],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return out.stdout.strip()


def test_backend_selection_env_var():
    assert _backend_name_with_env(None) == "compiled"
    assert _backend_name_with_env("0") == "compiled"
    assert _backend_name_with_env("1") == "python"


def test_activation_codes_match():
    for name in ("ACT_IDENTITY", "ACT_RELU", "ACT_TANH", "ACT_SIGMOID", "ACT_SOFTPLUS"):
        assert getattr(reference, name) == getattr(speedups, name)
