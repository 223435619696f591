"""Distortion functions and the distorted expectation.

cvar here is the linear level remap tau -> eta * tau, so its distorted
values are the undistorted ones scaled by eta; the top of its range is
eta rather than 1 and every ordering it induces matches the ordinary
mean's. The checks below pin that behavior.
"""

import numpy as np
import pytest

from noisedecomp.dists import Gaussian
from noisedecomp.distortion import (
    KINDS,
    TABLE_CONFIGS,
    DistortionFn,
    check_strictly_increasing,
    distort,
    distorted_expectation,
    parse_spec,
)
from noisedecomp.errors import ConfigError, DomainError
from noisedecomp.nets import RandomSource


def test_frozen_point_values():
    assert abs(DistortionFn("cpw", 0.71)(0.5) - 0.46058818086383724) < 1e-12
    assert abs(DistortionFn("wang", 0.75)(0.5) - 0.7733726476231317) < 1e-12
    assert abs(DistortionFn("wang", -0.75)(0.5) - 0.2266273523768682) < 1e-12
    assert abs(DistortionFn("pow", -2.0)(0.5) - 0.2062994740159002) < 1e-12
    assert abs(DistortionFn("pow", 2.0)(0.5) - 0.7937005259840998) < 1e-12
    assert DistortionFn("cvar", 0.25)(0.5) == 0.125


def test_endpoints_per_kind():
    for kind, eta in TABLE_CONFIGS:
        fn = DistortionFn(kind, eta)
        assert fn(0.0) == 0.0
        top = eta if kind == "cvar" else 1.0
        assert abs(fn(1.0) - top) < 1e-12
    assert DistortionFn("expectation")(1.0) == 1.0


def test_strictly_increasing_on_every_table_configuration():
    for kind, eta in TABLE_CONFIGS:
        assert check_strictly_increasing(DistortionFn(kind, eta))
    assert check_strictly_increasing(DistortionFn("expectation"))

    def constant_stub(tau):
        return np.zeros_like(np.asarray(tau, dtype=np.float64))

    assert not check_strictly_increasing(constant_stub)


def test_distort_validation_and_shapes():
    fn = DistortionFn("wang", 0.75)
    with pytest.raises(DomainError):
        fn(-0.1)
    with pytest.raises(DomainError):
        fn(1.1)
    out = fn(np.array([[0.25, 0.5], [0.75, 1.0]]))
    assert out.shape == (2, 2)
    assert isinstance(fn(0.5), float)


def test_distortion_fn_validation():
    with pytest.raises(ConfigError):
        DistortionFn("soft")
    with pytest.raises(DomainError):
        DistortionFn("wang", np.inf)
    with pytest.raises(DomainError):
        DistortionFn("cpw", 0.0)
    with pytest.raises(DomainError):
        DistortionFn("cvar", 0.0)
    with pytest.raises(DomainError):
        DistortionFn("cvar", 1.5)
    assert DistortionFn("cvar", 1.0).kind == "cvar"
    assert set(KINDS) == {"cpw", "wang", "pow", "cvar", "expectation"}


def test_identity_expectation_is_grid_mean():
    levels = (np.arange(128) + 0.5) / 128
    values = Gaussian(0.0, 1.0).quantile(levels)
    got = distorted_expectation(DistortionFn("expectation"), levels, values)
    assert abs(got - values.mean()) < 0.03


def test_cvar_scales_the_identity_value():
    levels = (np.arange(64) + 0.5) / 64
    values = np.sort(RandomSource(3).spawn(0).standard_normal(64)) * 2.0 + 0.7
    identity = distorted_expectation(DistortionFn("expectation"), levels, values)
    for eta in (0.1, 0.25, 1.0):
        got = distorted_expectation(DistortionFn("cvar", eta), levels, values)
        assert abs(got - eta * identity) < 1e-12


def test_cvar_half_on_uniform_grid():
    levels = (np.arange(128) + 0.5) / 128
    got = distorted_expectation(DistortionFn("cvar", 0.5), levels, levels)
    assert abs(got - 0.25) < 0.01


def test_wang_shifts_gaussian_mean_by_minus_eta():
    levels = (np.arange(10_000) + 0.5) / 10_000
    values = Gaussian(0.0, 1.0).quantile(levels)
    for eta in (0.75, -0.75):
        got = distorted_expectation(DistortionFn("wang", eta), levels, values)
        assert abs(got - (-eta)) < 5e-3


def test_risk_averse_wang_prefers_the_narrow_grid():
    levels = (np.arange(64) + 0.5) / 64
    narrow = Gaussian(0.0, 0.25).quantile(levels)
    wide = Gaussian(0.05, 4.0).quantile(levels)
    averse = DistortionFn("wang", 0.75)
    seeking = DistortionFn("wang", -0.75)
    assert distorted_expectation(averse, levels, narrow) > distorted_expectation(
        averse, levels, wide
    )
    assert distorted_expectation(seeking, levels, wide) > distorted_expectation(
        seeking, levels, narrow
    )


def test_pointwise_dominance_is_preserved():
    rng = RandomSource(4).spawn(0)
    levels = (np.arange(32) + 0.5) / 32
    low = np.sort(rng.standard_normal(32))
    high = low + rng.random(32) * 0.5
    for kind, eta in TABLE_CONFIGS:
        fn = DistortionFn(kind, eta)
        assert distorted_expectation(fn, levels, high) >= distorted_expectation(
            fn, levels, low
        )


def test_distorted_expectation_validation():
    fn = DistortionFn("expectation")
    with pytest.raises(DomainError):
        distorted_expectation(fn, np.array([0.5, 0.5]), np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        distorted_expectation(fn, np.array([0.0, 0.5]), np.array([0.0, 1.0]))
    with pytest.raises(DomainError):
        distorted_expectation(fn, np.array([0.25, 0.5]), np.array([0.0]))


def test_parse_spec_round_trip():
    assert parse_spec("cpw:0.71") == DistortionFn("cpw", 0.71)
    assert parse_spec("wang:-0.75") == DistortionFn("wang", -0.75)
    assert parse_spec(" cvar:0.25 ") == DistortionFn("cvar", 0.25)
    assert parse_spec("expectation") == DistortionFn("expectation")
    with pytest.raises(ConfigError):
        parse_spec("")
    with pytest.raises(ConfigError):
        parse_spec("wang")
    with pytest.raises(ConfigError):
        parse_spec("expectation:0.5")
    with pytest.raises(ConfigError):
        parse_spec("wang:door")
    with pytest.raises(ConfigError):
        parse_spec("vig:0.5")


def test_labels():
    assert DistortionFn("cpw", 0.71).label() == "cpw:0.71"
    assert DistortionFn("wang", -0.75).label() == "wang:-0.75"
    assert DistortionFn("expectation").label() == "expectation"
