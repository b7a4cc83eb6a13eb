#!/usr/bin/env python3
"""
영향 함수와 점근 분산 프로파일 테스트
"""
import dataclasses
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.core.asymptotics import (
    asy_sd,
    profiles_over_grid,
    psi,
    ranking_check,
    sigma_sq,
    variance_profile,
)
from src.core.simulation import oracle_model, replication_stream
from src.models.oracle_model import SIGMA_KINDS, VarianceProfile
from src.utils.errors import SamplerMismatch

K4_NORM_SQ = 27.0 / (32.0 * np.sqrt(np.pi))
E = np.exp(1.0)


def _flat_model(sampler=None):
    """m₁ = m₀ = 0, 분산 0 인 퇴화 모형"""
    zeros = lambda X: np.zeros(X.shape[0])  # noqa: E731
    half = lambda X: np.full(X.shape[0], 0.5)  # noqa: E731

    def sample_given_x1(x1, size, rng):
        X = rng.uniform(-0.5, 0.5, (size, 2))
        X[:, 0] = float(np.atleast_1d(x1)[0])
        return X

    return dataclasses.replace(
        oracle_model(1),
        m1=zeros, m0=zeros, var1=zeros, var0=zeros,
        propensity=half, prop_index1=half, prop_index0=half,
        sample_given_x1=sampler or sample_given_x1,
        tau=lambda x1: 0.0,
    )


# ---- psi ----

def test_psi_model1_values():
    """x=(0,1): m₁=1, p=expit(1)"""
    model = oracle_model(1)
    x = np.array([0.0, 1.0])
    assert np.isclose(psi(1, model, x, 2.0, 1.0)[0], 2.0 + 1.0 / E)
    assert np.isclose(psi(1, model, x, 0.0, 0.0)[0], 1.0)
    assert np.isclose(psi(3, model, x, 2.0, 1.0)[0], 1.0)
    assert np.isclose(psi(2, model, x, 2.0, 1.0)[0], 2.0 + 1.0 / E)


def test_psi_rejects_unknown_variant():
    with pytest.raises(ValueError):
        psi(5, oracle_model(1), np.zeros(2), 0.0, 0.0)


def test_psi4_with_full_propensity_equals_psi1():
    """p(β₁ᵀX) = p(β₀ᵀX) = p(X) 이면 Ψ₄ = Ψ₁"""
    base = oracle_model(2)
    model = dataclasses.replace(base, prop_index1=base.propensity, prop_index0=base.propensity)
    rng = np.random.default_rng(0)
    X = rng.uniform(-0.5, 1.5, (50, 4))
    d = (rng.uniform(size=50) < 0.5).astype(float)
    y = rng.normal(size=50)
    assert np.allclose(psi(4, model, X, y, d), psi(1, model, X, y, d), rtol=0, atol=1e-12)


def test_psi_variants_differ_by_one_arm_term():
    model = oracle_model(3)
    rng = np.random.default_rng(1)
    X = rng.uniform(-0.5, 1.5, (40, 3))
    d = (rng.uniform(size=40) < 0.5).astype(float)
    y = rng.normal(size=40)
    m0 = model.m0(X)
    control_term = (1.0 - d) * (y - m0) / (1.0 - model.prop_index0(X))
    treated_term = d * (y - model.m1(X)) / model.prop_index1(X)
    assert np.allclose(psi(4, model, X, y, d) - psi(2, model, X, y, d), -control_term)
    assert np.allclose(psi(4, model, X, y, d) - psi(3, model, X, y, d), treated_term)


def test_psi1_conditional_mean_is_tau():
    """E[Ψ₁ | X₁=x₁] = τ(x₁)"""
    model = oracle_model(1)
    rng = replication_stream(5, 0)
    X = model.sample_given_x1(np.array([0.0]), 200_000, rng)
    d = (rng.uniform(size=X.shape[0]) < model.propensity(X)).astype(float)
    y = d * (model.m1(X) + rng.normal(0.0, 0.25, X.shape[0]))
    assert abs(np.mean(psi(1, model, X, y, d)) - model.tau(0.0)) < 0.01


# ---- sigma_sq / variance_profile ----

@pytest.mark.parametrize("x1", [-0.4, -0.2, 0.0, 0.2, 0.4])
def test_sigma_o_model1_is_uniform_variance(x1):
    """모형 1: m₁ − m₀ − τ(x₁) = U 이므로 모든 x₁ 에서 σ²_O = Var(U) = 1/12"""
    value, se = sigma_sq("O", oracle_model(1), x1, mc_draws=100_000, seed=3)
    assert se > 0.0
    assert abs(value - 1.0 / 12.0) < 3.0 * se


def test_sigma_gap_n_minus_o_model1():
    """σ²_N − σ²_O = 0.0625·E[1/p(X) | X₁=0] = 0.0625·(1 + e⁻¹·2 sinh 0.5)"""
    profile = variance_profile(oracle_model(1), 0.0, mc_draws=200_000, seed=4)
    expected = 0.0625 * (1.0 + 2.0 * np.sinh(0.5) / E)
    assert abs(profile.get("N") - profile.get("O") - expected) < 1e-3


def test_profile_equalities_hold_exactly():
    """P, S1 은 O 와, 대조군 분산이 0 이라 S2 는 S4 와 같다"""
    profile = variance_profile(oracle_model(2), 0.2, mc_draws=20_000, seed=1)
    assert profile.get("P") == profile.get("O")
    assert profile.get("S1") == profile.get("O")
    assert np.isclose(profile.get("S2"), profile.get("S4"), rtol=0, atol=1e-15)
    assert set(profile.sigma_sq) == set(SIGMA_KINDS)
    assert profile.f_x1 == 1.0


def test_degenerate_model_profile_is_zero():
    profile = variance_profile(_flat_model(), 0.1, mc_draws=10_000, seed=0)
    for kind in SIGMA_KINDS:
        assert profile.get(kind) == 0.0
        assert profile.mc_se[kind] == 0.0


def test_sampler_mismatch_detected():
    def wrong(x1, size, rng):
        return rng.uniform(-0.5, 0.5, (size, 2))

    with pytest.raises(SamplerMismatch):
        variance_profile(_flat_model(wrong), 0.1, mc_draws=10_000)


def test_mc_draws_minimum():
    with pytest.raises(ValueError):
        variance_profile(oracle_model(1), 0.0, mc_draws=9_999)


def test_sigma_sq_unknown_kind():
    with pytest.raises(ValueError):
        sigma_sq("Q", oracle_model(1), 0.0, mc_draws=10_000)


def test_profile_is_deterministic():
    a = variance_profile(oracle_model(3), -0.2, mc_draws=10_000, seed=9)
    b = variance_profile(oracle_model(3), -0.2, mc_draws=10_000, seed=9)
    assert a.sigma_sq == b.sigma_sq


def test_profiles_over_grid_uses_independent_streams():
    profiles = profiles_over_grid(oracle_model(1), [np.array([0.1]), np.array([0.1])], mc_draws=10_000)
    assert profiles[0].get("O") != profiles[1].get("O")


# ---- asy_sd ----

def test_asy_sd_order4_gaussian():
    """√(‖K₄‖²·(1/12)) ≈ 0.199, 표 OR SD ≈ 0.195 근처"""
    value = asy_sd(1.0 / 12.0, 1.0, K4_NORM_SQ)
    assert np.isclose(value, 0.1992, atol=5e-4)
    assert abs(value - 0.195) / 0.195 < 0.3


def test_asy_sd_unscaled_and_monotone():
    scaled = asy_sd(0.5, 1.0, K4_NORM_SQ)
    assert np.isclose(asy_sd(0.5, 1.0, K4_NORM_SQ, n=200, h1=0.05, scaled=False), scaled / np.sqrt(10.0))
    assert asy_sd(0.6, 1.0, K4_NORM_SQ) > scaled
    assert asy_sd(0.5, 2.0, K4_NORM_SQ) < scaled
    assert asy_sd(0.0, 1.0, K4_NORM_SQ) == 0.0


@pytest.mark.parametrize("args", [
    (0.1, 0.0, 0.5),
    (-0.1, 1.0, 0.5),
])
def test_asy_sd_rejects_invalid(args):
    with pytest.raises(ValueError):
        asy_sd(*args)


def test_asy_sd_unscaled_needs_n_and_h1():
    with pytest.raises(ValueError):
        asy_sd(0.1, 1.0, 0.5, scaled=False)


# ---- ranking ----

@pytest.mark.parametrize("model", [1, 2, 3])
def test_ranking_holds_for_all_models(model):
    grid = [np.array([x]) for x in (-0.4, -0.2, 0.0, 0.2, 0.4)]
    profiles = profiles_over_grid(oracle_model(model), grid, mc_draws=20_000, seed=model)
    report = ranking_check(profiles)
    assert report.passed, [(c.x1, c.lower, c.upper, c.margin) for c in report.violations]
    assert len(report.checks) == 5 * 9


def test_ranking_identical_profiles_pass():
    values = {kind: 0.3 for kind in SIGMA_KINDS}
    profile = VarianceProfile(x1=np.array([0.0]), sigma_sq=values, mc_se={k: 0.0 for k in values},
                              f_x1=1.0, k1_norm_sq=0.5, mc_draws=10_000)
    assert ranking_check([profile]).passed


def test_ranking_violation_detected():
    values = {kind: 0.3 for kind in SIGMA_KINDS}
    values["S2"] = 0.1
    profile = VarianceProfile(x1=np.array([0.2]), sigma_sq=values, mc_se={k: 0.001 for k in values},
                              f_x1=1.0, k1_norm_sq=0.5, mc_draws=10_000)
    report = ranking_check([profile])
    assert not report.passed
    assert [(c.lower, c.upper) for c in report.violations] == [("O", "S2")]
    assert report.violations[0].x1 == (0.2,)


def test_ranking_skips_missing_kinds():
    profile = VarianceProfile(x1=np.array([0.0]), sigma_sq={"O": 0.1, "N": 0.2},
                              mc_se={"O": 0.0, "N": 0.0}, f_x1=1.0, k1_norm_sq=0.5, mc_draws=10_000)
    report = ranking_check([profile], chains=(("O", "N"),))
    assert report.passed
    assert len(report.checks) == 1
