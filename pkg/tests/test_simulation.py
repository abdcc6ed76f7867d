import dataclasses
from fractions import Fraction

import numpy as np
import pytest

from treated import (
    Dataset,
    Dependence,
    DgpSpec,
    EstimandKind,
    NuisanceValues,
    OutcomeKind,
    ValidationError,
    XDist,
    estimate_all,
    estimate_psi_hat,
    fh_sharpness_oracle,
    generate,
    oracle_asymptotic_variances,
    psi_patt_true,
    psi_tau_true_and_var,
    psi_tilde,
    run_monte_carlo,
    true_sample_estimands,
)
from treated.simulation import McValue, PotentialDataset, _child_seed, ORACLE_CONFIG

from conftest import STD_SPEC


def _d1_spec(**overrides):
    base = dict(
        d=1,
        propensity_coeffs=[0.3, 0.4],
        mu0_coeffs=[1.0, 1.0],
        mu1_coeffs=[2.0, 1.5],
        noise0_sd_coeffs=[1.0, 0.0],
        noise1_sd_coeffs=[0.8, 0.0],
    )
    base.update(overrides)
    return DgpSpec(**base)


# ---------------------------------------------------------------------------
# generate.

def test_generate_reproducible_bit_identical():
    spec = _d1_spec()
    a = generate(spec, 500, seed=42)
    b = generate(spec, 500, seed=42)
    assert np.array_equal(a.dataset.y, b.dataset.y)
    assert np.array_equal(a.dataset.a, b.dataset.a)
    assert np.array_equal(a.dataset.x, b.dataset.x)
    assert np.array_equal(a.y0, b.y0)
    assert np.array_equal(a.y1, b.y1)
    c = generate(spec, 500, seed=43)
    assert not np.array_equal(a.dataset.y, c.dataset.y)


def test_generate_consistency_identity_exact():
    pd = generate(STD_SPEC, 2_000, seed=0)
    a = pd.dataset.a
    assert np.all(pd.dataset.y == np.where(a == 1, pd.y1, pd.y0))


def test_generate_pi_clipped_and_noise_floored():
    spec = _d1_spec(propensity_coeffs=[-8.0, 0.1], noise0_sd_coeffs=[0.0, 0.0])
    pd = generate(spec, 1_000, seed=1)
    pi = pd.true_nuisances.pi_hat
    assert pi.min() >= 0.02 and pi.max() <= 0.98
    # zero sd coefficients floor at 0.05: outcomes never exactly deterministic
    controls = pd.dataset.a == 0
    assert np.all(pd.true_nuisances.sigma0_hat == 0.05)
    assert np.any(pd.dataset.y[controls] != pd.true_nuisances.mu0_hat[controls])


def test_generate_exact_noise_switch():
    spec = _d1_spec(noise0_sd_coeffs=[0.0, 0.0], noise1_sd_coeffs=[0.0, 0.0],
                    exact_noise=True)
    pd = generate(spec, 200, seed=2)
    assert np.array_equal(pd.y0, spec.mu(0, pd.dataset.x))
    assert np.array_equal(pd.y1, spec.mu(1, pd.dataset.x))


def test_generate_treated_share_matches_oracle():
    # E[pi(X)] by a 1e7-draw oracle; empirical share within 3 binomial SEs.
    spec = _d1_spec()
    rng = np.random.default_rng(987)
    e_pi = float(np.mean([spec.propensity(rng.standard_normal((1_000_000, 1))).mean()
                          for _ in range(10)]))
    n = 1_000_000
    pd = generate(spec, n, seed=11)
    share = pd.dataset.a.mean()
    tol = 3 * np.sqrt(e_pi * (1 - e_pi) / n)
    assert abs(share - e_pi) < tol


def test_generate_ignorability_within_strata():
    # Within narrow covariate strata, treatment is uncorrelated with both
    # potential outcomes (3 MC standard errors, SE ~ 1/sqrt(m)). Strata must
    # be narrow: inside a wide stratum both a and y0 still track x.
    spec = _d1_spec()
    pd = generate(spec, 200_000, seed=31)
    x = pd.dataset.x.ravel()
    edges = np.quantile(x, np.linspace(0, 1, 101))
    for lo, hi in zip(edges[:-1], edges[1:]):
        rows = (x >= lo) & (x <= hi)
        m = rows.sum()
        a = pd.dataset.a[rows]
        if a.std() == 0:
            continue
        for pot in (pd.y0[rows], pd.y1[rows]):
            corr = np.corrcoef(a, pot)[0, 1]
            assert abs(corr) <= 3.0 / np.sqrt(m)


def test_binary_generation_margins_and_dependence():
    spec = _d1_spec(mu0_coeffs=[0.3, 0.3], mu1_coeffs=[0.5, 0.3],
                    outcome_kind=OutcomeKind.BINARY, dependence=Dependence.COMONOTONE,
                    x_dist=XDist.UNIFORM01)
    pd = generate(spec, 100_000, seed=3)
    assert set(np.unique(pd.y0)) <= {0.0, 1.0}
    # comonotone with p1 >= p0 pointwise: y1 >= y0 always
    assert np.all(pd.y1 >= pd.y0)
    p0 = spec.mu(0, pd.dataset.x)
    assert abs(pd.y0.mean() - p0.mean()) < 3 * np.sqrt(0.25 / 100_000)


# ---------------------------------------------------------------------------
# true_sample_estimands / psi_tilde: exact three-row arithmetic.

def _three_row_pd():
    x = np.array([[0.0], [1.0], [2.0]])
    a = np.array([1, 0, 1])
    y0 = np.array([1.0, 2.0, 3.0])
    y1 = np.array([4.0, 2.0, 5.0])
    y = np.where(a == 1, y1, y0)
    nuis = NuisanceValues(pi_hat=[0.2, 0.5, 0.8], mu0_hat=[1.0, 1.5, 2.0],
                          mu1_hat=[3.0, 4.0, 5.0], sigma0_hat=np.ones(3),
                          sigma1_hat=np.ones(3), clip_eps=0.02)
    return PotentialDataset(dataset=Dataset(y=y, a=a, x=x), y0=y0, y1=y1,
                            true_nuisances=nuis)


def test_true_sample_estimands_three_row_arithmetic():
    pd = _three_row_pd()
    got = true_sample_estimands(pd, psi_patt_true=1.25)
    # hand arithmetic in exact rationals
    expected = {
        EstimandKind.PATT: 1.25,
        EstimandKind.SATT: Fraction(3 + 2, 2),
        EstimandKind.CATT: Fraction(2 + 3, 2),
        EstimandKind.MATT: Fraction(3 + 3, 2),
        EstimandKind.ACTT: (Fraction(1, 5) * 2 + Fraction(1, 2) * Fraction(5, 2)
                            + Fraction(4, 5) * 3) / Fraction(3, 2),
        EstimandKind.SWATT: (Fraction(1, 5) * 3 + Fraction(4, 5) * 2) / Fraction(3, 2),
    }
    for kind, value in expected.items():
        assert got[kind] == pytest.approx(float(value), rel=1e-12), kind


def test_true_sample_estimands_constant_effect():
    spec = _d1_spec(mu1_coeffs=[3.0, 1.0], dependence=Dependence.COMONOTONE,
                    noise1_sd_coeffs=[1.0, 0.0])  # equal sds, shared noise
    pd = generate(spec, 5_000, seed=8)
    got = true_sample_estimands(pd, psi_patt_true=2.0)
    assert got[EstimandKind.SATT] == pytest.approx(2.0, rel=1e-12)
    assert got[EstimandKind.SWATT] == pytest.approx(2.0, rel=1e-12)
    assert got[EstimandKind.CATT] == pytest.approx(2.0, rel=1e-12)
    assert got[EstimandKind.ACTT] == pytest.approx(2.0, rel=1e-12)


def test_sample_estimands_converge_to_population_effect(std_oracle):
    pd = generate(STD_SPEC, 1_000_000, seed=17)
    psi = std_oracle.psi_patt.value
    got = true_sample_estimands(pd, psi)
    nuis = pd.true_nuisances
    a = pd.dataset.a.astype(float)
    pi = nuis.pi_hat
    n = pd.dataset.n
    # self-normalized 4-sigma tolerances from the per-unit ingredients
    ingredients = {
        EstimandKind.SATT: a * (pd.y1 - pd.y0 - psi) / a.mean(),
        EstimandKind.CATT: a * (nuis.mu1_hat - nuis.mu0_hat - psi) / a.mean(),
        EstimandKind.MATT: a * (pd.dataset.y - nuis.mu0_hat - psi) / a.mean(),
        EstimandKind.ACTT: pi * (nuis.mu1_hat - nuis.mu0_hat - psi) / pi.mean(),
        EstimandKind.SWATT: pi * (pd.y1 - pd.y0 - psi) / pi.mean(),
    }
    for kind, term in ingredients.items():
        tol = 4.0 * term.std() / np.sqrt(n) + 4.0 * std_oracle.psi_patt.se
        assert abs(got[kind] - psi) < tol, kind


def test_psi_tilde_three_row_arithmetic():
    pd = _three_row_pd()
    # rows contribute 3, -1*0.5, 3; mean/abar = (5.5/3)/(2/3) = 2.75
    assert psi_tilde(pd) == pytest.approx(2.75, rel=1e-12)


def test_psi_tilde_zero_when_outcome_matches_mu0():
    pd = _three_row_pd()
    ds = pd.dataset
    flat = PotentialDataset(
        dataset=Dataset(y=pd.true_nuisances.mu0_hat, a=ds.a, x=ds.x),
        y0=pd.true_nuisances.mu0_hat, y1=pd.true_nuisances.mu0_hat,
        true_nuisances=pd.true_nuisances)
    assert psi_tilde(flat) == 0.0


# ---------------------------------------------------------------------------
# psi_patt_true.

def test_psi_patt_true_constant_effect_exact():
    spec = _d1_spec(mu0_coeffs=[1.0, 1.0], mu1_coeffs=[3.5, 1.0])
    got = psi_patt_true(spec, draws=100_000, seed=5)
    assert got.value == pytest.approx(2.5, rel=1e-12)


def test_psi_patt_true_matches_gauss_hermite_quadrature():
    # Independent oracle: 200-node Gauss-Hermite integration of the exact
    # integrand (clipping included, though inactive on any plausible node).
    spec = _d1_spec()
    nodes, weights = np.polynomial.hermite.hermgauss(200)
    x = (np.sqrt(2.0) * nodes).reshape(-1, 1)
    w = weights / np.sqrt(np.pi)
    pi = spec.propensity(x)
    delta = spec.mu(1, x) - spec.mu(0, x)
    quad = float((w * pi * delta).sum() / (w * pi).sum())
    got = psi_patt_true(spec, draws=4_000_000, seed=6, batch_size=250_000)
    assert got.value == pytest.approx(quad, abs=5 * got.se)
    assert abs(got.value - quad) < 5e-3


def test_psi_patt_true_se_halves_when_draws_quadruple():
    spec = _d1_spec()
    base = psi_patt_true(spec, draws=500_000, seed=7, batch_size=5_000)
    quad = psi_patt_true(spec, draws=2_000_000, seed=8, batch_size=5_000)
    ratio = quad.se / base.se
    assert 0.5 * 0.8 < ratio < 0.5 * 1.2


# ---------------------------------------------------------------------------
# oracle_asymptotic_variances.

def test_oracle_comonotone_equal_sds_swatt_equals_actt():
    spec = _d1_spec(noise1_sd_coeffs=[1.0, 0.0], dependence=Dependence.COMONOTONE)
    orc = oracle_asymptotic_variances(spec, draws=200_000, seed=9)
    assert orc.swatt.value == orc.actt.value  # subtracted term identically zero


def test_oracle_independent_noise_identity_crosscheck():
    # Under independence var(y1 - y0 | x) = sd0^2 + sd1^2; check the jointly
    # estimated subtraction against a direct x-only evaluation.
    spec = _d1_spec()
    orc = oracle_asymptotic_variances(spec, draws=4_000_000, seed=10)
    rng = np.random.default_rng(1234)
    x = rng.standard_normal((4_000_000, 1))
    pi = spec.propensity(x)
    direct = float(np.mean(pi ** 2 * (spec.sigma(0, x) ** 2 + spec.sigma(1, x) ** 2)))
    direct /= orc.p_a ** 2
    gap = orc.actt.value - orc.swatt.value
    assert gap == pytest.approx(direct, rel=0.01)


def test_oracle_seed_stability_one_percent():
    a = oracle_asymptotic_variances(STD_SPEC, draws=10_000_000, seed=101)
    b = oracle_asymptotic_variances(STD_SPEC, draws=10_000_000, seed=202)
    for kind, mv in a.by_kind().items():
        other = b.by_kind()[kind]
        assert mv.value == pytest.approx(other.value, rel=0.01), kind


def test_oracle_satt_term_direct_vs_ipw_identity():
    # E{var(y0|x) | a=1} admits both a direct and an inverse-weighted form;
    # the satt limit must equal matt + that term / p_a.
    spec = _d1_spec()
    orc = oracle_asymptotic_variances(spec, draws=4_000_000, seed=12)
    rng = np.random.default_rng(77)
    x = rng.standard_normal((4_000_000, 1))
    pi = spec.propensity(x)
    direct = float(np.mean(pi * spec.sigma(0, x) ** 2)) / orc.p_a  # E{var|a=1}
    expected = orc.matt.value + direct / orc.p_a
    assert orc.satt.value == pytest.approx(expected, rel=0.01)


# ---------------------------------------------------------------------------
# psi_tau.

def test_psi_tau_constant_mu0():
    spec = _d1_spec(mu0_coeffs=[4.0, 0.0])
    study = psi_tau_true_and_var(spec, draws=200_000, seed=13)
    assert study.tau.value == pytest.approx(4.0, rel=1e-12)


def test_psi_tau_can_exceed_full_score_variance():
    # Homogeneous effect with deterministic treated outcomes: the full-score
    # variance drops below the control-mean score variance exactly when the
    # treated residual variance is smaller than the variance of a*(mu0 - tau).
    spec = _d1_spec(mu0_coeffs=[1.0, 2.0], mu1_coeffs=[3.0, 2.0],
                    noise0_sd_coeffs=[0.6, 0.0], noise1_sd_coeffs=[0.0, 0.0],
                    exact_noise=True)
    orc = oracle_asymptotic_variances(spec, draws=2_000_000, seed=14)
    study = psi_tau_true_and_var(spec, draws=2_000_000, seed=15)
    margin = 3 * (orc.patt.se + study.var_tau_dot.se)
    assert orc.patt.value < study.var_tau_dot.value - margin


def test_psi_tau_seed_stability():
    spec = _d1_spec()
    a = psi_tau_true_and_var(spec, draws=2_000_000, seed=16)
    b = psi_tau_true_and_var(spec, draws=2_000_000, seed=17)
    assert a.var_tau_dot.value == pytest.approx(b.var_tau_dot.value, rel=0.01)


def test_monte_carlo_psi_tau_extras_track_score_variance():
    # With tau supplied, the harness reports the scaled variance of the
    # estimator against the tau-based sample variant; it should approach the
    # score variance of the control-mean functional.
    spec = _d1_spec()
    study = psi_tau_true_and_var(spec, draws=2_000_000, seed=18)
    rep = run_monte_carlo(spec, n=8_000, reps=400, seed=19, oracle_nuisances=True,
                          psi_patt=McValue(1.0, 0.0), tau_true=study.tau.value)
    scaled = rep.extras["psi_tau_var_scaled"]
    assert scaled == pytest.approx(study.var_tau_dot.value, rel=0.25)


# ---------------------------------------------------------------------------
# Frechet-Hoeffding sharpness oracle.

def test_fh_oracle_equals_min_on_grid():
    grid = [round(0.1 * k, 10) for k in range(1, 10)]
    for p in grid:
        for q in grid:
            assert fh_sharpness_oracle(p, q) == min(p, q)


def test_fh_oracle_degenerate_margins():
    assert fh_sharpness_oracle(0.4, 0.4) == 0.4
    assert fh_sharpness_oracle(0.7, 0.0) == 0.0


# ---------------------------------------------------------------------------
# run_monte_carlo.

def test_single_rep_reproduces_estimate_all():
    spec = _d1_spec()
    patt = McValue(1.0, 0.0)
    rep = run_monte_carlo(spec, n=400, reps=1, seed=5, oracle_nuisances=True,
                          psi_patt=patt)
    pd = generate(spec, 400, seed=_child_seed(5, 0))
    direct = estimate_all(pd.dataset, ORACLE_CONFIG, oracle=pd.true_nuisances)
    assert rep.extras["mean_psi_hat"] == direct.psi_hat
    assert rep.per_kind[EstimandKind.PATT].mean_variance_estimate == \
        direct.per_kind[EstimandKind.PATT].variance


def test_monte_carlo_bit_identical_reports():
    from treated.cli import dumps_canonical, mc_report_to_dict

    spec = _d1_spec()
    kwargs = dict(n=300, reps=25, seed=99, oracle_nuisances=True,
                  psi_patt=McValue(1.0, 0.0))
    a = run_monte_carlo(spec, **kwargs)
    b = run_monte_carlo(spec, **kwargs)
    assert dumps_canonical(mc_report_to_dict(a)) == dumps_canonical(mc_report_to_dict(b))


def test_failed_replications_counted_not_dropped():
    spec = _d1_spec(propensity_coeffs=[-8.0, 0.0])  # pi clipped to 0.02
    rep = run_monte_carlo(spec, n=10, reps=60, seed=3, oracle_nuisances=True,
                          psi_patt=McValue(1.0, 0.0))
    assert rep.failed_reps > 0
    assert rep.failed_reps < 60  # some replications still succeed
    assert rep.failure_messages
    assert rep.reps == 60


def test_consistency_chain_rms_decreases(std_oracle):
    # RMS error against every estimand shrinks from n=2000 to n=20000.
    rms = {}
    for n in (2_000, 20_000):
        errs = {k: [] for k in EstimandKind}
        for r in range(120):
            pd = generate(STD_SPEC, n, seed=_child_seed(55, n, r))
            truths = true_sample_estimands(pd, std_oracle.psi_patt.value)
            psi = estimate_psi_hat(pd.dataset, pd.true_nuisances)
            for k in EstimandKind:
                errs[k].append(psi - truths[k])
        rms[n] = {k: float(np.sqrt(np.mean(np.square(v)))) for k, v in errs.items()}
    for k in EstimandKind:
        assert rms[20_000][k] < rms[2_000][k], k


def test_conservative_swatt_variances_bound_truth(std_oracle):
    rep = run_monte_carlo(STD_SPEC, n=20_000, reps=100, seed=71,
                          oracle_nuisances=True, psi_patt=std_oracle.psi_patt)
    floor = std_oracle.swatt.value - 3 * std_oracle.swatt.se
    assert rep.extras["mean_swatt_conservative_simple"] >= floor
    assert rep.extras["mean_swatt_conservative_sigma"] >= floor
    # and the sigma variant is the sharper of the two
    assert rep.extras["mean_swatt_conservative_sigma"] <= \
        rep.extras["mean_swatt_conservative_simple"]


def test_double_robustness_single_misspecification(std_oracle):
    # Oracle pi with wrong mu0 (and vice versa) keeps the estimate centred.
    from treated import NuisanceValues as NV

    wrong_mu = dataclasses.replace(STD_SPEC, mu0_coeffs=[0.0, 0.0, 0.0])
    wrong_pi = dataclasses.replace(STD_SPEC, propensity_coeffs=[0.2, 0.0, 0.0])
    psi_true = std_oracle.psi_patt.value
    for pi_spec, mu_spec in ((STD_SPEC, wrong_mu), (wrong_pi, STD_SPEC)):
        est = []
        for r in range(60):
            pd = generate(STD_SPEC, 5_000, seed=_child_seed(81, r))
            nu = NV(pi_hat=pi_spec.propensity(pd.dataset.x),
                    mu0_hat=mu_spec.mu(0, pd.dataset.x), clip_eps=0.01)
            est.append(estimate_psi_hat(pd.dataset, nu))
        est = np.asarray(est)
        se = est.std(ddof=1) / np.sqrt(est.size)
        assert abs(est.mean() - psi_true) < 3 * se


# ---------------------------------------------------------------------------
# DgpSpec serialization.

def test_spec_roundtrip_through_dict():
    spec = _d1_spec(dependence=Dependence.ANTITONE, x_dist=XDist.UNIFORM01)
    data = spec.to_dict()
    back = DgpSpec.from_dict(data)
    assert back.to_dict() == data


def test_spec_rejects_bad_schema_version():
    data = _d1_spec().to_dict()
    data["schema_version"] = 99
    with pytest.raises(ValidationError):
        DgpSpec.from_dict(data)


def test_spec_rejects_bad_lengths():
    with pytest.raises(ValidationError):
        _d1_spec(propensity_coeffs=[0.1, 0.2, 0.3])
