"""Synthetic data with complete potential outcomes, brute-force oracles, and
seeded replication studies.

The generative family is logit-linear in the propensity and linear in the
conditional means, so the parametric nuisance fitters are correctly specified
and the theory's rate conditions hold by construction. Propensities are
clipped to [0.02, 0.98] at generation (explicit positivity) and continuous
noise sds are floored at 0.05 unless ``exact_noise`` deliberately permits
zero-noise outcomes for analytic test cases.

Replication r of a study draws from a stream that is a pure function of
(seed, r), so runs are reproducible regardless of execution order; aggregation
happens in replication-index order. Coverage for the sample/mixed estimands
targets the per-replication realized value; the population effect targets its
fixed Monte Carlo truth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .data_model import Dataset, EstimandKind, NuisanceValues, OutcomeKind, KIND_ORDER
from .errors import DegenerateTreatmentError, TreatedError, ValidationError
from .estimator import estimate_all
from .mathutil import expit
from .nuisance import NuisanceConfig, OutcomeMethod, PropensityMethod, SdMethod

SCHEMA_VERSION = 1
PI_CLIP = (0.02, 0.98)
BINARY_MEAN_CLAMP = (0.02, 0.98)
NOISE_SD_FLOOR = 0.05


class XDist(enum.Enum):
    STD_NORMAL = "std_normal"
    UNIFORM01 = "uniform01"


class Dependence(enum.Enum):
    """Joint law of the two potential outcomes given covariates."""

    INDEPENDENT = "independent"
    COMONOTONE = "comonotone"
    ANTITONE = "antitone"


@dataclass(frozen=True, eq=False)
class DgpSpec:
    """Generative description: logit-linear propensity, linear means and sds.

    Coefficient vectors have length d+1 (intercept first). With
    ``exact_noise`` the 0.05 sd floor is lifted so sd coefficients of zero
    yield deterministic outcomes.
    """

    d: int
    propensity_coeffs: np.ndarray
    mu0_coeffs: np.ndarray
    mu1_coeffs: np.ndarray
    noise0_sd_coeffs: np.ndarray
    noise1_sd_coeffs: np.ndarray
    x_dist: XDist = XDist.STD_NORMAL
    dependence: Dependence = Dependence.INDEPENDENT
    outcome_kind: OutcomeKind = OutcomeKind.CONTINUOUS
    exact_noise: bool = False

    def __post_init__(self):
        if self.d < 0:
            raise ValidationError("covariate dimension must be nonnegative")
        for name in ("propensity_coeffs", "mu0_coeffs", "mu1_coeffs",
                     "noise0_sd_coeffs", "noise1_sd_coeffs"):
            v = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            if v.shape[0] != self.d + 1:
                raise ValidationError(f"{name} must have length d+1={self.d + 1}")
            if not np.isfinite(v).all():
                raise ValidationError(f"{name} must be finite")
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    def _affine(self, coeffs, x):
        return coeffs[0] + x @ coeffs[1:]

    def propensity(self, x) -> np.ndarray:
        return np.clip(expit(self._affine(self.propensity_coeffs, x)), *PI_CLIP)

    def mu(self, arm: int, x) -> np.ndarray:
        raw = self._affine(self.mu1_coeffs if arm == 1 else self.mu0_coeffs, x)
        if self.outcome_kind is OutcomeKind.BINARY:
            return np.clip(raw, *BINARY_MEAN_CLAMP)
        return raw

    def noise_sd(self, arm: int, x) -> np.ndarray:
        raw = self._affine(self.noise1_sd_coeffs if arm == 1 else self.noise0_sd_coeffs, x)
        floor = 0.0 if self.exact_noise else NOISE_SD_FLOOR
        return np.maximum(floor, raw)

    def sigma(self, arm: int, x) -> np.ndarray:
        """True conditional sd of the potential outcome."""
        if self.outcome_kind is OutcomeKind.BINARY:
            p = self.mu(arm, x)
            return np.sqrt(p * (1.0 - p))
        return self.noise_sd(arm, x)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "d": self.d,
            "x_dist": self.x_dist.value,
            "propensity_coeffs": list(self.propensity_coeffs),
            "mu0_coeffs": list(self.mu0_coeffs),
            "mu1_coeffs": list(self.mu1_coeffs),
            "noise0_sd_coeffs": list(self.noise0_sd_coeffs),
            "noise1_sd_coeffs": list(self.noise1_sd_coeffs),
            "dependence": self.dependence.value,
            "outcome_kind": self.outcome_kind.value,
            "exact_noise": self.exact_noise,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DgpSpec":
        if not isinstance(data, dict):
            raise ValidationError("DGP spec must be a JSON object")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValidationError(
                f"unsupported DGP spec schema_version {version!r}, expected {SCHEMA_VERSION}"
            )
        try:
            return cls(
                d=int(data["d"]),
                propensity_coeffs=data["propensity_coeffs"],
                mu0_coeffs=data["mu0_coeffs"],
                mu1_coeffs=data["mu1_coeffs"],
                noise0_sd_coeffs=data["noise0_sd_coeffs"],
                noise1_sd_coeffs=data["noise1_sd_coeffs"],
                x_dist=XDist(data.get("x_dist", "std_normal")),
                dependence=Dependence(data.get("dependence", "independent")),
                outcome_kind=OutcomeKind(data.get("outcome_kind", "continuous")),
                exact_noise=bool(data.get("exact_noise", False)),
            )
        except KeyError as exc:
            raise ValidationError(f"DGP spec is missing field {exc}") from exc
        except ValueError as exc:
            raise ValidationError(f"bad DGP spec field: {exc}") from exc


@dataclass(frozen=True, eq=False)
class PotentialDataset:
    """Observed view plus the complete potential outcomes and exact nuisances."""

    dataset: Dataset
    y0: np.ndarray
    y1: np.ndarray
    true_nuisances: NuisanceValues

    def __post_init__(self):
        for name in ("y0", "y1"):
            v = np.array(getattr(self, name), dtype=float, copy=True).reshape(-1)
            v.flags.writeable = False
            object.__setattr__(self, name, v)


class McValue(NamedTuple):
    """A Monte Carlo estimate with its attached standard error."""

    value: float
    se: float


def _draw_x(spec: DgpSpec, n: int, rng) -> np.ndarray:
    if spec.x_dist is XDist.STD_NORMAL:
        return rng.standard_normal((n, spec.d))
    return rng.random((n, spec.d))


def _draw_potentials(spec: DgpSpec, x: np.ndarray, rng):
    """Draw (y0, y1) given x under the spec's dependence regime."""
    n = x.shape[0]
    if spec.outcome_kind is OutcomeKind.BINARY:
        p0, p1 = spec.mu(0, x), spec.mu(1, x)
        u1 = rng.random(n)
        if spec.dependence is Dependence.COMONOTONE:
            u0 = u1
        elif spec.dependence is Dependence.ANTITONE:
            u0 = 1.0 - u1
        else:
            u0 = rng.random(n)
        return (u0 < p0).astype(float), (u1 < p1).astype(float)
    z1 = rng.standard_normal(n)
    if spec.dependence is Dependence.COMONOTONE:
        z0 = z1
    elif spec.dependence is Dependence.ANTITONE:
        z0 = -z1
    else:
        z0 = rng.standard_normal(n)
    y0 = spec.mu(0, x) + spec.noise_sd(0, x) * z0
    y1 = spec.mu(1, x) + spec.noise_sd(1, x) * z1
    return y0, y1


def true_nuisance_values(spec: DgpSpec, x: np.ndarray) -> NuisanceValues:
    """Exact nuisance evaluations at each row of x (clip_eps matches PI_CLIP)."""
    return NuisanceValues(
        pi_hat=spec.propensity(x),
        mu0_hat=spec.mu(0, x),
        mu1_hat=spec.mu(1, x),
        sigma0_hat=spec.sigma(0, x),
        sigma1_hat=spec.sigma(1, x),
        clip_eps=PI_CLIP[0],
    )


def generate(spec: DgpSpec, n: int, seed) -> PotentialDataset:
    """Seeded draw of n i.i.d. units with complete potential outcomes.

    Treatment is drawn from Bernoulli(pi(x)) independently of the potential
    outcomes given x, so ignorability holds by construction, and the observed
    outcome is exactly a*y1 + (1-a)*y0.
    """
    rng = np.random.default_rng(seed)
    x = _draw_x(spec, n, rng)
    pi = spec.propensity(x)
    a = (rng.random(n) < pi).astype(np.int64)
    y0, y1 = _draw_potentials(spec, x, rng)
    y = np.where(a == 1, y1, y0)
    dataset = Dataset(y=y, a=a, x=x, outcome_kind=spec.outcome_kind)
    return PotentialDataset(dataset=dataset, y0=y0.copy(), y1=y1.copy(),
                            true_nuisances=true_nuisance_values(spec, x))


def true_sample_estimands(pd: PotentialDataset, psi_patt_true: float) -> dict:
    """Per-replication realized values of all six estimands with TRUE nuisances."""
    ds = pd.dataset
    a = ds.a.astype(float)
    nuis = pd.true_nuisances
    n_treated = a.sum()
    if n_treated == 0:
        raise DegenerateTreatmentError("no treated units: satt/catt/matt undefined")
    pi = nuis.pi_hat
    delta_mu = nuis.mu1_hat - nuis.mu0_hat
    delta_y = pd.y1 - pd.y0
    return {
        EstimandKind.PATT: float(psi_patt_true),
        EstimandKind.ACTT: float((pi * delta_mu).sum() / pi.sum()),
        EstimandKind.SWATT: float((pi * delta_y).sum() / pi.sum()),
        EstimandKind.CATT: float((a * delta_mu).sum() / n_treated),
        EstimandKind.SATT: float((a * (ds.y - pd.y0)).sum() / n_treated),
        EstimandKind.MATT: float((a * (ds.y - nuis.mu0_hat)).sum() / n_treated),
    }


def psi_tilde(pd: PotentialDataset) -> float:
    """One-step functional with TRUE nuisances: the most precisely estimable
    sample variant."""
    ds = pd.dataset
    a = ds.a.astype(float)
    pi = pd.true_nuisances.pi_hat
    resid = ds.y - pd.true_nuisances.mu0_hat
    w = a - pi * (1.0 - a) / (1.0 - pi)
    return float((w * resid).mean() / a.mean())


def fh_sharpness_oracle(p: float, q: float, grid: int = 4001) -> float:
    """Exhaustively maximize E[y1*y0] over joint Bernoulli pmfs with margins (p, q).

    The joint law is a one-parameter family indexed by the overlap cell p11;
    the oracle scans a dense inclusive grid of candidate overlaps and keeps
    the largest one with all four cells nonnegative. Certifies that the sharp
    upper bound min(p, q) is attained.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValidationError("margins must lie in [0, 1]")
    lo = max(0.0, p + q - 1.0)
    hi = min(p, q)
    best = -np.inf
    for p11 in np.linspace(lo, hi, grid):
        cells = (p11, p - p11, q - p11, 1.0 - p - q + p11)
        if all(c >= -1e-15 for c in cells):
            best = max(best, p11)
    return float(best)


# ---------------------------------------------------------------------------
# Brute-force oracles for the population constants and asymptotic variances.

def _batch_sizes(draws: int, batch_size: int):
    if draws < 1:
        raise ValidationError("draws must be >= 1")
    sizes = [batch_size] * (draws // batch_size)
    if draws % batch_size:
        sizes.append(draws % batch_size)
    return sizes


def _mc_value(batch_values) -> McValue:
    vals = np.asarray(batch_values, dtype=float)
    value = float(vals.mean())
    se = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else float("nan")
    return McValue(value, se)


def _child_seed(seed, *tail):
    """Flat entropy list for a derived stream: pure function of (seed, tail)."""
    if isinstance(seed, (int, np.integer)):
        base = [int(seed)]
    else:
        base = [int(s) for s in seed]
    return base + [int(t) for t in tail]


def psi_patt_true(spec: DgpSpec, draws: int = 10_000_000, seed=0,
                  batch_size: int = 1_000_000) -> McValue:
    """Brute-force Monte Carlo of E[pi (mu1 - mu0)] / E[pi] over x draws."""
    batch_size = min(batch_size, max(1, draws // 16))
    rng = np.random.default_rng(_child_seed(seed, 1))
    sum_num = 0.0
    sum_den = 0.0
    batch_vals = []
    for m in _batch_sizes(draws, batch_size):
        x = _draw_x(spec, m, rng)
        pi = spec.propensity(x)
        num = float((pi * (spec.mu(1, x) - spec.mu(0, x))).sum())
        den = float(pi.sum())
        sum_num += num
        sum_den += den
        batch_vals.append(num / den)
    value = sum_num / sum_den
    se = _mc_value(batch_vals).se if len(batch_vals) > 1 else float("nan")
    return McValue(float(value), se)


@dataclass(frozen=True)
class OracleVariances:
    """Brute-force limits of the six estimand variances plus the bounds.

    ``sigma_bound`` is the identified lower bound on the effect-variance term
    and ``fh_bound`` its sharp binary-outcome counterpart (None for continuous
    outcomes). Each entry carries a batch-means MC standard error.
    """

    patt: McValue
    actt: McValue
    swatt: McValue
    catt: McValue
    satt: McValue
    matt: McValue
    sigma_bound: McValue
    fh_bound: Optional[McValue]
    psi_patt: McValue
    tau: float
    p_a: float
    draws: int

    def by_kind(self) -> dict:
        return {
            EstimandKind.PATT: self.patt,
            EstimandKind.ACTT: self.actt,
            EstimandKind.SWATT: self.swatt,
            EstimandKind.CATT: self.catt,
            EstimandKind.SATT: self.satt,
            EstimandKind.MATT: self.matt,
        }


def oracle_asymptotic_variances(spec: DgpSpec, draws: int = 10_000_000, seed=0,
                                batch_size: int = 500_000) -> OracleVariances:
    """Monte Carlo over complete draws with TRUE nuisances.

    Pass 1 estimates the population constants (treated share, effect, control
    mean among treated) from x-only draws. Pass 2 draws full joint replicates,
    evaluates the per-draw score components and the identified
    conditional-variance terms, and aggregates per batch; values are batch
    means and the attached standard errors are batch-means errors.
    """
    batch_size = min(batch_size, max(1, draws // 16))
    # Pass 1: constants from x-only draws.
    rng1 = np.random.default_rng(_child_seed(seed, 1))
    s_pi = s_pidelta = s_pimu0 = 0.0
    total = 0
    psi_batches = []
    for m in _batch_sizes(draws, batch_size):
        x = _draw_x(spec, m, rng1)
        pi = spec.propensity(x)
        pidelta = pi * (spec.mu(1, x) - spec.mu(0, x))
        s_pi += float(pi.sum())
        s_pidelta += float(pidelta.sum())
        s_pimu0 += float((pi * spec.mu(0, x)).sum())
        total += m
        psi_batches.append(float(pidelta.sum() / pi.sum()))
    p_a = s_pi / total
    psi = s_pidelta / s_pi
    tau = s_pimu0 / s_pi

    # Pass 2: joint draws, per-batch functionals.
    rng2 = np.random.default_rng(_child_seed(seed, 2))
    batches = {k: [] for k in ("patt", "actt", "catt", "matt", "satt", "swatt",
                               "sigma", "fh")}
    binary = spec.outcome_kind is OutcomeKind.BINARY
    for m in _batch_sizes(draws, batch_size):
        x = _draw_x(spec, m, rng2)
        pi = spec.propensity(x)
        a = (rng2.random(m) < pi).astype(float)
        y0, y1 = _draw_potentials(spec, x, rng2)
        y = np.where(a == 1.0, y1, y0)
        mu0, mu1 = spec.mu(0, x), spec.mu(1, x)
        sd0, sd1 = spec.sigma(0, x), spec.sigma(1, x)
        delta = mu1 - mu0
        contrast = delta - psi
        resid0 = y - mu0
        psi_y = (y - np.where(a == 1.0, mu1, mu0)) * (a - (1.0 - a) * pi / (1.0 - pi)) / p_a
        psi_a = (a - pi) * contrast / p_a
        psi_x = pi * contrast / p_a
        tau_y = resid0 * (1.0 - a) * pi / (p_a * (1.0 - pi))
        swatt_sub = (pi ** 2 * (y1 - y0 - delta) ** 2) / p_a ** 2
        satt_add = (pi * (1.0 - a) / (1.0 - pi) * resid0 ** 2) / p_a ** 2
        batches["patt"].append(np.var(psi_y + psi_a + psi_x))
        v_actt = np.var(psi_y + psi_a)
        batches["actt"].append(v_actt)
        batches["catt"].append(np.var(psi_y))
        v_matt = np.var(tau_y)
        batches["matt"].append(v_matt)
        batches["satt"].append(v_matt + satt_add.mean())
        batches["swatt"].append(v_actt - swatt_sub.mean())
        batches["sigma"].append(np.mean(pi ** 2 * (sd1 - sd0) ** 2) / p_a ** 2)
        if binary:
            batches["fh"].append(np.mean(pi ** 2 * (np.abs(delta) - delta ** 2)))

    return OracleVariances(
        patt=_mc_value(batches["patt"]),
        actt=_mc_value(batches["actt"]),
        swatt=_mc_value(batches["swatt"]),
        catt=_mc_value(batches["catt"]),
        satt=_mc_value(batches["satt"]),
        matt=_mc_value(batches["matt"]),
        sigma_bound=_mc_value(batches["sigma"]),
        fh_bound=_mc_value(batches["fh"]) if binary else None,
        psi_patt=McValue(psi, _mc_value(psi_batches).se),
        tau=tau,
        p_a=p_a,
        draws=draws,
    )


@dataclass(frozen=True)
class TauStudy:
    """Brute-force control-mean functional and its score variance."""

    tau: McValue
    var_tau_dot: McValue


def psi_tau_true_and_var(spec: DgpSpec, draws: int = 2_000_000, seed=0,
                         batch_size: int = 500_000) -> TauStudy:
    """Monte Carlo of tau = E[pi mu0]/E[pi] and the variance of its score."""
    batch_size = min(batch_size, max(1, draws // 16))
    rng1 = np.random.default_rng(_child_seed(seed, 1))
    s_pi = s_pimu0 = 0.0
    tau_batches = []
    for m in _batch_sizes(draws, batch_size):
        x = _draw_x(spec, m, rng1)
        pi = spec.propensity(x)
        pimu0 = pi * spec.mu(0, x)
        s_pi += float(pi.sum())
        s_pimu0 += float(pimu0.sum())
        tau_batches.append(float(pimu0.sum() / pi.sum()))
    tau = s_pimu0 / s_pi
    p_a = s_pi / draws

    rng2 = np.random.default_rng(_child_seed(seed, 2))
    var_batches = []
    for m in _batch_sizes(draws, batch_size):
        x = _draw_x(spec, m, rng2)
        pi = spec.propensity(x)
        a = (rng2.random(m) < pi).astype(float)
        y0, y1 = _draw_potentials(spec, x, rng2)
        y = np.where(a == 1.0, y1, y0)
        mu0 = spec.mu(0, x)
        centered = mu0 - tau
        tau_dot = ((y - mu0) * (1.0 - a) * pi / (1.0 - pi)
                   + (a - pi) * centered + pi * centered) / p_a
        var_batches.append(np.var(tau_dot))
    tau_mc = McValue(float(tau), _mc_value(tau_batches).se)
    return TauStudy(tau=tau_mc, var_tau_dot=_mc_value(var_batches))


# ---------------------------------------------------------------------------
# Replication studies.

@dataclass(frozen=True)
class McKindStats:
    """Aggregates for one estimand across replications."""

    empirical_var_scaled: float
    empirical_var_scaled_se: float
    mean_variance_estimate: float
    coverage: float
    ci_level: float


@dataclass(frozen=True)
class OrderingVerdict:
    """Paired comparison of two scaled empirical variances.

    ``holds`` means kind_small's scaled variance does not exceed kind_large's
    by more than 3 paired MC standard errors.
    """

    kind_small: EstimandKind
    kind_large: EstimandKind
    scaled_diff: float  # n * (var_small - var_large)
    scaled_se: float
    holds: bool


@dataclass(frozen=True, eq=False)
class McReport:
    per_kind: dict
    reps: int
    n: int
    seed: int
    ci_level: float
    failed_reps: int
    failure_messages: tuple
    extras: dict = field(default_factory=dict)


def _paired_verdict(errors, k_small, k_large, n) -> OrderingVerdict:
    e1 = errors[k_small] - errors[k_small].mean()
    e2 = errors[k_large] - errors[k_large].mean()
    d = e1 ** 2 - e2 ** 2
    reps = d.size
    se = float(d.std(ddof=1) / np.sqrt(reps))
    mean = float(d.mean())
    return OrderingVerdict(
        kind_small=k_small,
        kind_large=k_large,
        scaled_diff=n * mean,
        scaled_se=n * se,
        holds=bool(mean <= 3.0 * se),
    )


ORACLE_CONFIG = NuisanceConfig(
    propensity_method=PropensityMethod.ORACLE,
    outcome_method=OutcomeMethod.ORACLE,
    sd_method=SdMethod.ORACLE,
)


def run_monte_carlo(spec: DgpSpec, n: int, reps: int, seed: int,
                    nuisance_config: Optional[NuisanceConfig] = None,
                    oracle_nuisances: bool = True,
                    ci_level: float = 0.95,
                    psi_patt: Optional[McValue] = None,
                    patt_draws: int = 2_000_000,
                    tau_true: Optional[float] = None) -> McReport:
    """Seeded replication study of the estimator against all six estimands.

    Each replication draws a fresh PotentialDataset from a stream derived from
    (seed, r), computes the realized estimand values, runs the full estimation
    pipeline with oracle or fitted nuisances, and records errors, variance
    estimates and CI hits. Replications that raise are counted and reported,
    never silently dropped.
    """
    if reps < 1:
        raise ValidationError("reps must be >= 1")
    if psi_patt is None:
        psi_patt = psi_patt_true(spec, draws=patt_draws, seed=_child_seed(seed, 2 ** 31))
    config = ORACLE_CONFIG if oracle_nuisances else (nuisance_config or NuisanceConfig())

    kinds = KIND_ORDER
    errors = {k: [] for k in kinds}
    hits = {k: [] for k in kinds}
    var_estimates = {k: [] for k in kinds}
    swatt_simple, swatt_sigma, swatt_fh = [], [], []
    floored = 0
    gaps = []
    psi_hats = []
    tau_errors = [] if tau_true is not None else None
    failures = []

    for r in range(reps):
        try:
            pd = generate(spec, n, seed=_child_seed(seed, r))
            truths = true_sample_estimands(pd, psi_patt.value)
            report = estimate_all(
                pd.dataset, config,
                oracle=pd.true_nuisances if oracle_nuisances else None,
                ci_level=ci_level,
            )
        except TreatedError as exc:
            failures.append(f"rep {r}: {exc}")
            continue
        psi_hats.append(report.psi_hat)
        for k in kinds:
            inf = report.per_kind[k]
            errors[k].append(report.psi_hat - truths[k])
            hits[k].append(inf.ci_lower <= truths[k] <= inf.ci_upper)
            var_estimates[k].append(
                inf.variance if inf.variance is not None else inf.variance_used
            )
        sw = report.per_kind[EstimandKind.SWATT]
        swatt_simple.append(sw.conservative_simple)
        if sw.conservative_sigma is not None:
            swatt_sigma.append(sw.conservative_sigma)
        if sw.conservative_fh is not None:
            swatt_fh.append(sw.conservative_fh)
        if report.diagnostics.get("swatt_sigma_floored") or report.diagnostics.get("swatt_fh_floored"):
            floored += 1
        gaps.append(np.sqrt(n) * (report.psi_hat - psi_tilde(pd)))
        if tau_errors is not None:
            ds = pd.dataset
            a = ds.a.astype(float)
            psi_tau_r = float((a * ds.y).sum() / a.sum()) - tau_true
            tau_errors.append(report.psi_hat - psi_tau_r)

    ok = len(psi_hats)
    if ok == 0:
        raise ValidationError("every replication failed; nothing to aggregate")
    err_arrays = {k: np.asarray(v) for k, v in errors.items()}

    per_kind = {}
    for k in kinds:
        e = err_arrays[k]
        centered_sq = (e - e.mean()) ** 2
        v = float(e.var(ddof=1)) if ok > 1 else 0.0
        v_se = float(centered_sq.std(ddof=1) / np.sqrt(ok)) if ok > 1 else float("nan")
        per_kind[k] = McKindStats(
            empirical_var_scaled=n * v,
            empirical_var_scaled_se=n * v_se,
            mean_variance_estimate=float(np.mean(var_estimates[k])),
            coverage=float(np.mean(hits[k])),
            ci_level=ci_level,
        )

    if ok > 1:
        ordering = [
            _paired_verdict(err_arrays, EstimandKind.MATT, EstimandKind.CATT, n),
            _paired_verdict(err_arrays, EstimandKind.CATT, EstimandKind.ACTT, n),
            _paired_verdict(err_arrays, EstimandKind.ACTT, EstimandKind.PATT, n),
            _paired_verdict(err_arrays, EstimandKind.SWATT, EstimandKind.ACTT, n),
        ]
        satt_vs_patt = _paired_verdict(err_arrays, EstimandKind.SATT, EstimandKind.PATT, n)
    else:
        ordering = []
        satt_vs_patt = None

    gaps = np.asarray(gaps)
    extras = {
        "psi_patt_value": psi_patt.value,
        "psi_patt_se": psi_patt.se,
        "ordering": ordering,
        "satt_vs_patt": satt_vs_patt,
        "psi_tilde_rms_scaled_gap": float(np.sqrt(np.mean(gaps ** 2))),
        "mean_psi_hat": float(np.mean(psi_hats)),
        "sd_psi_hat": float(np.std(psi_hats, ddof=1)) if ok > 1 else 0.0,
        "mean_swatt_conservative_simple": float(np.mean(swatt_simple)),
        "mean_swatt_conservative_sigma": float(np.mean(swatt_sigma)) if swatt_sigma else None,
        "mean_swatt_conservative_fh": float(np.mean(swatt_fh)) if swatt_fh else None,
        "swatt_floored_count": floored,
    }
    if tau_errors is not None:
        te = np.asarray(tau_errors)
        extras["psi_tau_var_scaled"] = float(n * te.var(ddof=1)) if ok > 1 else 0.0

    return McReport(
        per_kind=per_kind,
        reps=reps,
        n=n,
        seed=seed,
        ci_level=ci_level,
        failed_reps=len(failures),
        failure_messages=tuple(failures[:20]),
        extras=extras,
    )
