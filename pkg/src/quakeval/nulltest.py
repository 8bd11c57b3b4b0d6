"""Success counting and chance-significance for prediction sets.

The null model: the observed background events (those at or above a
prediction's magnitude threshold) are shuffled uniformly in time over
the record and placed in space according to a fitted density.  Under
that null each prediction j succeeds independently with

    p_j = 1 - (1 - s_j * d_j / T) ** N

where s_j is the density mass of its region, d_j its window duration,
T the record span and N the background count.  The number of
successful predictions X is then Poisson-binomial.  Significance of an
observed count is available two ways:

* a normal approximation with continuity correction,
  z = (N_M - mu - 1/2) / sigma, significance = 1 - Phi(z);
* the exact tail P(X >= N_M) from the Poisson-binomial pmf.

``min_consistent_c`` inverts the approximation to the smallest
probability-enhancement factor c (p_j scaled to c * p_j) that leaves
the observed count unsurprising at level alpha; it is a lower
confidence bound on the enhancement the predictions achieve, to set
against the point estimate c_hat = N_M / mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .catalog import Catalog, Prediction, validate_predictions_against
from .errors import ValidationError
from .spatial import SpatialDensity


def chance_probability(spatial_mass: float, duration: float, span: float,
                       n_events: int) -> float:
    """P(at least one of n uniform events lands in the window) under the null.

    ``spatial_mass`` is the density mass of the prediction's region,
    ``duration`` the window length, ``span`` the record length.
    """
    if span <= 0:
        raise ValidationError("record span must be positive")
    if not 0.0 <= spatial_mass <= 1.0 + 1e-9:
        raise ValidationError(f"spatial mass {spatial_mass:g} is outside [0, 1]")
    if duration < 0:
        raise ValidationError("window duration must be >= 0")
    if duration > span * (1 + 1e-12):
        raise ValidationError(
            f"window duration {duration:g} exceeds the record span {span:g}")
    if n_events < 1:
        raise ValidationError("need at least one background event")
    q = min(spatial_mass, 1.0) * min(duration / span, 1.0)
    if q >= 1.0:
        return 1.0
    if q <= 0.0:
        return 0.0
    return float(-np.expm1(n_events * np.log1p(-q)))


def prediction_chance_prob(prediction: Prediction, density: SpatialDensity,
                           catalog: Catalog) -> float:
    """Chance probability of one prediction against a catalog's background."""
    n_bg = catalog.count_at_or_above(prediction.min_magnitude)
    if n_bg == 0:
        raise ValidationError(
            f"no catalog events at or above magnitude {prediction.min_magnitude:g}; "
            "the null model is undefined")
    s = density.integrate(prediction.region)
    return chance_probability(s, prediction.duration, catalog.span, n_bg)


@dataclass(frozen=True)
class ChanceProbabilities:
    """Per-prediction null success probabilities and their aggregates."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or len(p) == 0:
            raise ValidationError("need a non-empty 1-D probability array")
        if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
            raise ValidationError("probabilities must lie in [0, 1]")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @property
    def m(self) -> int:
        return len(self.probabilities)

    @property
    def mu(self) -> float:
        return float(self.probabilities.sum())

    @property
    def sigma2(self) -> float:
        return float((self.probabilities * (1.0 - self.probabilities)).sum())

    @property
    def sigma(self) -> float:
        return self.sigma2 ** 0.5


def chance_probabilities(predictions: list[Prediction], density: SpatialDensity,
                         catalog: Catalog) -> ChanceProbabilities:
    if not predictions:
        raise ValidationError("need at least one prediction")
    return ChanceProbabilities(np.array(
        [prediction_chance_prob(p, density, catalog) for p in predictions]))


def prediction_hits(prediction: Prediction, catalog: Catalog) -> bool:
    """True when a qualifying event falls in the prediction's window and region."""
    times = catalog.times
    lo = int(np.searchsorted(times, prediction.window_start, side="left"))
    hi = int(np.searchsorted(times, prediction.window_end, side="right"))
    if hi <= lo:
        return False
    mags = catalog.magnitudes[lo:hi]
    ok = mags >= prediction.min_magnitude
    if not ok.any():
        return False
    xs = catalog.xs[lo:hi][ok]
    ys = catalog.ys[lo:hi][ok]
    return bool(np.any(prediction.region.contains(xs, ys)))


def count_successes(catalog: Catalog, predictions: list[Prediction]) -> int:
    return sum(prediction_hits(p, catalog) for p in predictions)


def poisson_binomial_pmf(probs) -> np.ndarray:
    """Exact pmf of a sum of independent Bernoulli trials, length m + 1."""
    p = np.asarray(probs, dtype=float).ravel()
    if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
        raise ValidationError("probabilities must lie in [0, 1]")
    pmf = np.zeros(len(p) + 1)
    pmf[0] = 1.0
    for pj in p:
        pmf[1:] = pmf[1:] * (1.0 - pj) + pmf[:-1] * pj
        pmf[0] *= 1.0 - pj
    return pmf


def exact_poisson_binomial(probs, k: int) -> float:
    """Exact tail P(X >= k) for the Poisson-binomial count."""
    pmf = poisson_binomial_pmf(probs)
    if k <= 0:
        return 1.0
    if k >= len(pmf):
        return 0.0
    return float(pmf[k:].sum())


def _aggregates(probs) -> tuple[np.ndarray, float, float]:
    cp = probs if isinstance(probs, ChanceProbabilities) \
        else ChanceProbabilities(np.asarray(probs, dtype=float))
    return cp.probabilities, cp.mu, cp.sigma


def clt_significance(probs, n_observed: int) -> tuple[float, float]:
    """Normal-approximation (z, significance) for an observed success count.

    significance = P(X >= n_observed) under the null, with continuity
    correction; small values mean the count is too high to be chance.
    """
    _, mu, sigma = _aggregates(probs)
    if n_observed < 0:
        raise ValidationError("observed count must be >= 0")
    if sigma <= 0:
        raise ValidationError(
            "null variance is zero (all probabilities are 0 or 1); "
            "the normal approximation is undefined")
    z = (n_observed - mu - 0.5) / sigma
    return z, float(ndtr(-z))


def enhancement_estimate(probs, n_observed: int) -> float:
    """Point estimate c_hat = observed successes over expected successes."""
    _, mu, _ = _aggregates(probs)
    if mu <= 0:
        raise ValidationError("expected success count is zero")
    return n_observed / mu


@dataclass(frozen=True)
class CMin:
    """Smallest enhancement factor consistent with the observed count.

    ``capped`` flags the case where even the largest admissible factor
    (the one driving some c * p_j to 1) stays significant at level
    alpha; ``value`` is then that cap, not a root.
    """

    value: float
    capped: bool
    residual: float
    alpha: float


def min_consistent_c(probs, n_observed: int, alpha: float = 0.05) -> CMin:
    """Solve significance(c) = alpha for the scaled null p_j -> c * p_j.

    The scaled null has mean c * mu and variance sum c p_j (1 - c p_j);
    significance(c) rises monotonically with c, so the root below the
    point estimate c_hat is the smallest enhancement the data cannot
    reject at level alpha.
    """
    p, mu, _ = _aggregates(probs)
    if not 0.0 < alpha < 0.5:
        raise ValidationError("alpha must lie in (0, 0.5)")
    if n_observed < 1:
        raise ValidationError("c_min needs at least one observed success")
    if mu <= 0:
        raise ValidationError("expected success count is zero")

    def significance(c: float) -> float:
        scaled = c * p
        var = float((scaled * (1.0 - scaled)).sum())
        if var <= 0:
            return 1.0 if n_observed - c * mu - 0.5 <= 0 else 0.0
        return float(ndtr((c * mu + 0.5 - n_observed) / var ** 0.5))

    c_hat = n_observed / mu
    c_cap = min(c_hat * 1.05, 1.0 / float(p.max()))

    def g(c: float) -> float:
        return significance(c) - alpha

    # coarse scan for a sign change, then polish
    grid = np.linspace(c_cap / 200.0, c_cap, 200)
    vals = np.array([g(c) for c in grid])
    idx = np.flatnonzero(vals >= 0.0)
    if len(idx) == 0:
        return CMin(c_cap, True, g(c_cap), alpha)
    i = int(idx[0])
    lo = grid[i - 1] if i > 0 else c_cap * 1e-12
    root = float(brentq(g, lo, grid[i], xtol=1e-13, rtol=8.9e-16))
    return CMin(root, False, g(root), alpha)


def overlap_fraction(predictions: list[Prediction]) -> float:
    """Fraction of prediction pairs overlapping in both time and space.

    Spatial overlap is judged on bounding boxes, so this errs on the
    large side; it gauges how far the independence assumption behind
    the Poisson-binomial null is stretched.
    """
    m = len(predictions)
    if m < 2:
        return 0.0
    starts = np.array([p.window_start for p in predictions])
    ends = np.array([p.window_end for p in predictions])
    boxes = np.array([p.region.bounding_box for p in predictions])
    pairs = 0
    for i in range(m - 1):
        t_olap = (starts[i + 1:] < ends[i]) & (starts[i] < ends[i + 1:])
        b = boxes[i + 1:]
        s_olap = ((boxes[i, 0] <= b[:, 1]) & (b[:, 0] <= boxes[i, 1])
                  & (boxes[i, 2] <= b[:, 3]) & (b[:, 2] <= boxes[i, 3]))
        pairs += int(np.count_nonzero(t_olap & s_olap))
    return pairs / (m * (m - 1) / 2)


@dataclass(frozen=True)
class SignificanceReport:
    """Full evaluation of a prediction set against the chance null."""

    n_predictions: int
    n_observed: int
    mu: float
    sigma: float
    z: float
    significance: float
    exact_significance: float | None
    c_hat: float
    c_min: float | None
    c_min_capped: bool
    alpha: float
    overlap_fraction: float

    def to_dict(self) -> dict:
        return {
            "n_predictions": self.n_predictions,
            "n_observed": self.n_observed,
            "mu": self.mu,
            "sigma": self.sigma,
            "z": self.z,
            "significance": self.significance,
            "exact_significance": self.exact_significance,
            "c_hat": self.c_hat,
            "c_min": self.c_min,
            "c_min_capped": self.c_min_capped,
            "alpha": self.alpha,
            "overlap_fraction": self.overlap_fraction,
        }


def significance_report(catalog: Catalog, predictions: list[Prediction],
                        density: SpatialDensity, alpha: float = 0.05,
                        exact: bool = False) -> SignificanceReport:
    """Evaluate a prediction set end to end.

    Validates the predictions against the catalog, computes the chance
    probabilities under ``density``, counts successes, and assembles
    significance, enhancement and the alpha-level lower bound c_min
    (omitted when nothing succeeded).
    """
    validate_predictions_against(predictions, catalog)
    cp = chance_probabilities(predictions, density, catalog)
    n_obs = count_successes(catalog, predictions)
    z, sig = clt_significance(cp, n_obs)
    exact_sig = exact_poisson_binomial(cp.probabilities, n_obs) if exact else None
    c_hat = enhancement_estimate(cp, n_obs)
    if n_obs >= 1:
        cmin = min_consistent_c(cp, n_obs, alpha)
        c_min_value, c_min_capped = cmin.value, cmin.capped
    else:
        c_min_value, c_min_capped = None, False
    return SignificanceReport(
        n_predictions=cp.m,
        n_observed=n_obs,
        mu=cp.mu,
        sigma=cp.sigma,
        z=z,
        significance=sig,
        exact_significance=exact_sig,
        c_hat=c_hat,
        c_min=c_min_value,
        c_min_capped=c_min_capped,
        alpha=alpha,
        overlap_fraction=overlap_fraction(predictions),
    )
