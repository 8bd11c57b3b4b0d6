"""Delay-time statistics between alarm signals and the next event.

Model: N events fall independently and uniformly on a record [0, T].
A signal issued at time t waits tau for the next event at or after t,
with tau = T - t if no event follows.  The waiting time then has

    tail      P(tau > u | t) = (1 - u/T)**(N-1)         for u < T - t
    mean      E[tau | t]     = (T/N) * (1 - (t/T)**N)
    variance  closed form below, vanishing at t = T

A batch of M signals is scored by summing observed delays and
standardizing against the summed conditional moments:

    z = (sum tau_hat_j - sum E[tau|t_j]) / sqrt(sum Var[tau|t_j])

Signals that systematically precede events give z well below zero
(precursor behaviour); signals that trail events give z above zero.
Both one-sided flags trip at a configurable threshold (default 2.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .catalog import Catalog, Prediction
from .errors import ValidationError


def _check_law_args(t, n: int, span: float):
    if span <= 0:
        raise ValidationError("record span must be positive")
    if n < 2:
        raise ValidationError("the delay law needs at least 2 events")
    t = np.asarray(t, dtype=float)
    if not np.isfinite(t).all():
        raise ValidationError("signal times must be finite")
    if (t < 0).any() or (t > span * (1 + 1e-12)).any():
        raise ValidationError("signal times must lie in [0, span]")
    return np.minimum(t, span)


def tau_tail(t, u, n: int, span: float):
    """P(tau > u | signal at t).  Vectorized over u (and t if same shape)."""
    t = _check_law_args(t, n, span)
    u = np.asarray(u, dtype=float)
    if (u < 0).any():
        raise ValidationError("delays must be >= 0")
    tail = np.where(u < span - t, (1.0 - np.minimum(u, span) / span) ** (n - 1), 0.0)
    return tail if tail.ndim else float(tail)


def tau_mean(t, n: int, span: float):
    """E[tau | signal at t] under the uniform-record law."""
    t = _check_law_args(t, n, span)
    a = t / span
    out = (span / n) * (1.0 - a ** n)
    return out if out.ndim else float(out)


def tau_var(t, n: int, span: float):
    """Var[tau | signal at t] under the uniform-record law.

    At t = 0 this is T**2 (N-1) / (N**2 (N+1)); it decreases to zero at
    t = T.  (For N = 2, t = 0 it reduces to T**2 / 12.)
    """
    t = _check_law_args(t, n, span)
    a = t / span
    an = a ** n
    out = span ** 2 * ((n - 1.0) / (n * n * (n + 1.0))
                       - (2.0 * (n - 1.0) / (n * n)) * an
                       + (2.0 / (n + 1.0)) * an * a
                       - (1.0 / (n * n)) * an * an)
    # the analytic zero at t = span would otherwise carry rounding residue
    out = np.where(a >= 1.0, 0.0, np.maximum(out, 0.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DelayObservation:
    """One signal: issue time t (record-relative) and observed delay."""

    t: float
    tau_hat: float
    censored: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.t) and math.isfinite(self.tau_hat)):
            raise ValidationError("delay observations must be finite")
        if self.t < 0 or self.tau_hat < 0:
            raise ValidationError("signal time and delay must be >= 0")


@dataclass(frozen=True)
class DelayData:
    """Delays extracted from a prediction set against a catalog.

    Times are measured from ``origin`` (the earliest issue time);
    ``span`` runs to the last catalog event and ``n_events`` counts the
    events inside that window.
    """

    observations: tuple[DelayObservation, ...]
    n_events: int
    span: float
    origin: float


def extract_delays(predictions: Sequence[Prediction], catalog: Catalog) -> DelayData:
    """Measure each prediction's waiting time to the next catalog event.

    The clock starts at the earliest issue time and the record is taken
    to end at the last event, so every in-window signal has a next
    event; a signal issued after the last event is clamped to the end
    of the record and contributes a censored zero delay.
    """
    if not predictions:
        raise ValidationError("need at least one prediction")
    if len(catalog) == 0:
        raise ValidationError("catalog is empty")
    origin = min(p.issue_time for p in predictions)
    times = catalog.times - origin
    keep = times >= 0.0
    if not keep.any():
        raise ValidationError("no catalog events at or after the first signal")
    times = times[keep]
    span = float(times[-1])
    if span <= 0:
        raise ValidationError(
            "all usable events coincide with the first signal; span is zero")
    n_events = len(times)
    obs = []
    for p in predictions:
        t = p.issue_time - origin
        if t >= span:
            obs.append(DelayObservation(span, 0.0, censored=True))
            continue
        idx = int(np.searchsorted(times, t, side="left"))
        obs.append(DelayObservation(t, float(times[idx] - t), censored=False))
    return DelayData(tuple(obs), n_events, span, origin)


@dataclass(frozen=True)
class PrecursorResult:
    """Standardized delay-sum score for a batch of signals."""

    y_obs: float
    e_y: float
    var_y: float
    z: float
    precursor_flag: bool
    postcursor_flag: bool
    m: int
    n_events: int
    span: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n_events": self.n_events,
            "span": self.span,
            "y_obs": self.y_obs,
            "e_y": self.e_y,
            "var_y": self.var_y,
            "z": self.z,
            "threshold": self.threshold,
            "precursor_flag": self.precursor_flag,
            "postcursor_flag": self.postcursor_flag,
        }


def precursor_test(observations: Sequence[DelayObservation], n_events: int,
                   span: float, threshold: float = 2.5) -> PrecursorResult:
    """Compare summed delays against the uniform-record expectation.

    Args:
        observations: the signal batch (at least one).
        n_events: events on the record, at least 2.
        span: record length T.
        threshold: |z| level at which the one-sided flags trip.

    Raises:
        ValidationError: bad inputs, or all signals at t = span (the
            delay variance is then zero and z is undefined).
    """
    if len(observations) < 1:
        raise ValidationError("need at least one delay observation")
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    t = np.array([o.t for o in observations])
    tau = np.array([o.tau_hat for o in observations])
    means = tau_mean(t, n_events, span)
    variances = tau_var(t, n_events, span)
    e_y = float(np.sum(means))
    var_y = float(np.sum(variances))
    if var_y <= 0:
        raise ValidationError(
            "total delay variance is zero (every signal sits at the end of "
            "the record); the score is undefined")
    y_obs = float(np.sum(tau))
    z = (y_obs - e_y) / math.sqrt(var_y)
    return PrecursorResult(
        y_obs=y_obs, e_y=e_y, var_y=var_y, z=z,
        precursor_flag=z <= -threshold,
        postcursor_flag=z >= threshold,
        m=len(observations), n_events=n_events, span=span,
        threshold=threshold,
    )
