"""Open-set identification metrics and risk-controlled rejection curves.

A mated probe counts as TP only when it is accepted with the correct class;
everything else mated is FN (misidentifications included). A non-mated probe
counts as FP when accepted. Rejection curves drop the lowest-confidence
fraction of probes at a fixed operating threshold and re-evaluate the metric
on what remains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gallery import Decision

METRIC_NAMES = ("F1", "FPIR", "FNIR")


class UndefinedPrrError(ValueError):
    """Oracle and random references coincide, so the ratio is undefined."""


class CurveTruncationError(ValueError):
    """A requested rejection fraction leaves no probes to evaluate."""


@dataclass(frozen=True)
class ProbeOutcome:
    """One scored probe: ground truth, fixed decision, per-method confidences."""

    probe_id: str
    true_class: str | None  # None marks a non-mated probe
    decision: Decision
    scores: dict

    @property
    def mated(self) -> bool:
        return self.true_class is not None

    @property
    def error(self) -> bool:
        if self.mated:
            return not (self.decision.accepted and self.decision.class_id == self.true_class)
        return self.decision.accepted


def confusion_counts(outcomes) -> tuple[int, int, int]:
    """(TP, FN, FP) over a collection of probe outcomes."""
    tp = fn = fp = 0
    for out in outcomes:
        if out.mated:
            if out.decision.accepted and out.decision.class_id == out.true_class:
                tp += 1
            else:
                fn += 1
        elif out.decision.accepted:
            fp += 1
    return tp, fn, fp


def osr_metrics(tp: int, fn: int, fp: int, n_nonmated: int) -> tuple[float, float, float]:
    """(FPIR, FNIR, F1); degenerate denominators yield 0 by convention."""
    if min(tp, fn, fp, n_nonmated) < 0:
        raise ValueError("counts must be non-negative")
    if fp > n_nonmated:
        raise ValueError("more false positives than non-mated probes")
    fpir = fp / n_nonmated if n_nonmated > 0 else 0.0
    fnir = fn / (fn + tp) if fn + tp > 0 else 0.0
    if tp == 0:
        f1 = 0.0
    else:
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        f1 = 2.0 * precision * recall / (precision + recall)
    return float(fpir), float(fnir), float(f1)


def threshold_for_fpir(nonmated_scores, target_fpir: float) -> float:
    """Operating threshold hitting target FPIR up to floor granularity.

    With k = floor(target * N) the threshold is the midpoint between the k-th
    and (k+1)-th largest non-mated scores, so exactly k scores land at or
    above it. target 0 gives a value strictly above the maximum; k == N gives
    a value strictly below the minimum.
    """
    scores = np.sort(np.asarray(nonmated_scores, dtype=np.float64))[::-1]
    n = scores.shape[0]
    if n < 1:
        raise ValueError("need at least one non-mated score")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    if not 0.0 <= target_fpir <= 1.0:
        raise ValueError(f"target FPIR must be in [0, 1], got {target_fpir!r}")
    k = math.floor(target_fpir * n)
    if k <= 0:
        return float(np.nextafter(scores[0], np.inf))
    if k >= n:
        return float(np.nextafter(scores[-1], -np.inf))
    return float(0.5 * (scores[k - 1] + scores[k]))


@dataclass(frozen=True)
class RejectionCurve:
    """Metric values on a uniform grid of rejected fractions."""

    fractions: np.ndarray
    values: np.ndarray
    metric: str

    def __post_init__(self):
        object.__setattr__(self, "fractions", np.asarray(self.fractions, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.fractions.shape != self.values.shape or self.fractions.ndim != 1:
            raise ValueError("fractions and values must be 1-d arrays of equal length")
        if self.metric not in METRIC_NAMES:
            raise ValueError(f"unknown metric {self.metric!r}")


def _metric_from_counts(metric: str, tp: int, fn: int, fp: int, n_nonmated: int) -> float:
    fpir, fnir, f1 = osr_metrics(tp, fn, fp, n_nonmated)
    return {"FPIR": fpir, "FNIR": fnir, "F1": f1}[metric]


def _curve_from_order(outcomes, order, metric: str, max_fraction: float, n_points: int) -> RejectionCurve:
    """Curve for a fixed removal order (list of indices, removed first to last)."""
    n = len(outcomes)
    # prefix[j] = counts removed after dropping the first j probes in order
    tp_cum = np.zeros(n + 1, dtype=np.int64)
    fn_cum = np.zeros(n + 1, dtype=np.int64)
    fp_cum = np.zeros(n + 1, dtype=np.int64)
    nm_cum = np.zeros(n + 1, dtype=np.int64)
    for j, idx in enumerate(order):
        out = outcomes[idx]
        is_tp = out.mated and out.decision.accepted and out.decision.class_id == out.true_class
        is_fn = out.mated and not is_tp
        is_fp = (not out.mated) and out.decision.accepted
        tp_cum[j + 1] = tp_cum[j] + is_tp
        fn_cum[j + 1] = fn_cum[j] + is_fn
        fp_cum[j + 1] = fp_cum[j] + is_fp
        nm_cum[j + 1] = nm_cum[j] + (not out.mated)
    tp_tot, fn_tot, fp_tot, nm_tot = tp_cum[n], fn_cum[n], fp_cum[n], nm_cum[n]

    fractions = np.linspace(0.0, max_fraction, n_points)
    values = np.empty(n_points)
    for i, r in enumerate(fractions):
        drop = math.floor(r * n)
        if drop >= n:
            raise CurveTruncationError(f"fraction {r} removes every probe")
        values[i] = _metric_from_counts(
            metric,
            int(tp_tot - tp_cum[drop]),
            int(fn_tot - fn_cum[drop]),
            int(fp_tot - fp_cum[drop]),
            int(nm_tot - nm_cum[drop]),
        )
    return RejectionCurve(fractions=fractions, values=values, metric=metric)


def _validate_curve_args(outcomes, metric: str, max_fraction: float, n_points: int):
    if len(outcomes) < 1:
        raise ValueError("need at least one probe outcome")
    if metric not in METRIC_NAMES:
        raise ValueError(f"unknown metric {metric!r}")
    if not 0.0 < max_fraction <= 1.0:
        raise ValueError(f"max_fraction must be in (0, 1], got {max_fraction!r}")
    if n_points < 2:
        raise ValueError(f"need at least 2 grid points, got {n_points!r}")


def rejection_curve(outcomes, method: str, metric: str = "F1",
                    max_fraction: float = 0.5, n_points: int = 101) -> RejectionCurve:
    """Drop the lowest-score probes first; decisions stay fixed.

    Probes are removed in ascending (score, probe_id) order; at fraction r the
    floor(r*N) lowest are gone and the metric is recomputed on the rest.
    """
    outcomes = list(outcomes)
    _validate_curve_args(outcomes, metric, max_fraction, n_points)
    for out in outcomes:
        if method not in out.scores:
            raise ValueError(f"probe {out.probe_id} has no score for method {method!r}")
    order = sorted(range(len(outcomes)),
                   key=lambda i: (outcomes[i].scores[method], outcomes[i].probe_id))
    return _curve_from_order(outcomes, order, metric, max_fraction, n_points)


def reference_curves(outcomes, metric: str = "F1", max_fraction: float = 0.5,
                     n_points: int = 101, n_shuffles: int = 100,
                     seed: int = 0) -> tuple[RejectionCurve, RejectionCurve]:
    """(oracle, random) reference curves on the same grid.

    The oracle removes erroneous probes first (ties by probe_id); the random
    reference averages the curve over seeded shuffles of the removal order.
    """
    outcomes = list(outcomes)
    _validate_curve_args(outcomes, metric, max_fraction, n_points)
    if n_shuffles < 1:
        raise ValueError("need at least one shuffle")
    oracle_order = sorted(range(len(outcomes)),
                          key=lambda i: (not outcomes[i].error, outcomes[i].probe_id))
    oracle = _curve_from_order(outcomes, oracle_order, metric, max_fraction, n_points)

    total = np.zeros(n_points)
    for s in range(n_shuffles):
        rng = np.random.default_rng([int(seed), s])
        order = rng.permutation(len(outcomes))
        total += _curve_from_order(outcomes, order, metric, max_fraction, n_points).values
    random_curve = RejectionCurve(fractions=oracle.fractions, values=total / n_shuffles, metric=metric)
    return oracle, random_curve


def curve_auc(curve: RejectionCurve) -> float:
    """Trapezoidal area under a rejection curve."""
    return float(np.trapezoid(curve.values, curve.fractions))


def prr(curve: RejectionCurve, random_curve: RejectionCurve, oracle_curve: RejectionCurve) -> float:
    """Prediction rejection ratio: 1 matches the oracle, 0 matches random."""
    for other in (random_curve, oracle_curve):
        if other.metric != curve.metric or not np.array_equal(other.fractions, curve.fractions):
            raise ValueError("curves must share the same metric and fraction grid")
    auc = curve_auc(curve)
    auc_rand = curve_auc(random_curve)
    auc_oracle = curve_auc(oracle_curve)
    denom = auc_oracle - auc_rand
    if abs(denom) <= 1e-12 * max(1.0, abs(auc_oracle)):
        raise UndefinedPrrError("oracle and random references coincide; ratio undefined")
    return (auc - auc_rand) / denom


@dataclass
class MethodReport:
    """Per-method rejection curves, their areas, and the headline ratio."""

    curves: dict
    auc: dict
    prr: float | None


@dataclass
class EvalReport:
    """Everything produced by one evaluation at one target FPIR."""

    target_fpir: float
    tau: float
    kappa: float
    beta: float
    temperature: float
    base: dict
    counts: dict
    methods: dict = field(default_factory=dict)
    reference_curves: dict = field(default_factory=dict)
    reference_auc: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
