"""End-to-end evaluation: fit the operating point, score every method,
build rejection curves and prediction rejection ratios.

The operating threshold is fitted on the test split's non-mated acceptance
scores at the requested FPIR, converted to an equivalent gallery
concentration, and then every probe is decided once under that model. All
methods therefore start from the same decisions and the same base metrics;
they differ only in how they order probes for rejection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import baselines, holistic, metrics
from .gallery import GalleryModel, decide, galue_score, kappa_for_threshold, posterior
from .holistic import (CalibrationStats, MlpCalibrator, ProbabilisticEmbedding,
                       TrainingConfig, fit_mlp, fit_stats, kl_components, normalize)
from .metrics import EvalReport, MethodReport, ProbeOutcome, UndefinedPrrError
from .protocol import OsrProtocol


class MissingValidationError(ValueError):
    """A validation-fitted method was requested but the validation split is empty."""


class MissingQualityError(ValueError):
    """A method needs per-probe quality fields the bundle does not provide."""


@dataclass
class _ScoredProbe:
    probe: object
    s_score: float
    post: object
    decision: object
    components: object = None


def _require(condition: bool, exc_type, message: str):
    if not condition:
        raise exc_type(message)


def _split(probes, split: str):
    return [p for p in probes if p.split == split]


def _probe_components(model: GalleryModel, probe, temperature: float):
    _require(probe.kappa is not None, MissingQualityError,
             f"probe {probe.probe_id} has no kappa; HolUE methods need it")
    emb = ProbabilisticEmbedding(mean=probe.mean, kappa=probe.kappa)
    return kl_components(model, emb, temperature=temperature)


def run_evaluation(
    protocol: OsrProtocol,
    target_fpir: float,
    methods=baselines.METHOD_NAMES,
    temperature: float = holistic.DEFAULT_TEMPERATURE,
    beta: float = 0.5,
    max_reject_fraction: float = 0.5,
    n_points: int = 101,
    n_shuffles: int = 100,
    seed: int = 0,
    stats_split: str = "validation",
    mlp_config: TrainingConfig = TrainingConfig(),
) -> EvalReport:
    """Evaluate every requested method on the test split of a protocol."""
    methods = tuple(methods)
    for m in methods:
        if m not in baselines.METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}; available: {baselines.METHOD_NAMES}")
    if not 0.0 < target_fpir < 1.0:
        raise ValueError(f"target_fpir must be in (0, 1), got {target_fpir!r}")
    if stats_split not in ("validation", "test"):
        raise ValueError(f"stats_split must be validation or test, got {stats_split!r}")

    gal = protocol.gallery
    mated_test = _split(protocol.mated_probes, "test")
    nonmated_test = _split(protocol.nonmated_probes, "test")
    _require(len(nonmated_test) > 0, ValueError, "test split has no non-mated probes")
    _require(len(mated_test) > 0, ValueError, "test split has no mated probes")

    needs_components = "HolUE" in methods or "HolUE-sum" in methods
    validation = _split(protocol.mated_probes, "validation") + _split(protocol.nonmated_probes, "validation")
    if needs_components and stats_split == "validation":
        _require(len(validation) >= 2, MissingValidationError,
                 "validation split is empty but a validation-fitted method was requested")

    # operating point: threshold on test non-mated acceptance scores, then the
    # concentration whose posterior rule matches that threshold
    nonmated_scores = [baselines.acc_score(gal, p.mean) for p in nonmated_test]
    tau = metrics.threshold_for_fpir(nonmated_scores, target_fpir)
    kappa = kappa_for_threshold(tau, beta, gal.k, gal.d)
    model = GalleryModel(gallery=gal, kappa=kappa, beta=beta)

    def score_probe(probe) -> _ScoredProbe:
        s = baselines.acc_score(gal, probe.mean)
        post = posterior(model, probe.mean)
        comp = _probe_components(model, probe, temperature) if needs_components else None
        return _ScoredProbe(probe=probe, s_score=s, post=post,
                            decision=decide(post, gal), components=comp)

    test_scored = [score_probe(p) for p in mated_test + nonmated_test]

    def _outcome(sp: _ScoredProbe) -> ProbeOutcome:
        return ProbeOutcome(probe_id=sp.probe.probe_id, true_class=sp.probe.class_id,
                            decision=sp.decision, scores={})

    stats: CalibrationStats | None = None
    calibrator: MlpCalibrator | None = None
    if needs_components:
        if stats_split == "validation":
            val_scored = [score_probe(p) for p in validation]
            stats_source = val_scored
        else:
            val_scored = []
            stats_source = test_scored
        stats = fit_stats([sp.components for sp in stats_source])
        if "HolUE" in methods:
            _require(len(val_scored) >= 2, MissingValidationError,
                     "validation split is empty but HolUE needs labeled validation probes")
            features = np.array([normalize(sp.components, stats) for sp in val_scored])
            labels = np.array([0.0 if _outcome(sp).error else 1.0 for sp in val_scored])
            calibrator = fit_mlp(features, labels, config=mlp_config, seed=seed, stats=stats)

    def method_score(name: str, sp: _ScoredProbe) -> float:
        probe = sp.probe
        if name == "AccScr":
            return baselines.q_accscr(sp.s_score, tau)
        if name == "SCF":
            _require(probe.kappa is not None, MissingQualityError,
                     f"probe {probe.probe_id} has no kappa for SCF")
            return baselines.q_scf(probe.kappa)
        if name == "PFE":
            _require(probe.pfe_sigma2 is not None, MissingQualityError,
                     f"probe {probe.probe_id} has no pfe_sigma2 for PFE")
            return baselines.q_pfe(probe.pfe_sigma2)
        if name == "SF":
            _require(probe.sf_scale is not None, MissingQualityError,
                     f"probe {probe.probe_id} has no sf_scale for SF")
            return baselines.q_sf(probe.sf_scale)
        if name == "GalUE":
            return galue_score(sp.post)
        kl1n, kl2n = normalize(sp.components, stats)
        if name == "HolUE-sum":
            return holistic.holue_sum(kl1n, kl2n)
        return holistic.mlp_predict(calibrator, kl1n, kl2n)

    outcomes = []
    for sp in test_scored:
        scores = {name: float(method_score(name, sp)) for name in methods}
        outcomes.append(ProbeOutcome(probe_id=sp.probe.probe_id, true_class=sp.probe.class_id,
                                     decision=sp.decision, scores=scores))

    tp, fn, fp = metrics.confusion_counts(outcomes)
    fpir, fnir, f1 = metrics.osr_metrics(tp, fn, fp, len(nonmated_test))

    reference_curves = {}
    reference_auc = {}
    for metric in metrics.METRIC_NAMES:
        oracle_curve, random_curve = metrics.reference_curves(
            outcomes, metric=metric, max_fraction=max_reject_fraction,
            n_points=n_points, n_shuffles=n_shuffles, seed=seed)
        reference_curves[metric] = {"oracle": oracle_curve, "random": random_curve}
        reference_auc[metric] = {"oracle": metrics.curve_auc(oracle_curve),
                                 "random": metrics.curve_auc(random_curve)}

    method_reports = {}
    for name in methods:
        curves = {}
        auc = {}
        for metric in metrics.METRIC_NAMES:
            curve = metrics.rejection_curve(outcomes, name, metric=metric,
                                            max_fraction=max_reject_fraction, n_points=n_points)
            curves[metric] = curve
            auc[metric] = metrics.curve_auc(curve)
        try:
            ratio = metrics.prr(curves["F1"], reference_curves["F1"]["random"],
                                reference_curves["F1"]["oracle"])
        except UndefinedPrrError:
            ratio = None
        method_reports[name] = MethodReport(curves=curves, auc=auc, prr=ratio)

    return EvalReport(
        target_fpir=float(target_fpir),
        tau=float(tau),
        kappa=float(kappa),
        beta=float(beta),
        temperature=float(temperature),
        base={"fpir": fpir, "fnir": fnir, "f1": f1},
        counts={
            "gallery": gal.k,
            "mated_test": len(mated_test),
            "nonmated_test": len(nonmated_test),
            "validation": len(validation),
            "tp": tp, "fn": fn, "fp": fp,
        },
        methods=method_reports,
        reference_curves=reference_curves,
        reference_auc=reference_auc,
        seeds={"shuffle_seed": int(seed), "mlp_seed": int(seed), **{
            k: v for k, v in protocol.meta.items()
        }},
    )
