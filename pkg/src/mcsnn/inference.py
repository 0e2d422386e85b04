"""Multi-compartment inference: free-running generation, majority decoding,
marginal log-likelihood estimation and calibration measurement."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .data import encode_targets
from .errors import ContractViolation
from .learning import softmax_importance
from .network import NetworkConfig, ParameterSet, init_compartment_states, step_network
from .rng import EVAL_STREAM, RngLike, as_streams, child_sequence


def free_run(params: ParameterSet, config: NetworkConfig,
             exogeneous: np.ndarray, k_infer: int,
             rng: RngLike) -> np.ndarray:
    """Run `k_infer` independent compartments with nothing clamped.

    `exogeneous` is (channels, T).  Returns the visible spike trains,
    shaped (k_infer, |X|, T).
    """
    exogeneous = np.asarray(exogeneous, dtype=float)
    T = exogeneous.shape[1]
    states = init_compartment_states(config, k_infer, as_streams(rng, k_infer))
    visible = np.zeros((k_infer, config.num_visible, T))
    for t in range(T):
        spikes, _ = step_network(params, states, config, exogeneous[:, t])
        visible[:, :, t] = spikes[:, :config.num_visible]
    return visible


@dataclass
class VoteRecord:
    """Majority-decoding outcome for one example."""

    per_compartment_decision: np.ndarray  # (k_infer,) class indices
    vote_counts: np.ndarray               # (num_classes,) integers
    decision: int
    confidence: float


def majority_decode(records: np.ndarray) -> VoteRecord:
    """Decode (k_infer, |X|, T) visible spike trains by plurality vote.

    Each compartment votes for its most active output neuron; the class with
    the most votes wins and its confidence is the SoftMax of the integer vote
    vector at the winning class.  Ties break toward the lowest index.
    """
    records = np.asarray(records)
    if records.ndim != 3:
        raise ContractViolation(f"expected (k_infer, classes, T) records, got {records.shape}")
    counts = records.sum(axis=2)                    # (K, classes)
    per_comp = counts.argmax(axis=1)
    votes = np.bincount(per_comp, minlength=records.shape[1])
    decision = int(votes.argmax())
    confidence = float(softmax_importance(votes.astype(float))[decision])
    return VoteRecord(per_compartment_decision=per_comp, vote_counts=votes,
                      decision=decision, confidence=confidence)


def estimate_log_likelihood(params: ParameterSet, config: NetworkConfig,
                            exogeneous: np.ndarray, x_target: np.ndarray,
                            num_realizations: int, rng: RngLike) -> float:
    """Estimate log p(x) by averaging over hidden-spike realizations.

    Runs `num_realizations` visible-clamped passes (hidden neurons sampled
    forward in time) and returns logsumexp_n(L_n) - log N, where L_n is the
    visible log-probability of realization n.  With no hidden neurons the
    value is exact and independent of N.
    """
    if num_realizations < 1:
        raise ContractViolation("need at least one realization")
    exogeneous = np.asarray(exogeneous, dtype=float)
    x_target = np.asarray(x_target, dtype=float)
    T = exogeneous.shape[1]
    if x_target.shape != (config.num_visible, T):
        raise ContractViolation(
            f"target has shape {x_target.shape}, expected ({config.num_visible}, {T})")
    states = init_compartment_states(config, num_realizations,
                                     as_streams(rng, num_realizations))
    log_p = np.zeros(num_realizations)
    for t in range(T):
        _, losses = step_network(params, states, config, exogeneous[:, t],
                                 clamp_visible=x_target[:, t])
        log_p -= losses[:, :config.num_visible].sum(axis=1)
    return float(logsumexp(log_p) - np.log(num_realizations))


@dataclass
class CalibrationReport:
    """Equal-width-bin calibration summary over (0, 1]."""

    num_bins: int
    counts: np.ndarray           # (num_bins,) examples per bin
    accuracy: np.ndarray         # (num_bins,) NaN where empty
    mean_confidence: np.ndarray  # (num_bins,) NaN where empty
    ece: float

    def to_dict(self) -> dict:
        def col(a):
            return [None if not np.isfinite(v) else float(v) for v in a]
        return {
            "num_bins": self.num_bins,
            "counts": [int(c) for c in self.counts],
            "accuracy": col(self.accuracy),
            "mean_confidence": col(self.mean_confidence),
            "ece": self.ece,
        }


def expected_calibration_error(examples: list[tuple[float, int]],
                               num_bins: int = 10) -> CalibrationReport:
    """Expected calibration error over equal-width confidence bins.

    `examples` holds (confidence, correct) pairs with confidence in (0, 1];
    bin m covers ((m-1)/M, m/M].  ECE is the count-weighted mean of
    |accuracy - mean confidence| over non-empty bins; an empty example list
    gives ECE 0.
    """
    if num_bins < 1:
        raise ContractViolation("need at least one bin")
    counts = np.zeros(num_bins, dtype=int)
    conf_sum = np.zeros(num_bins)
    correct_sum = np.zeros(num_bins)
    for confidence, correct in examples:
        if not 0.0 < confidence <= 1.0:
            raise ContractViolation(f"confidence {confidence} outside (0, 1]")
        m = min(int(np.ceil(confidence * num_bins)) - 1, num_bins - 1)
        counts[m] += 1
        conf_sum[m] += confidence
        correct_sum[m] += correct
    total = counts.sum()
    with np.errstate(invalid="ignore"):
        accuracy = np.where(counts > 0, correct_sum / np.maximum(counts, 1), np.nan)
        mean_conf = np.where(counts > 0, conf_sum / np.maximum(counts, 1), np.nan)
    if total == 0:
        ece = 0.0
    else:
        occupied = counts > 0
        ece = float(np.sum(counts[occupied] / total
                           * np.abs(accuracy[occupied] - mean_conf[occupied])))
    return CalibrationReport(num_bins=num_bins, counts=counts,
                             accuracy=accuracy, mean_confidence=mean_conf, ece=ece)


def evaluate_dataset(params: ParameterSet, config: NetworkConfig,
                     examples: list, k_infer: int, seed: int,
                     ll_realizations: int = 20, num_bins: int = 10,
                     ) -> tuple[list[dict], dict, CalibrationReport]:
    """Full evaluation pass: decode and score every example.

    `examples` are event tensors (spikes (channels, T) plus label).  Returns
    per-example records, a summary dict and the calibration report.  Example
    i uses the child streams (seed, eval, i, *) so evaluations of different
    examples stay independent and the whole pass is reproducible.
    """
    records = []
    ll_values = []
    calibration_pairs = []
    for i, example in enumerate(examples):
        exo = example.spikes.astype(float)
        T = exo.shape[1]
        run_streams = child_sequence(seed, EVAL_STREAM, i, 0)
        vote = majority_decode(free_run(params, config, exo, k_infer, run_streams))
        target = encode_targets(example.label, config.num_visible, T)
        ll_streams = child_sequence(seed, EVAL_STREAM, i, 1)
        ll = estimate_log_likelihood(params, config, exo, target,
                                     ll_realizations, ll_streams)
        correct = int(vote.decision == example.label)
        calibration_pairs.append((vote.confidence, correct))
        ll_values.append(ll)
        records.append({
            "index": i,
            "label": int(example.label),
            "decision": vote.decision,
            "votes": [int(z) for z in vote.vote_counts],
            "confidence": vote.confidence,
            "correct": correct,
            "log_likelihood": ll,
        })
    report = expected_calibration_error(calibration_pairs, num_bins)
    summary = {
        "num_examples": len(records),
        "accuracy": float(np.mean([r["correct"] for r in records])) if records else 0.0,
        "ece": report.ece,
        "mean_log_likelihood": float(np.mean(ll_values)) if ll_values else 0.0,
        "calibration": report.to_dict(),
    }
    return records, summary, report
