"""Importance-weighted multi-compartment online learner.

Each training step: every compartment reports its visible-neuron losses to a
central accumulator, which maintains one discounted log-probability score per
compartment, turns the scores into normalized importance weights by SoftMax,
and broadcasts the weights back.  Every parameter keeps one eligibility trace
per compartment (a discounted sum of post-synaptic error times pre-synaptic
trace) and moves along the importance-weighted sum of those traces.  The
central accumulator is in-process; explicit counters record how many real
numbers the collect and broadcast phases would move per step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, TrainingDiverged
from .network import (CompartmentState, NetworkConfig, ParameterSet, sigmoid,
                      step_network)


def temporal_average(prev: float, f_t: float, c: float) -> float:
    """One step of the discounted accumulator <f>_c = c * <f>_prev + f_t."""
    return c * prev + f_t


def softmax_importance(v: np.ndarray) -> np.ndarray:
    """SoftMax of the per-compartment scores, stabilized by the max shift."""
    v = np.asarray(v, dtype=float)
    e = np.exp(v - v.max())
    return e / e.sum()


@dataclass
class LearnerState:
    """Per-run learner state: score accumulators, eligibility traces,
    current importance weights and communication-load counters."""

    log_weights: np.ndarray        # (K,)
    eligibility_synaptic: np.ndarray   # (K, neurons, channels, num_basis)
    eligibility_self: np.ndarray       # (K, neurons)
    eligibility_bias: np.ndarray       # (K, neurons)
    importance: np.ndarray         # (K,), nonnegative, sums to 1
    comm_unicast_total: int = 0    # reals sent neurons -> central accumulator
    comm_broadcast_total: int = 0  # reals sent central accumulator -> neurons

    @property
    def num_compartments(self) -> int:
        return self.log_weights.shape[0]

    def reset_example(self) -> None:
        """Zero the accumulators at an example boundary; communication
        counters keep accumulating across the whole run."""
        self.log_weights[:] = 0.0
        self.eligibility_synaptic[:] = 0.0
        self.eligibility_self[:] = 0.0
        self.eligibility_bias[:] = 0.0
        self.importance[:] = 1.0 / self.num_compartments


def init_learner(config: NetworkConfig, num_compartments: int | None = None) -> LearnerState:
    K = config.num_compartments if num_compartments is None else num_compartments
    N, C, B = config.num_neurons, config.num_channels, config.basis.num_basis
    return LearnerState(
        log_weights=np.zeros(K),
        eligibility_synaptic=np.zeros((K, N, C, B)),
        eligibility_self=np.zeros((K, N)),
        eligibility_bias=np.zeros((K, N)),
        importance=np.full(K, 1.0 / K),
    )


def update_log_weights(learner: LearnerState, visible_losses: np.ndarray,
                       kappa: float) -> LearnerState:
    """Fold one step of visible log-probability into each compartment's score.

    `visible_losses[k, i]` is the clamped-visible loss -log p(x_i | u_i^k);
    the per-step increment is the summed visible log-probability, i.e. the
    negated loss total.  Collecting the K * |X| loss values is the unicast
    phase, counted here.
    """
    visible_losses = np.asarray(visible_losses, dtype=float)
    K = learner.num_compartments
    if visible_losses.ndim != 2 or visible_losses.shape[0] != K:
        raise ContractViolation(
            f"visible losses have shape {visible_losses.shape}, expected ({K}, |X|)")
    increments = -visible_losses.sum(axis=1)
    learner.log_weights = kappa * learner.log_weights + increments
    learner.comm_unicast_total += K * visible_losses.shape[1]
    return learner


def update_eligibility(learner: LearnerState,
                       states: list[CompartmentState],
                       params: ParameterSet,
                       spikes: np.ndarray,
                       gamma: float,
                       clamped: np.ndarray | None = None) -> LearnerState:
    """Discount every eligibility trace by gamma and add this step's
    (post-synaptic error) x (pre-synaptic trace) products.

    `spikes[k]` must be the spikes actually emitted at step t (visible rows
    already clamped during training; `clamped` re-imposes them if given), and
    each state must still hold the step-t potentials and the step t-1 traces.
    """
    K = learner.num_compartments
    spikes = np.asarray(spikes, dtype=float)
    if spikes.shape != (K, params.biases.shape[0]):
        raise ContractViolation(
            f"spike array has shape {spikes.shape}, expected ({K}, {params.biases.shape[0]})")
    if clamped is not None:
        spikes = spikes.copy()
        spikes[:, :len(clamped)] = np.asarray(clamped, dtype=float)
    mask = params.mask
    for k, state in enumerate(states):
        err = spikes[k] - sigmoid(state.membrane_potentials)
        e_syn = learner.eligibility_synaptic[k]
        e_syn *= gamma
        e_syn += (err[:, None] * mask)[:, :, None] * state.prev_synaptic_traces[None, :, :]
        learner.eligibility_self[k] *= gamma
        learner.eligibility_self[k] += err * state.prev_somatic_traces
        learner.eligibility_bias[k] *= gamma
        learner.eligibility_bias[k] += err
    return learner


def apply_update(params: ParameterSet, learner: LearnerState, eta: float) -> float:
    """Move the shared parameters along the importance-weighted eligibility,
    theta += eta * sum_k importance_k * e_k, and return the update norm.

    The step ascends the discounted visible log-probability (equivalently
    descends the discounted cross-entropy; verified against finite
    differences in the acceptance suite).
    """
    d_syn = eta * np.einsum("k,kicb->icb", learner.importance, learner.eligibility_synaptic)
    d_self = eta * (learner.importance @ learner.eligibility_self)
    d_bias = eta * (learner.importance @ learner.eligibility_bias)
    params.synaptic_weights += d_syn
    params.self_weights += d_self
    params.biases += d_bias
    for name, arr in (("synaptic_weights", params.synaptic_weights),
                      ("self_weights", params.self_weights),
                      ("biases", params.biases)):
        if not np.isfinite(arr).all():
            idx = np.unravel_index(int(np.argmin(np.isfinite(arr))), arr.shape)
            raise TrainingDiverged(f"non-finite value in {name} at index {idx}")
    return float(np.sqrt(np.sum(d_syn ** 2) + np.sum(d_self ** 2) + np.sum(d_bias ** 2)))


@dataclass
class StepMetrics:
    """Per-step training record, one JSON line in the metrics log."""

    step: int
    visible_loss: list[float]      # per compartment, summed over visible neurons
    importance: list[float]
    importance_entropy: float
    comm_unicast_total: int
    comm_broadcast_total: int
    update_norm: float
    hidden_spikes: int             # summed over compartments this step

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "visible_loss": self.visible_loss,
            "importance": self.importance,
            "importance_entropy": self.importance_entropy,
            "comm_unicast_total": self.comm_unicast_total,
            "comm_broadcast_total": self.comm_broadcast_total,
            "update_norm": self.update_norm,
            "hidden_spikes": self.hidden_spikes,
        }


def train_step(params: ParameterSet,
               states: list[CompartmentState],
               learner: LearnerState,
               config: NetworkConfig,
               exogeneous_t: np.ndarray,
               x_t: np.ndarray,
               step: int = 0) -> StepMetrics:
    """One online update: advance the clamped network, refresh compartment
    scores and importance weights, accumulate eligibility, apply the update.

    Broadcasting the K importance weights to all |X| + |H| neurons is counted
    here; collecting the visible losses is counted in update_log_weights.
    """
    X = config.num_visible
    spikes, losses = step_network(params, states, config, exogeneous_t, clamp_visible=x_t)
    update_log_weights(learner, losses[:, :X], config.kappa)
    learner.importance = softmax_importance(learner.log_weights)
    learner.comm_broadcast_total += learner.num_compartments * config.num_neurons
    update_eligibility(learner, states, params, spikes, config.discount_gamma)
    update_norm = apply_update(params, learner, config.learning_rate_eta)
    importance = learner.importance
    return StepMetrics(
        step=step,
        visible_loss=[float(v) for v in losses[:, :X].sum(axis=1)],
        importance=[float(p) for p in importance],
        importance_entropy=float(-np.sum(importance * np.log(importance))),
        comm_unicast_total=learner.comm_unicast_total,
        comm_broadcast_total=learner.comm_broadcast_total,
        update_norm=update_norm,
        hidden_spikes=int(spikes[:, X:].sum()),
    )
