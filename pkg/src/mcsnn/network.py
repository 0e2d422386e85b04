"""Discrete-time dynamics of a multi-compartment probabilistic spiking network.

Every neuron is a Bernoulli GLM unit: its membrane potential is a weighted
sum of filtered pre-synaptic spike trains (synaptic traces), its own filtered
spike history (somatic trace) and a bias, and it fires with probability
sigmoid(potential).  A network runs K compartments: replicas of the full
dynamic state (trace buffers, potentials, RNG stream) that all read the same
shared parameter set.  Potentials at step t use traces from step t-1, so all
neurons within a step update in parallel from the previous step's history.

Channel indexing: channels 0..E-1 are exogeneous inputs, channel E+i is
neuron i.  Neurons 0..|X|-1 are visible (read-out), the rest are hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .errors import ConfigurationError, ContractViolation
from .filters import FilterBasis, make_raised_cosine_basis
from .rng import INIT_STREAM, compartment_streams, stream


def sigmoid(x):
    """Spike probability 1/(1 + exp(-x)), overflow-safe for any finite x."""
    return expit(x)


def bce_loss(spike, u):
    """Binary cross-entropy -log p(spike | u) for a Bernoulli(sigmoid(u)) unit.

    Evaluated as -[s*log_sigmoid(u) + (1-s)*log_sigmoid(-u)] so large |u|
    never overflows; exp(-bce_loss(s, u)) recovers p(s | u).
    """
    spike = np.asarray(spike, dtype=float)
    return -(spike * log_expit(u) + (1.0 - spike) * log_expit(-np.asarray(u)))


def sample_spike(u: float, rng: np.random.Generator) -> int:
    """Draw one spike ~ Bernoulli(sigmoid(u)); consumes exactly one uniform."""
    return int(rng.random() < sigmoid(u))


def readout_adjacency(num_visible: int, num_hidden: int, num_exogeneous: int,
                      hidden_recurrent: bool = True) -> list[list[int]]:
    """Read-out layer topology: hidden neurons see all exogeneous channels
    (plus each other when `hidden_recurrent`); visible neurons see all
    exogeneous channels and all hidden neurons.  No visible-to-visible
    synapses and no self-loops (self-memory goes through the somatic trace).
    """
    E = num_exogeneous
    exo = list(range(E))
    hidden_ch = [E + num_visible + j for j in range(num_hidden)]
    adjacency: list[list[int]] = []
    for i in range(num_visible):
        adjacency.append(exo + hidden_ch)
    for j in range(num_hidden):
        own = E + num_visible + j
        peers = [c for c in hidden_ch if c != own] if hidden_recurrent else []
        adjacency.append(exo + peers)
    return adjacency


@dataclass
class NetworkConfig:
    """Topology, filter bank and hyperparameters of one network.

    `adjacency[i]` lists the channels neuron i receives synapses from,
    indexed over exogeneous channels followed by neurons.
    """

    num_visible: int
    num_hidden: int
    num_exogeneous: int
    adjacency: list[list[int]]
    num_compartments: int = 1
    basis: FilterBasis = field(default_factory=lambda: make_raised_cosine_basis(3, 10))
    discount_gamma: float = 0.9
    kappa: float = 0.9
    learning_rate_eta: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.num_visible < 1:
            raise ConfigurationError("need at least one visible neuron")
        if self.num_hidden < 0 or self.num_exogeneous < 0:
            raise ConfigurationError("negative population size")
        if self.num_compartments < 1:
            raise ConfigurationError("need at least one compartment")
        if not (0.0 < self.discount_gamma < 1.0 and 0.0 < self.kappa < 1.0):
            raise ConfigurationError("discount factors must lie in (0, 1)")
        if self.learning_rate_eta <= 0.0:
            raise ConfigurationError("learning rate must be positive")
        if len(self.adjacency) != self.num_neurons:
            raise ConfigurationError(
                f"adjacency lists {len(self.adjacency)} neurons, expected {self.num_neurons}")
        for i, pre in enumerate(self.adjacency):
            for c in pre:
                if not 0 <= c < self.num_channels:
                    raise ConfigurationError(
                        f"neuron {i} references channel {c} outside [0, {self.num_channels})")

    @property
    def num_neurons(self) -> int:
        return self.num_visible + self.num_hidden

    @property
    def num_channels(self) -> int:
        return self.num_exogeneous + self.num_neurons

    def neuron_channel(self, i: int) -> int:
        return self.num_exogeneous + i

    def presyn_mask(self) -> np.ndarray:
        """Boolean (neurons, channels) synapse-existence mask."""
        mask = np.zeros((self.num_neurons, self.num_channels), dtype=bool)
        for i, pre in enumerate(self.adjacency):
            mask[i, list(pre)] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "num_visible": self.num_visible,
            "num_hidden": self.num_hidden,
            "num_exogeneous": self.num_exogeneous,
            "adjacency": [list(map(int, pre)) for pre in self.adjacency],
            "num_compartments": self.num_compartments,
            "basis": self.basis.to_dict(),
            "discount_gamma": self.discount_gamma,
            "kappa": self.kappa,
            "learning_rate_eta": self.learning_rate_eta,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        d = dict(d)
        d["basis"] = FilterBasis.from_dict(d["basis"])
        return cls(**d)


@dataclass
class ParameterSet:
    """Shared model parameters, one copy read by all compartments.

    `synaptic_weights` is dense (neurons, channels, num_basis) with zeros on
    non-edges; `mask` records which (neuron, channel) pairs are real synapses
    so updates never create weights outside the adjacency.
    """

    synaptic_weights: np.ndarray
    self_weights: np.ndarray
    biases: np.ndarray
    mask: np.ndarray

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.synaptic_weights.copy(), self.self_weights.copy(),
                            self.biases.copy(), self.mask)

    def flat(self) -> np.ndarray:
        """All parameters as one vector (masked synapses, self weights, biases)."""
        return np.concatenate([self.synaptic_weights[self.mask].ravel(),
                               self.self_weights, self.biases])


def zero_parameters(config: NetworkConfig) -> ParameterSet:
    N, C, B = config.num_neurons, config.num_channels, config.basis.num_basis
    return ParameterSet(np.zeros((N, C, B)), np.zeros(N), np.zeros(N),
                        config.presyn_mask())


def init_parameters(config: NetworkConfig,
                    rng: Optional[np.random.Generator] = None,
                    weight_scale: Optional[float] = None,
                    bias_init: float = -1.0) -> ParameterSet:
    """Zero-mean uniform weights scaled per neuron by 1/sqrt(fan_in * B)
    unless `weight_scale` overrides; biases start at `bias_init` (negative
    keeps initial firing rates low)."""
    if rng is None:
        rng = stream(config.seed, INIT_STREAM)
    params = zero_parameters(config)
    B = config.basis.num_basis
    for i, pre in enumerate(config.adjacency):
        fan_in = max(len(pre), 1)
        scale = weight_scale if weight_scale is not None else 1.0 / np.sqrt(fan_in * B)
        if len(pre) > 0:
            params.synaptic_weights[i, list(pre), :] = rng.uniform(-scale, scale, (len(pre), B))
        params.self_weights[i] = rng.uniform(-scale, scale)
    params.biases[:] = bias_init
    return params


@dataclass
class CompartmentState:
    """Dynamic state of one compartment.

    `spike_window[c, d]` holds the spike of channel c at delay d (d = 0 is
    the current step).  `synaptic_traces`/`somatic_traces` are the filter
    responses of that window; `prev_*` keep the previous step's traces, which
    are the ones the current `membrane_potentials` were computed from (the
    learning rule pairs the step-t post-synaptic error with step t-1 traces).
    """

    compartment_index: int
    spike_window: np.ndarray        # (channels, duration)
    synaptic_traces: np.ndarray     # (channels, num_basis)
    somatic_traces: np.ndarray      # (neurons,)
    prev_synaptic_traces: np.ndarray
    prev_somatic_traces: np.ndarray
    membrane_potentials: np.ndarray  # (neurons,)
    rng: np.random.Generator

    def reset_dynamics(self) -> None:
        """Zero all history buffers; the RNG stream keeps advancing."""
        self.spike_window[:] = 0.0
        self.synaptic_traces[:] = 0.0
        self.somatic_traces[:] = 0.0
        self.prev_synaptic_traces[:] = 0.0
        self.prev_somatic_traces[:] = 0.0
        self.membrane_potentials[:] = 0.0


def init_compartment_states(config: NetworkConfig,
                            count: Optional[int] = None,
                            streams: Optional[Sequence[np.random.Generator]] = None,
                            ) -> list[CompartmentState]:
    """Fresh zero-history states; compartment k draws from child stream
    (config.seed, k) unless explicit `streams` are given."""
    K = config.num_compartments if count is None else count
    if streams is None:
        streams = compartment_streams(config.seed, K)
    elif len(streams) != K:
        raise ContractViolation(f"expected {K} streams, got {len(streams)}")
    C, N = config.num_channels, config.num_neurons
    tau, B = config.basis.duration, config.basis.num_basis
    return [
        CompartmentState(
            compartment_index=k,
            spike_window=np.zeros((C, tau)),
            synaptic_traces=np.zeros((C, B)),
            somatic_traces=np.zeros(N),
            prev_synaptic_traces=np.zeros((C, B)),
            prev_somatic_traces=np.zeros(N),
            membrane_potentials=np.zeros(N),
            rng=streams[k],
        )
        for k in range(K)
    ]


def save_trace_snapshot_text(state: CompartmentState, path) -> None:
    """Dump one compartment's traces and potentials as plain-text matrices."""
    with open(path, "w") as fh:
        fh.write(f"# compartment {state.compartment_index}\n")
        fh.write("# synaptic traces (channels x basis)\n")
        np.savetxt(fh, state.synaptic_traces)
        fh.write("# somatic traces (neurons)\n")
        np.savetxt(fh, state.somatic_traces[None, :])
        fh.write("# membrane potentials (neurons)\n")
        np.savetxt(fh, state.membrane_potentials[None, :])


def step_traces(state: CompartmentState, spikes_in: np.ndarray,
                basis: FilterBasis) -> CompartmentState:
    """Push one step of spikes (all channels) and refresh the traces.

    Traces are the finite convolutions kernel(d) * window(d) over the filter
    window; history before the sequence start counts as zero.
    """
    spikes_in = np.asarray(spikes_in, dtype=float)
    if spikes_in.shape != (state.spike_window.shape[0],):
        raise ContractViolation(
            f"spike vector has shape {spikes_in.shape}, expected ({state.spike_window.shape[0]},)")
    if not np.isin(spikes_in, (0.0, 1.0)).all():
        raise ContractViolation("spike entries must be 0 or 1")
    window = state.spike_window
    window[:, 1:] = window[:, :-1]
    window[:, 0] = spikes_in
    num_neurons = state.somatic_traces.shape[0]
    state.synaptic_traces = window @ basis.synaptic_kernels.T
    state.somatic_traces = window[-num_neurons:] @ basis.somatic_kernel
    return state


def membrane_potentials(params: ParameterSet, state: CompartmentState) -> np.ndarray:
    """Potentials of all neurons from the state's current (step t-1) traces."""
    u = np.einsum("icb,cb->i", params.synaptic_weights, state.synaptic_traces)
    u += params.self_weights * state.somatic_traces
    u += params.biases
    return u


def membrane_potential(params: ParameterSet, state: CompartmentState, neuron: int) -> float:
    """Potential of one neuron: synaptic term + self-memory term + bias."""
    u = float(np.sum(params.synaptic_weights[neuron] * state.synaptic_traces))
    return u + params.self_weights[neuron] * state.somatic_traces[neuron] + params.biases[neuron]


def step_network(params: ParameterSet,
                 states: Sequence[CompartmentState],
                 config: NetworkConfig,
                 exogeneous_t: np.ndarray,
                 clamp_visible: Optional[np.ndarray] = None,
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Advance every compartment by one time step.

    For each compartment: compute potentials from the previous step's traces,
    then sample hidden spikes from the compartment's own stream; visible
    neurons are fixed to `clamp_visible` when given (training / likelihood
    evaluation) and sampled otherwise (free run).  Returns the emitted spikes
    and per-neuron losses -log p(s | u), both shaped (K, neurons).  Traces
    advance afterwards, so inputs at step t first influence potentials at t+1.
    """
    E, N, X = config.num_exogeneous, config.num_neurons, config.num_visible
    exogeneous_t = np.asarray(exogeneous_t, dtype=float)
    if exogeneous_t.shape != (E,):
        raise ContractViolation(f"exogeneous vector has shape {exogeneous_t.shape}, expected ({E},)")
    if clamp_visible is not None:
        clamp_visible = np.asarray(clamp_visible, dtype=float)
        if clamp_visible.shape != (X,):
            raise ContractViolation(
                f"clamp vector has shape {clamp_visible.shape}, expected ({X},)")
    K = len(states)
    spikes = np.zeros((K, N))
    losses = np.zeros((K, N))
    for k, state in enumerate(states):
        u = membrane_potentials(params, state)
        state.prev_synaptic_traces = state.synaptic_traces
        state.prev_somatic_traces = state.somatic_traces
        state.membrane_potentials = u
        s = np.empty(N)
        if clamp_visible is not None:
            s[:X] = clamp_visible
            if N > X:
                s[X:] = state.rng.random(N - X) < sigmoid(u[X:])
        else:
            s[:] = state.rng.random(N) < sigmoid(u)
        spikes[k] = s
        losses[k] = bce_loss(s, u)
        step_traces(state, np.concatenate([exogeneous_t, s]), config.basis)
    return spikes, losses
