"""Multi-compartment probabilistic spiking networks with importance-weighted
online learning: dynamics, learner, inference metrics, data pipeline, CLI."""

from .data import (EventStream, EventTensor, encode_targets, preprocess,
                   synth_task)
from .filters import FilterBasis, make_raised_cosine_basis, save_kernels_text
from .inference import (CalibrationReport, VoteRecord, estimate_log_likelihood,
                        expected_calibration_error, free_run, majority_decode)
from .learning import (LearnerState, StepMetrics, apply_update, init_learner,
                       softmax_importance, temporal_average, train_step,
                       update_eligibility, update_log_weights)
from .network import (CompartmentState, NetworkConfig, ParameterSet, bce_loss,
                      init_compartment_states, init_parameters,
                      membrane_potential, readout_adjacency, sample_spike,
                      save_trace_snapshot_text, sigmoid, step_network,
                      step_traces, zero_parameters)

__version__ = "0.1.0"

__all__ = [
    "CalibrationReport", "CompartmentState", "EventStream", "EventTensor",
    "FilterBasis", "LearnerState", "NetworkConfig", "ParameterSet",
    "StepMetrics", "VoteRecord", "apply_update", "bce_loss", "encode_targets",
    "estimate_log_likelihood", "expected_calibration_error", "free_run",
    "init_compartment_states", "init_learner", "init_parameters",
    "majority_decode", "make_raised_cosine_basis", "membrane_potential",
    "preprocess", "readout_adjacency", "sample_spike", "save_kernels_text",
    "save_trace_snapshot_text", "sigmoid", "softmax_importance",
    "step_network", "step_traces", "synth_task", "temporal_average",
    "train_step", "update_eligibility", "update_log_weights",
    "zero_parameters",
]
