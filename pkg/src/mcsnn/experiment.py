"""Experiment orchestration: config files, the training loop with periodic
evaluation and best-checkpoint selection, full evaluation runs, and the
compartment-count sweep.

The experiment config is one JSON tree; parsing then dumping then parsing
again yields the identical tree.  All outputs under the run directory
(metric logs, reports, checkpoints) are determined byte-for-byte by the
config and seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import EventTensor, encode_targets, load_split, synth_task
from .errors import ConfigurationError
from .filters import make_raised_cosine_basis
from .inference import evaluate_dataset
from .learning import LearnerState, init_learner, train_step
from .network import (NetworkConfig, ParameterSet, init_compartment_states,
                      init_parameters, readout_adjacency)
from .rng import INIT_STREAM, SHUF_STREAM, stream

_TRAIN_DEFAULTS = {
    "epochs": 1,
    "max_examples": None,     # cap on training examples processed; None = all
    "eval_stride": 0,         # examples between selection evals; 0 = final only
    "eval_subset": None,      # test examples used in selection evals; None = all
    "metrics_stride": 1,      # log every n-th step
    "select_metric": "log_likelihood",   # or "accuracy"
    "ll_realizations": 20,    # hidden realizations for reported log-likelihoods
    "select_ll_realizations": None,      # cheaper value for selection evals
}


def load_experiment_config(path) -> dict:
    """Parse and validate an experiment config file (JSON tree)."""
    try:
        tree = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return validate_experiment_config(tree)


def validate_experiment_config(tree: dict) -> dict:
    for key in ("seed", "network", "data"):
        if key not in tree:
            raise ConfigurationError(f"config missing required field '{key}'")
    if tree.get("k_train", 1) < 1 or tree.get("k_infer", 1) < 1:
        raise ConfigurationError("compartment counts must be >= 1")
    data = tree["data"]
    if data.get("kind") not in ("synth", "manifest"):
        raise ConfigurationError("data.kind must be 'synth' or 'manifest'")
    select = {**_TRAIN_DEFAULTS, **tree.get("train", {})}["select_metric"]
    if select not in ("log_likelihood", "accuracy"):
        raise ConfigurationError(f"unknown selection metric '{select}'")
    return tree


def dump_experiment_config(tree: dict) -> str:
    return json.dumps(tree, indent=2) + "\n"


def train_settings(tree: dict) -> dict:
    return {**_TRAIN_DEFAULTS, **tree.get("train", {})}


def load_dataset(tree: dict, base_dir=".") -> tuple[list[EventTensor], list[EventTensor], int]:
    """Materialize (train, test, num_classes) from the config's data section."""
    data = tree["data"]
    if data["kind"] == "synth":
        train, test = synth_task(
            num_classes=data["num_classes"], channels=data["channels"],
            T=data["num_steps"], rate_high=data["rate_high"], rate_low=data["rate_low"],
            num_train=data["num_train_per_class"], num_test=data["num_test_per_class"],
            seed=tree["seed"])
        return train, test, data["num_classes"]
    manifest_path = Path(base_dir) / data["path"]
    if not manifest_path.exists():
        raise ConfigurationError(f"dataset manifest not found: {manifest_path}")
    from .data import load_manifest
    manifest = load_manifest(manifest_path)
    return (load_split(manifest_path, "train"), load_split(manifest_path, "test"),
            manifest["num_classes"])


def build_network_config(tree: dict, num_exogeneous: int,
                         num_compartments: int) -> NetworkConfig:
    net = tree["network"]
    num_visible, num_hidden = net["num_visible"], net["num_hidden"]
    topology = net.get("topology", {})
    if "adjacency" in topology:
        adjacency = topology["adjacency"]
    else:
        adjacency = readout_adjacency(num_visible, num_hidden, num_exogeneous,
                                      hidden_recurrent=topology.get("hidden_recurrent", True))
    basis = make_raised_cosine_basis(net.get("num_basis", 3), net.get("filter_duration", 10))
    return NetworkConfig(
        num_visible=num_visible, num_hidden=num_hidden, num_exogeneous=num_exogeneous,
        adjacency=adjacency, num_compartments=num_compartments, basis=basis,
        discount_gamma=net.get("discount_gamma", 0.9), kappa=net.get("kappa", 0.9),
        learning_rate_eta=net.get("learning_rate_eta", 0.001), seed=tree["seed"])


def save_checkpoint(path, params: ParameterSet) -> None:
    np.savez(path, synaptic_weights=params.synaptic_weights,
             self_weights=params.self_weights, biases=params.biases,
             mask=params.mask)


def load_checkpoint(path, config: NetworkConfig) -> ParameterSet:
    with np.load(path) as archive:
        params = ParameterSet(archive["synaptic_weights"], archive["self_weights"],
                              archive["biases"], archive["mask"].astype(bool))
    expected = (config.num_neurons, config.num_channels, config.basis.num_basis)
    if params.synaptic_weights.shape != expected:
        raise ConfigurationError(
            f"checkpoint weights {params.synaptic_weights.shape} do not match "
            f"network shape {expected}")
    if not np.array_equal(params.mask, config.presyn_mask()):
        raise ConfigurationError("checkpoint adjacency mask does not match the config")
    return params


def append_jsonl(path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")


def read_jsonl(path) -> list[dict]:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


@dataclass
class TrainResult:
    network: NetworkConfig
    params_final: ParameterSet
    params_best: ParameterSet
    best_metric: float
    eval_history: list[dict]
    summary: dict               # full-test evaluation of the selected params
    test_examples: list[EventTensor]
    total_steps: int
    comm_unicast_total: int
    comm_broadcast_total: int
    hidden_spikes_total: int


def run_training(tree: dict, out_dir=None, base_dir=".",
                 quiet: bool = True) -> TrainResult:
    """Online training over the configured dataset.

    Processes examples one at a time (order shuffled per epoch from the
    dedicated shuffle stream); dynamic state and learner accumulators reset
    at every example boundary while communication counters keep running.
    Periodic test-set evaluations drive best-checkpoint selection; the
    returned summary evaluates the selected parameters on the full test set.
    """
    validate_experiment_config(tree)
    settings = train_settings(tree)
    seed = tree["seed"]
    k_train = tree.get("k_train", 1)
    k_infer = tree.get("k_infer", 1)
    num_bins = tree.get("num_bins", 10)

    train, test, num_classes = load_dataset(tree, base_dir)
    if tree["network"]["num_visible"] != num_classes:
        raise ConfigurationError(
            f"num_visible={tree['network']['num_visible']} must equal "
            f"the dataset's {num_classes} classes")
    channels = train[0].num_channels
    config = build_network_config(tree, channels, k_train)

    init = tree.get("init", {})
    params = init_parameters(config, stream(seed, INIT_STREAM),
                             weight_scale=init.get("weight_scale"),
                             bias_init=init.get("bias_init", -1.0))
    states = init_compartment_states(config, k_train)
    learner = init_learner(config, k_train)
    shuffle_rng = stream(seed, SHUF_STREAM)

    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(dump_experiment_config(tree))
        # start metric logs fresh; appends happen per step / per eval
        (out / "train_metrics.jsonl").write_text("")
        (out / "eval_history.jsonl").write_text("")

    select_ll = settings["select_ll_realizations"] or settings["ll_realizations"]
    subset = settings["eval_subset"]
    eval_set = test if subset is None else test[:subset]

    def selection_eval(p: ParameterSet) -> dict:
        _, summary, _ = evaluate_dataset(p, config, eval_set, k_infer, seed,
                                         ll_realizations=select_ll, num_bins=num_bins)
        return summary

    metric_key = {"log_likelihood": "mean_log_likelihood",
                  "accuracy": "accuracy"}[settings["select_metric"]]
    best_metric = -np.inf
    best_params = params.copy()
    eval_history: list[dict] = []
    step = 0
    examples_seen = 0
    hidden_spikes_total = 0
    budget = settings["max_examples"]
    metrics_rows: list[dict] = []

    done = False
    for _ in range(settings["epochs"]):
        if done:
            break
        for idx in shuffle_rng.permutation(len(train)):
            if budget is not None and examples_seen >= budget:
                done = True
                break
            example = train[idx]
            T = example.num_steps
            target = encode_targets(example.label, num_classes, T)
            for state in states:
                state.reset_dynamics()
            learner.reset_example()
            exo = example.spikes.astype(float)
            for t in range(T):
                step += 1
                metrics = train_step(params, states, learner, config,
                                     exo[:, t], target[:, t], step)
                hidden_spikes_total += metrics.hidden_spikes
                if step % settings["metrics_stride"] == 0:
                    row = metrics.to_dict()
                    metrics_rows.append(row)
                    if out is not None:
                        append_jsonl(out / "train_metrics.jsonl", row)
            examples_seen += 1
            if settings["eval_stride"] and examples_seen % settings["eval_stride"] == 0:
                summary = selection_eval(params)
                record = {"examples_seen": examples_seen, **{
                    k: summary[k] for k in ("accuracy", "ece", "mean_log_likelihood")}}
                record["selected"] = summary[metric_key] > best_metric
                if record["selected"]:
                    best_metric = summary[metric_key]
                    best_params = params.copy()
                eval_history.append(record)
                if out is not None:
                    append_jsonl(out / "eval_history.jsonl", record)
                if not quiet:
                    print(f"[train] {examples_seen} examples: "
                          f"acc={summary['accuracy']:.3f} ece={summary['ece']:.3f} "
                          f"ll={summary['mean_log_likelihood']:.3f}")

    # Final selection check on the current parameters, then a full-test
    # evaluation of whichever checkpoint won.
    if examples_seen > 0:
        final_summary_sel = selection_eval(params)
        if final_summary_sel[metric_key] > best_metric:
            best_metric = final_summary_sel[metric_key]
            best_params = params.copy()
        record = {"examples_seen": examples_seen, **{
            k: final_summary_sel[k] for k in ("accuracy", "ece", "mean_log_likelihood")},
            "selected": bool(final_summary_sel[metric_key] >= best_metric)}
        eval_history.append(record)
        if out is not None:
            append_jsonl(out / "eval_history.jsonl", record)
    else:
        best_params = params.copy()

    _, summary, _ = evaluate_dataset(best_params, config, test, k_infer, seed,
                                     ll_realizations=settings["ll_realizations"],
                                     num_bins=num_bins)
    if out is not None:
        save_checkpoint(out / "checkpoint_best.npz", best_params)
        save_checkpoint(out / "checkpoint_final.npz", params)
        (out / "train_summary.json").write_text(json.dumps({
            "examples_seen": examples_seen,
            "total_steps": step,
            "comm_unicast_total": learner.comm_unicast_total,
            "comm_broadcast_total": learner.comm_broadcast_total,
            "hidden_spikes_total": hidden_spikes_total,
            "best_metric": None if best_metric == -np.inf else best_metric,
            "test": summary,
        }, indent=2) + "\n")
        from .plots import plot_training_curves
        plot_training_curves(metrics_rows, eval_history, out / "training_curves.png")

    return TrainResult(
        network=config, params_final=params, params_best=best_params,
        best_metric=best_metric, eval_history=eval_history, summary=summary,
        test_examples=test, total_steps=step,
        comm_unicast_total=learner.comm_unicast_total,
        comm_broadcast_total=learner.comm_broadcast_total,
        hidden_spikes_total=hidden_spikes_total)


def run_evaluation(tree: dict, checkpoint_path, out_dir=None, base_dir=".",
                   ) -> tuple[list[dict], dict]:
    """Evaluate a checkpoint on the test split and write the report."""
    validate_experiment_config(tree)
    settings = train_settings(tree)
    _, test, num_classes = load_dataset(tree, base_dir)
    config = build_network_config(tree, test[0].num_channels, tree.get("k_train", 1))
    params = load_checkpoint(checkpoint_path, config)
    records, summary, report = evaluate_dataset(
        params, config, test, tree.get("k_infer", 1), tree["seed"],
        ll_realizations=settings["ll_realizations"],
        num_bins=tree.get("num_bins", 10))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_records.jsonl").write_text("")
        for record in records:
            append_jsonl(out / "eval_records.jsonl", record)
        (out / "eval_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        from .plots import plot_reliability
        plot_reliability(report, out / "reliability.png")
    return records, summary


def run_sweep(tree: dict, k_values: list[int], out_dir=None, base_dir=".",
              quiet: bool = True) -> list[dict]:
    """Train and evaluate one model per compartment count.

    Each K trains with k_train = k_infer = K in its own subdirectory; the
    summary table reports test metrics, the per-step communication loads
    (which must match the closed forms K*|X| and K*(|X|+|H|)), and the mean
    hidden spike count per training step.
    """
    if not k_values:
        raise ConfigurationError("sweep needs at least one compartment count")
    rows = []
    for k in sorted(k_values):
        sub_tree = json.loads(json.dumps(tree))
        sub_tree["k_train"] = k
        sub_tree["k_infer"] = k
        sub_out = None if out_dir is None else Path(out_dir) / f"k_{k:03d}"
        result = run_training(sub_tree, sub_out, base_dir, quiet=quiet)
        rows.append({
            "k": k,
            "mean_log_likelihood": result.summary["mean_log_likelihood"],
            "accuracy": result.summary["accuracy"],
            "ece": result.summary["ece"],
            "unicast_per_step": result.comm_unicast_total / max(result.total_steps, 1),
            "broadcast_per_step": result.comm_broadcast_total / max(result.total_steps, 1),
            "hidden_spikes_per_step": result.hidden_spikes_total / max(result.total_steps, 1),
        })
        if not quiet:
            print(f"[sweep] K={k}: acc={rows[-1]['accuracy']:.3f} "
                  f"ll={rows[-1]['mean_log_likelihood']:.3f} ece={rows[-1]['ece']:.3f}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(out / "sweep.csv", rows)
        from .plots import plot_sweep
        plot_sweep(rows, out / "sweep.png")
    return rows


_SWEEP_COLUMNS = ["k", "mean_log_likelihood", "accuracy", "ece",
                  "unicast_per_step", "broadcast_per_step", "hidden_spikes_per_step"]


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in _SWEEP_COLUMNS})


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(row[k]) if k == "k" else float(row[k])) for k in _SWEEP_COLUMNS}
                for row in csv.DictReader(fh)]
