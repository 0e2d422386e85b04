import numpy as np
import pytest

from mcsnn.errors import ContractViolation, TrainingDiverged
from mcsnn.learning import (apply_update, init_learner, softmax_importance,
                            temporal_average, train_step, update_eligibility,
                            update_log_weights)
from mcsnn.network import (NetworkConfig, init_compartment_states,
                           init_parameters, sigmoid, step_network,
                           zero_parameters)


def two_neuron_config(**overrides):
    defaults = dict(num_visible=1, num_hidden=1, num_exogeneous=1,
                    adjacency=[[0, 2], [0, 1]], num_compartments=2, seed=21)
    defaults.update(overrides)
    return NetworkConfig(**defaults)


class TestTemporalAverage:
    def test_base_case(self):
        assert temporal_average(0.0, 1.0, 0.9) == 1.0

    def test_one_recursion(self):
        assert temporal_average(1.0, 1.0, 0.9) == pytest.approx(1.9, abs=1e-15)

    def test_constant_stream_converges_to_geometric_limit(self):
        acc = 0.0
        for t in range(1, 151):
            acc = temporal_average(acc, 1.0, 0.9)
        assert abs(acc - 10.0) / 10.0 <= 1e-6


class TestSoftmaxImportance:
    def test_equal_entries_uniform(self):
        for k in (1, 2, 5, 20):
            np.testing.assert_allclose(softmax_importance(np.full(k, 3.7)),
                                       np.full(k, 1.0 / k), atol=1e-15)

    def test_closed_form_pair(self):
        np.testing.assert_allclose(softmax_importance(np.array([0.0, np.log(3.0)])),
                                   [0.25, 0.75], atol=1e-15)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            v = rng.normal(size=rng.integers(1, 9)) * 10
            c = rng.normal() * 100
            np.testing.assert_allclose(softmax_importance(v),
                                       softmax_importance(v + c), atol=1e-12)

    def test_monotone_in_own_score(self):
        v = np.array([0.2, -1.0, 0.5])
        base = softmax_importance(v)[0]
        bumped = v.copy()
        bumped[0] += 0.3
        assert softmax_importance(bumped)[0] > base

    def test_normalized_under_extreme_scores(self):
        v = np.array([-1e6, 0.0, 1e6])
        w = softmax_importance(v)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.isfinite(w).all()


class TestUpdateLogWeights:
    def test_single_compartment_importance_is_one(self):
        cfg = two_neuron_config(num_compartments=1)
        learner = init_learner(cfg)
        update_log_weights(learner, np.array([[0.4]]), cfg.kappa)
        np.testing.assert_array_equal(softmax_importance(learner.log_weights), [1.0])

    def test_identical_losses_identical_scores(self):
        cfg = two_neuron_config(num_compartments=4)
        learner = init_learner(cfg)
        for _ in range(7):
            update_log_weights(learner, np.full((4, 1), 0.3), cfg.kappa)
        assert (learner.log_weights == learner.log_weights[0]).all()

    def test_five_step_hand_recursion(self):
        # scripted loss tables replayed against the direct recursion
        cfg = two_neuron_config(num_compartments=3)
        kappa = 0.9
        rng = np.random.default_rng(1)
        losses = rng.uniform(0.1, 2.0, size=(5, 3, 1))
        learner = init_learner(cfg)
        expected = np.zeros(3)
        for t in range(5):
            update_log_weights(learner, losses[t], kappa)
            expected = kappa * expected + (-losses[t].sum(axis=1))
        np.testing.assert_allclose(learner.log_weights, expected, atol=1e-12)

    def test_unicast_counter(self):
        cfg = two_neuron_config(num_compartments=3)
        learner = init_learner(cfg)
        for _ in range(11):
            update_log_weights(learner, np.zeros((3, 1)), cfg.kappa)
        assert learner.comm_unicast_total == 11 * 3 * 1

    def test_wrong_shape_rejected(self):
        cfg = two_neuron_config()
        learner = init_learner(cfg)
        with pytest.raises(ContractViolation):
            update_log_weights(learner, np.zeros((3, 1)), cfg.kappa)


class TestUpdateEligibility:
    def test_saturated_error_pure_decay(self):
        # clamp s=1 with u -> +inf: the error term vanishes exactly
        cfg = two_neuron_config(num_compartments=1)
        params = zero_parameters(cfg)
        states = init_compartment_states(cfg)
        learner = init_learner(cfg)
        learner.eligibility_synaptic[:] = 0.5
        learner.eligibility_self[:] = -0.25
        learner.eligibility_bias[:] = 2.0
        states[0].membrane_potentials = np.array([1000.0, 1000.0])
        spikes = np.ones((1, 2))
        update_eligibility(learner, states, params, spikes, gamma=0.9)
        np.testing.assert_array_equal(learner.eligibility_synaptic,
                                      np.full_like(learner.eligibility_synaptic, 0.45))
        np.testing.assert_array_equal(learner.eligibility_self,
                                      np.full_like(learner.eligibility_self, -0.225))
        np.testing.assert_array_equal(learner.eligibility_bias,
                                      np.full_like(learner.eligibility_bias, 1.8))

    def test_zero_trace_leaves_synaptic_decay_only(self):
        cfg = two_neuron_config(num_compartments=1)
        params = zero_parameters(cfg)
        states = init_compartment_states(cfg)  # zero history: all traces zero
        learner = init_learner(cfg)
        learner.eligibility_synaptic[:] = 1.0
        states[0].membrane_potentials = np.array([0.3, -0.2])
        update_eligibility(learner, states, params, np.ones((1, 2)), gamma=0.8)
        np.testing.assert_array_equal(learner.eligibility_synaptic,
                                      np.full_like(learner.eligibility_synaptic, 0.8))
        # bias eligibility still picks up the bare error
        np.testing.assert_allclose(learner.eligibility_bias[0],
                                   1.0 - sigmoid(np.array([0.3, -0.2])), atol=1e-15)

    def test_matches_unrolled_sum(self):
        # 3-step scripted run versus sum_t' gamma^(t-t') * error * trace
        cfg = two_neuron_config(num_compartments=2, seed=31)
        gamma = cfg.discount_gamma
        params = init_parameters(cfg)
        states = init_compartment_states(cfg)
        learner = init_learner(cfg)
        rng = np.random.default_rng(2)
        mask = params.mask
        records = []
        for t in range(3):
            exo = np.array([float(rng.integers(0, 2))])
            clamp = np.array([float(rng.integers(0, 2))])
            spikes, _ = step_network(params, states, cfg, exo, clamp_visible=clamp)
            records.append([(spikes[k].copy(),
                             states[k].membrane_potentials.copy(),
                             states[k].prev_synaptic_traces.copy(),
                             states[k].prev_somatic_traces.copy())
                            for k in range(2)])
            update_eligibility(learner, states, params, spikes, gamma)
        for k in range(2):
            expected_syn = np.zeros_like(learner.eligibility_synaptic[k])
            expected_self = np.zeros_like(learner.eligibility_self[k])
            expected_bias = np.zeros_like(learner.eligibility_bias[k])
            for age, record in enumerate(reversed(records)):
                s, u, syn, som = record[k]
                err = s - sigmoid(u)
                expected_syn += gamma ** age * (err[:, None] * mask)[:, :, None] * syn[None]
                expected_self += gamma ** age * err * som
                expected_bias += gamma ** age * err
            np.testing.assert_allclose(learner.eligibility_synaptic[k], expected_syn,
                                       atol=1e-13)
            np.testing.assert_allclose(learner.eligibility_self[k], expected_self,
                                       atol=1e-13)
            np.testing.assert_allclose(learner.eligibility_bias[k], expected_bias,
                                       atol=1e-13)

    def test_off_edge_eligibility_stays_zero(self):
        cfg = two_neuron_config(num_compartments=1, seed=33)
        params = init_parameters(cfg)
        states = init_compartment_states(cfg)
        learner = init_learner(cfg)
        rng = np.random.default_rng(3)
        for t in range(6):
            spikes, _ = step_network(params, states, cfg,
                                     np.array([float(rng.integers(0, 2))]),
                                     clamp_visible=np.array([1.0]))
            update_eligibility(learner, states, params, spikes, cfg.discount_gamma)
        assert not learner.eligibility_synaptic[0][~params.mask].any()


class TestApplyUpdate:
    def test_zero_learning_rate_no_change(self):
        cfg = two_neuron_config()
        params = init_parameters(cfg)
        before = params.copy()
        learner = init_learner(cfg)
        learner.eligibility_synaptic[:] = 1.3
        apply_update(params, learner, eta=0.0)
        np.testing.assert_array_equal(params.synaptic_weights, before.synaptic_weights)
        np.testing.assert_array_equal(params.biases, before.biases)

    def test_single_compartment_reduces_to_plain_step(self):
        cfg = two_neuron_config(num_compartments=1)
        params = zero_parameters(cfg)
        learner = init_learner(cfg)
        learner.eligibility_bias[0] = np.array([0.5, -0.5])
        learner.importance = softmax_importance(learner.log_weights)
        apply_update(params, learner, eta=0.1)
        np.testing.assert_array_equal(params.biases, [0.05, -0.05])

    def test_nonfinite_update_names_parameter(self):
        cfg = two_neuron_config(num_compartments=1)
        params = zero_parameters(cfg)
        learner = init_learner(cfg)
        learner.eligibility_self[0, 1] = np.inf
        with pytest.raises(TrainingDiverged, match="self_weights"):
            apply_update(params, learner, eta=0.1)


class TestTrainStep:
    def run_steps(self, cfg, steps, seed=4):
        params = init_parameters(cfg)
        states = init_compartment_states(cfg)
        learner = init_learner(cfg)
        rng = np.random.default_rng(seed)
        metrics = []
        for t in range(steps):
            exo = (rng.random(cfg.num_exogeneous) < 0.5).astype(float)
            x_t = (rng.random(cfg.num_visible) < 0.5).astype(float)
            metrics.append(train_step(params, states, learner, cfg, exo, x_t, step=t + 1))
        return params, learner, metrics

    def test_comm_counters_closed_form(self):
        cfg = two_neuron_config(num_compartments=3)
        T = 57
        _, learner, _ = self.run_steps(cfg, T)
        assert learner.comm_unicast_total == T * 3 * cfg.num_visible
        assert learner.comm_broadcast_total == T * 3 * (cfg.num_visible + cfg.num_hidden)

    def test_paper_scale_broadcast_spot_value(self):
        # K=20 with a 3-visible / 200-hidden readout net: 4060 reals per step
        from mcsnn.network import readout_adjacency
        cfg = NetworkConfig(num_visible=3, num_hidden=200, num_exogeneous=4,
                            adjacency=readout_adjacency(3, 200, 4),
                            num_compartments=20, seed=41)
        params = init_parameters(cfg)
        states = init_compartment_states(cfg)
        learner = init_learner(cfg)
        train_step(params, states, learner, cfg, np.zeros(4), np.ones(3))
        assert learner.comm_broadcast_total == 4060
        assert learner.comm_unicast_total == 60

    def test_deterministic_parameter_trajectory(self):
        cfg = two_neuron_config(num_compartments=2)
        p1, _, m1 = self.run_steps(cfg, 40)
        p2, _, m2 = self.run_steps(cfg, 40)
        np.testing.assert_array_equal(p1.synaptic_weights, p2.synaptic_weights)
        np.testing.assert_array_equal(p1.biases, p2.biases)
        assert [m.visible_loss for m in m1] == [m.visible_loss for m in m2]

    def test_importance_normalized_every_step(self):
        cfg = two_neuron_config(num_compartments=5)
        _, _, metrics = self.run_steps(cfg, 60)
        for m in metrics:
            assert abs(sum(m.importance) - 1.0) <= 1e-12

    def test_metrics_fields_serializable(self):
        import json
        cfg = two_neuron_config()
        _, _, metrics = self.run_steps(cfg, 3)
        row = json.loads(json.dumps(metrics[-1].to_dict()))
        assert set(row) == {"step", "visible_loss", "importance",
                            "importance_entropy", "comm_unicast_total",
                            "comm_broadcast_total", "update_norm", "hidden_spikes"}
