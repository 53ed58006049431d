import dataclasses
from types import SimpleNamespace

import numpy as np
import pytest

from gridirl.mdp import Trajectory, make_gridworld, with_goal
from gridirl.nets import (
    AdaGradState,
    feature_network,
    forward,
    backward,
    linear_model,
)
from gridirl.seeding import DEMO_STREAM, derive_seed
from gridirl.solver import (
    NumericDivergenceError,
    StochasticPolicy,
    VisitationCounts,
    propagate_policy,
    soft_value_iteration,
)
from gridirl.training import (
    DemoSet,
    TrainRecord,
    TrainReport,
    data_gradient_wrt_reward,
    empirical_start_distribution,
    expert_counts,
    gradient_sup_norm,
    maxent_data_loss,
    train,
)
from gridirl.worlds import WorldSpec, generate_world, sample_demonstrations


def _tiny_world():
    # 2x2 windless grid wrapped in the minimal shape DemoSet expects
    return SimpleNamespace(mdp=make_gridworld(2, 2, 0.9))


def _demo(*steps):
    return Trajectory(tuple(steps))


# expert statistics


def test_expert_counts_single_demo():
    world = _tiny_world()
    demos = DemoSet((_demo((0, 3), (1, 4)),), world, 2, 1)
    counts = expert_counts(demos)
    assert np.array_equal(counts.state_counts, [1.0, 1.0, 0.0, 0.0])
    assert counts.state_action_counts[0, 3] == 1.0
    assert counts.state_action_counts[1, 4] == 1.0
    assert counts.state_action_counts.sum() == 2.0


def test_expert_counts_average_ignores_duplication():
    world = _tiny_world()
    once = DemoSet((_demo((0, 3), (1, 4)),), world, 2, 1)
    thrice = DemoSet((_demo((0, 3), (1, 4)),) * 3, world, 2, 3)
    assert np.array_equal(
        expert_counts(once).state_action_counts,
        expert_counts(thrice).state_action_counts,
    )


def test_expert_counts_mass_equals_demo_length():
    world = generate_world(WorldSpec("objectworld", 6, n_colors=2, n_objects=3), 4)
    demos = sample_demonstrations(world, 12, 7, 0.3, 99)
    counts = expert_counts(demos)
    assert counts.state_counts.sum() == pytest.approx(7.0, abs=1e-12)


def test_empirical_start_distribution_counts_first_states():
    world = _tiny_world()
    demos = DemoSet(
        (_demo((0, 3), (1, 4)), _demo((0, 3), (1, 4)), _demo((2, 4), (2, 4))),
        world,
        2,
        3,
    )
    starts = empirical_start_distribution(demos)
    assert np.allclose(starts, [2 / 3, 0.0, 1 / 3, 0.0], atol=1e-15)
    assert starts.sum() == pytest.approx(1.0, abs=1e-12)


def test_demo_set_rejects_bad_input():
    world = _tiny_world()
    with pytest.raises(ValueError):
        DemoSet((), world, 2, 0)
    with pytest.raises(ValueError):
        DemoSet((_demo((0, 3), (1, 4)),), world, 2, 2)
    with pytest.raises(ValueError):
        DemoSet((_demo((0, 3), (1, 4)), _demo((0, 3))), world, 2, 2)
    with pytest.raises(ValueError):
        # windless grid cannot hop diagonally from 0 to 3
        DemoSet((_demo((0, 3), (3, 4)),), world, 2, 1)


# loss


def _uniform_policy(n_states, n_actions):
    return StochasticPolicy(np.full((n_states, n_actions), 1.0 / n_actions))


def test_loss_of_uniform_policy_is_mass_times_log_fifth():
    world = _tiny_world()
    demos = DemoSet((_demo((0, 3), (1, 4)),), world, 2, 1)
    loss = maxent_data_loss(_uniform_policy(4, 5), expert_counts(demos))
    assert loss == pytest.approx(2.0 * np.log(0.2), abs=1e-12)


def test_loss_of_certain_policy_is_zero():
    world = _tiny_world()
    demos = DemoSet((_demo((0, 3), (1, 4)),), world, 2, 1)
    probs = np.zeros((4, 5))
    probs[0, 3] = 1.0
    probs[1, 4] = 1.0
    probs[2, 0] = 1.0
    probs[3, 0] = 1.0
    assert maxent_data_loss(StochasticPolicy(probs), expert_counts(demos)) == 0.0


def test_loss_matches_explicit_double_loop():
    rng = np.random.default_rng(6)
    pairs = rng.random((4, 5)) * (rng.random((4, 5)) > 0.4)
    probs = rng.dirichlet(np.ones(5), size=4)
    expert = VisitationCounts(pairs.sum(axis=1), pairs)
    expected = 0.0
    for s in range(4):
        for a in range(5):
            if pairs[s, a] > 0.0:
                expected += pairs[s, a] * np.log(probs[s, a])
    assert maxent_data_loss(StochasticPolicy(probs), expert) == pytest.approx(
        expected, rel=1e-15
    )


def test_loss_is_minus_infinity_on_unsupported_action():
    pairs = np.zeros((2, 5))
    pairs[0, 1] = 1.0
    expert = VisitationCounts(pairs.sum(axis=1), pairs)
    probs = np.zeros((2, 5))
    probs[:, 0] = 1.0
    assert maxent_data_loss(StochasticPolicy(probs), expert) == float("-inf")


def test_loss_requires_state_action_split():
    expert = VisitationCounts(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        maxent_data_loss(_uniform_policy(2, 5), expert)


# error signal


def test_gradient_is_zero_when_counts_agree():
    counts = VisitationCounts(np.array([0.3, 0.7]))
    assert np.array_equal(
        data_gradient_wrt_reward(counts, counts), np.zeros(2)
    )


def test_gradient_is_count_difference():
    expert = VisitationCounts(np.array([2.0, 0.0]))
    expected = VisitationCounts(np.array([1.0, 1.0]))
    assert np.array_equal(
        data_gradient_wrt_reward(expert, expected), np.array([1.0, -1.0])
    )


def test_gradient_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        data_gradient_wrt_reward(
            VisitationCounts(np.array([1.0])), VisitationCounts(np.array([1.0, 0.0]))
        )


def test_gradient_sup_norm_scans_all_blocks():
    grads = [
        (np.array([[0.1, -0.4]]), np.array([0.2])),
        (np.array([[0.3]]), np.array([-0.9])),
    ]
    assert gradient_sup_norm(grads) == 0.9


# full-chain gradient check
#
# In a goal-based undiscounted deterministic chain, with expected counts
# propagated until all mass is absorbed and the start distribution equal
# to the empirical demo starts, expert-minus-expected visitation is the
# exact gradient of the demo log-likelihood with respect to the rewards.
# Perturbing the model weights and re-solving the MDP must therefore
# reproduce the backpropagated gradient to finite-difference accuracy.


def _chain_setup(seed):
    mdp = with_goal(make_gridworld(1, 4, 1.0), 3)
    mdp = dataclasses.replace(
        mdp, start_distribution=np.array([0.5, 0.5, 0.0, 0.0])
    )
    # demos: 0-1-2-goal and 1-2-goal, all moves to the right, averaged
    pairs = np.zeros((4, 5))
    pairs[0, 3] = 0.5
    pairs[1, 3] = 1.0
    pairs[2, 3] = 1.0
    expert = VisitationCounts(pairs.sum(axis=1), pairs)
    features = np.eye(4)
    params = feature_network(4, (5,), seed=seed)
    for spec, bias in zip(params.layers, params.biases):
        if spec.activation == "relu":
            bias[:] = 0.1  # keep preactivations off the relu kink
    # without a discount the trajectory sum over endless wandering paths
    # only converges when each step costs more than the action entropy,
    # so anchor the rewards well below -log(n_actions)
    params.biases[-1][:] = -2.5
    return mdp, expert, features, params


def _demo_likelihood(mdp, expert, features, params):
    reward, _ = forward(params, features)
    _, policy = soft_value_iteration(mdp, reward, 1e-12, 20000)
    return maxent_data_loss(policy, expert)


def _analytic_chain_gradient(mdp, expert, features, params):
    reward, cache = forward(params, features)
    _, policy = soft_value_iteration(mdp, reward, 1e-12, 20000)
    expected = propagate_policy(mdp, policy, 300)
    error_signal = data_gradient_wrt_reward(expert, expected)
    return backward(params, cache, error_signal)


def test_backpropagated_gradient_matches_numeric_likelihood_slope():
    mdp, expert, features, params = _chain_setup(seed=2)
    margin = min(
        np.min(np.abs(z))
        for z, spec in zip(forward(params, features)[1].pre_activations, params.layers)
        if spec.activation == "relu"
    )
    assert margin > 1e-3
    analytic = _analytic_chain_gradient(mdp, expert, features, params)
    step = 1e-5
    worst = 0.0
    for (grad_w, grad_b), weights, biases in zip(
        analytic, params.weights, params.biases
    ):
        for grad, block in ((grad_w, weights), (grad_b, biases)):
            flat = block.reshape(-1)
            for i in range(flat.size):
                kept = flat[i]
                flat[i] = kept + step
                upper = _demo_likelihood(mdp, expert, features, params)
                flat[i] = kept - step
                lower = _demo_likelihood(mdp, expert, features, params)
                flat[i] = kept
                numeric = (upper - lower) / (2.0 * step)
                scale = max(abs(numeric), 1e-8)
                worst = max(worst, abs(grad.reshape(-1)[i] - numeric) / scale)
    assert worst < 1e-4


def test_gradient_step_raises_demo_likelihood():
    mdp, expert, features, params = _chain_setup(seed=5)
    before = _demo_likelihood(mdp, expert, features, params)
    grads = _analytic_chain_gradient(mdp, expert, features, params)
    for (grad_w, grad_b), weights, biases in zip(grads, params.weights, params.biases):
        weights += 1e-3 * grad_w
        biases += 1e-3 * grad_b
    assert _demo_likelihood(mdp, expert, features, params) > before


def test_identity_features_pass_error_signal_through_linear_model():
    mdp, expert, features, _ = _chain_setup(seed=0)
    params = linear_model(4, seed=3)
    reward, cache = forward(params, features)
    _, policy = soft_value_iteration(mdp, reward, 1e-12, 20000)
    expected = propagate_policy(mdp, policy, 300)
    error_signal = data_gradient_wrt_reward(expert, expected)
    grads = backward(params, cache, error_signal)
    assert np.allclose(grads[0][0][:, 0], error_signal, atol=1e-15)
    assert grads[0][1][0] == pytest.approx(error_signal.sum(), abs=1e-12)


# the training loop


def _small_run(iters, epsilon=1e-6, **kwargs):
    world = generate_world(WorldSpec("objectworld", 8, n_colors=2, n_objects=4), 3)
    demos = sample_demonstrations(world, 16, 8, 0.3, derive_seed(3, DEMO_STREAM))
    params = linear_model(2, seed=1)
    opt = AdaGradState.for_params(params, learning_rate=0.1)
    return world, train(world, demos, params, opt, iters, epsilon, **kwargs)


def test_train_zero_iterations_returns_params_untouched():
    world = generate_world(WorldSpec("objectworld", 6, n_colors=2, n_objects=3), 7)
    demos = sample_demonstrations(world, 4, 5, 0.3, 11)
    params = linear_model(2, seed=2)
    frozen = [w.copy() for w in params.weights]
    report = train(world, demos, params, AdaGradState.for_params(params), 0, 1e-4)
    assert report.records == []
    assert report.params is params
    for now, before in zip(params.weights, frozen):
        assert np.array_equal(now, before)


def test_train_records_before_stepping():
    # a huge epsilon stops the loop after one record, before any update
    world = generate_world(WorldSpec("objectworld", 6, n_colors=2, n_objects=3), 7)
    demos = sample_demonstrations(world, 4, 5, 0.3, 11)
    params = linear_model(2, seed=2)
    frozen = [w.copy() for w in params.weights]
    report = train(world, demos, params, AdaGradState.for_params(params), 50, 1e9)
    assert len(report.records) == 1
    for now, before in zip(params.weights, frozen):
        assert np.array_equal(now, before)


def test_train_improves_likelihood_and_shrinks_gradient():
    _, report = _small_run(60)
    first, last = report.records[0], report.records[-1]
    assert last.loss > first.loss
    assert last.grad_norm < first.grad_norm
    assert not report.degenerate
    # late iterations should climb steadily, not thrash
    tail = [rec.loss for rec in report.records[-6:]]
    assert all(b >= a - 0.02 for a, b in zip(tail, tail[1:]))


def test_train_default_horizon_is_demo_length():
    _, explicit = _small_run(3, horizon=8)
    _, defaulted = _small_run(3)
    for a, b in zip(explicit.records, defaulted.records):
        assert a == b


def test_train_iteration_numbers_and_evd_are_recorded():
    _, report = _small_run(4)
    assert [rec.iteration for rec in report.records] == [0, 1, 2, 3]
    assert all(rec.evd_train >= 0.0 for rec in report.records)
    assert all(np.isfinite(rec.grad_norm) for rec in report.records)


def test_train_rejects_bad_arguments():
    world = generate_world(WorldSpec("objectworld", 6, n_colors=2, n_objects=3), 7)
    demos = sample_demonstrations(world, 4, 5, 0.3, 11)
    params = linear_model(2, seed=2)
    with pytest.raises(ValueError):
        train(world, demos, params, AdaGradState.for_params(params), -1, 1e-4)
    with pytest.raises(ValueError):
        train(world, demos, params, AdaGradState.for_params(params), 5, 0.0)


def test_train_divergence_carries_iteration_and_partial_history():
    world = generate_world(WorldSpec("objectworld", 4, n_colors=2, n_objects=2), 5)
    demos = sample_demonstrations(world, 4, 4, 0.3, 13)
    params = linear_model(2, seed=0)
    params.weights[0][:] = 1e18  # forces an exploding value sweep
    with pytest.raises(NumericDivergenceError) as exc_info:
        train(world, demos, params, AdaGradState.for_params(params), 10, 1e-6)
    assert exc_info.value.iteration == 0
    assert exc_info.value.partial_report.records == []


def test_train_resolves_raw_features_for_conv_models():
    from gridirl.nets import conv_network

    world = generate_world(WorldSpec("binaryworld", 4), 2)
    demos = sample_demonstrations(world, 4, 4, 0.3, 17)
    reports = []
    for kind in (None, "raw"):
        params = conv_network(1, (3,), (4,), seed=21)
        opt = AdaGradState.for_params(params)
        reports.append(train(world, demos, params, opt, 2, 1e-6, feature_kind=kind))
    assert reports[0].records == reports[1].records


# report serialization


def test_write_csv_round_trips_exact_floats(tmp_path):
    report = TrainReport(
        records=[
            TrainRecord(0, -1.5, 0.1, 2.0),
            TrainRecord(1, float("-inf"), 0.25, 0.0),
        ]
    )
    path = tmp_path / "report.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,loss,grad_norm,evd_train"
    assert lines[1] == "0,-1.5,0.10000000000000001,2"
    assert lines[2] == "1,-inf,0.25,0"
    for line in lines[1:]:
        _, loss, grad_norm, _ = line.split(",")
        if loss != "-inf":
            assert float(grad_norm) in (0.1, 0.25)
