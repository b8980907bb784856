import logging

import numpy as np
import pytest
from scipy.stats import chisquare

from agents.dqn_agent import (
    AdamOptimizer,
    DqnAgent,
    DqnModel,
    dqn_train_step,
    numerical_gradient,
    td_targets,
)
from agents.policy import EpsilonSchedule, greedy_action, select_action
from agents.q_learning_agent import QLearningAgent, QTable, tabular_update
from agents.replay_memory import Experience, ReplayMemory
from config.run_config import AgentConfig
from environments.base_environment import Observation
from infrastructure.artifact_store import CheckpointError

# Deterministic three-state MDP: (state, action) -> (next_state, reward, terminal)
TOY_MDP = {
    (0, 0): (1, 0.0, False),
    (0, 1): (2, 0.5, False),
    (1, 0): (0, 1.0, True),
    (1, 1): (0, 0.0, False),
    (2, 0): (0, 0.0, True),
    (2, 1): (0, 0.2, True),
}
TOY_DISCOUNT = 0.9
TOY_Q_STAR = np.array([[0.9, 0.68], [1.0, 0.81], [0.0, 0.2]])


def one_hot(state, size=3):
    vector = np.zeros(size)
    vector[state] = 1.0
    return vector


def observation(state):
    return Observation(state=state, vector=one_hot(state), tti=0)


# tabular Q-learning

def test_bellman_update_from_zero_table():
    table = QTable(3, 5, learning_rate=0.2, discount=0.995)
    assert table.update(0, 4, 1.0, 1) == pytest.approx(0.2)


def test_bellman_update_bootstraps_unless_terminal():
    table = QTable(3, 5, learning_rate=0.2, discount=0.995)
    table.values[1] = [0.0, 5.0, 0.0, 0.0, 0.0]
    assert table.update(0, 2, 1.0, 1) == pytest.approx(0.2 * (1.0 + 0.995 * 5.0))
    table.values[2, 0] = 1.0
    assert tabular_update(table, 2, 0, 0.0, 1, terminal=True).values[2, 0] == pytest.approx(0.8)


def test_bellman_update_worked_example():
    table = QTable(3, 5, learning_rate=0.2, discount=0.995)
    table.values[0, 1] = 1.0
    table.values[2] = [0.0, 0.0, 1.0, 0.0, 0.0]
    assert table.update(0, 1, 0.0, 2) == pytest.approx(0.999, abs=1e-12)


def test_qtable_validates_hyperparameters():
    with pytest.raises(ValueError):
        QTable(3, 5, learning_rate=1.0)
    with pytest.raises(ValueError):
        QTable(3, 5, discount=1.0)
    with pytest.raises(ValueError):
        QTable(3, 5, values=np.zeros((2, 5)))


def test_tabular_q_learning_solves_toy_mdp():
    rng = np.random.default_rng(0)
    table = QTable(3, 2, learning_rate=0.5, discount=TOY_DISCOUNT)
    state = 0
    for _ in range(5000):
        action = int(rng.integers(2))
        next_state, reward, terminal = TOY_MDP[(state, action)]
        table.update(state, action, reward, next_state, terminal)
        state = int(rng.integers(3)) if terminal else next_state
    np.testing.assert_allclose(table.values, TOY_Q_STAR, atol=1e-3)
    assert [greedy_action(row) for row in table.values] == [0, 0, 1]


# exploration

def test_epsilon_schedule_decays_to_floor():
    schedule = EpsilonSchedule(1.0, 0.99, 0.01)
    assert schedule.step() == pytest.approx(0.99)
    for _ in range(1000):
        schedule.step()
    assert schedule.epsilon == pytest.approx(0.01)
    with pytest.raises(ValueError):
        EpsilonSchedule(0.005, 0.99, 0.01)


def test_greedy_ties_go_to_lowest_action():
    assert greedy_action([0, 3, 1, 1, 2]) == 1
    assert greedy_action([2, 2, 1]) == 0
    schedule = EpsilonSchedule(0.0, 0.99, 0.0)
    rng = np.random.default_rng(0)
    assert all(select_action([0, 3, 1, 1, 2], schedule, rng) == 1 for _ in range(50))


def test_selecting_an_action_leaves_epsilon_alone():
    schedule = EpsilonSchedule(0.5, 0.9, 0.01)
    rng = np.random.default_rng(2)
    for _ in range(100):
        select_action([0.0, 1.0, 0.5], schedule, rng)
    assert schedule.epsilon == 0.5


def test_greedy_choice_ignores_a_constant_shift():
    rng = np.random.default_rng(6)
    for _ in range(500):
        row = rng.integers(-3, 4, size=5).astype(float)
        shift = float(rng.uniform(-100.0, 100.0))
        assert greedy_action(row + shift) == greedy_action(row)


def test_full_exploration_is_uniform():
    schedule = EpsilonSchedule(1.0, 1.0, 1.0)
    rng = np.random.default_rng(1)
    counts = np.bincount([select_action([0, 3, 1, 1, 2], schedule, rng) for _ in range(10_000)], minlength=5)
    assert np.all(np.abs(counts / 10_000 - 0.2) < 0.02)


def test_q_learning_agent_decays_epsilon_once_per_episode():
    agent = QLearningAgent(AgentConfig(), np.random.default_rng(0))
    action = agent.act(observation(0))
    agent.act(observation(1))
    assert agent.epsilon == 1.0
    agent.observe(observation(0), action, 1.0, observation(1), False)
    assert agent.table.values[0, action] == pytest.approx(0.2)
    agent.end_episode()
    assert agent.epsilon == pytest.approx(0.99)
    agent.greedy()
    assert agent.epsilon == pytest.approx(0.01)
    agent.observe(observation(0), action, 1.0, observation(1), False)
    agent.end_episode()
    assert agent.table.values[0, action] == pytest.approx(0.2)
    assert agent.epsilon == pytest.approx(0.01)


def test_greedy_evaluation_uses_the_configured_epsilon():
    for agent_cls in (QLearningAgent, DqnAgent):
        agent = agent_cls(AgentConfig(eval_epsilon=0.0, step_size=1e-3), np.random.default_rng(0))
        agent.greedy()
        assert agent.epsilon == 0.0
        actions = {agent.act(observation(k % 3)) for k in range(30)}
        assert agent.metrics.explorations == 0
        assert len(actions) <= 3
    with pytest.raises(ValueError):
        EpsilonSchedule().pin(1.5)


def test_truncated_episodes_still_bootstrap():
    agent = QLearningAgent(AgentConfig(), np.random.default_rng(0))
    agent.table.values[1] = [0.0, 5.0, 0.0, 0.0, 0.0]
    agent.observe(observation(0), 2, 1.0, observation(1), terminal=True, truncated=True)
    assert agent.table.values[0, 2] == pytest.approx(0.2 * (1.0 + 0.995 * 5.0))
    agent.observe(observation(0), 3, 1.0, observation(1), terminal=True)
    assert agent.table.values[0, 3] == pytest.approx(0.2)

    dqn = DqnAgent(AgentConfig(batch_size=4, replay_capacity=16, step_size=1e-3), np.random.default_rng(0))
    dqn.observe(observation(0), 1, -1.0, observation(1), terminal=True, truncated=True)
    dqn.observe(observation(1), 1, 10.0, observation(0), terminal=True)
    assert [e.terminal for e in dqn.memory._buffer] == [False, True]


# DQN model

def test_zero_weights_give_zero_q_values():
    params = {name: np.zeros(shape) for name, shape in DqnModel(3, 5, 24).shapes.items()}
    model = DqnModel(3, 5, 24, params=params)
    np.testing.assert_array_equal(model.forward(np.ones(3)), np.zeros(5))


def test_forward_pass_matches_hand_computation():
    params = {
        "w1": np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        "b1": np.zeros(2),
        "w2": np.array([[1.0, -1.0], [0.0, 1.0]]),
        "b2": np.array([0.0, -10.0]),
        "w3": np.array([[1.0, 2.0], [3.0, 4.0]]),
        "b3": np.array([0.5, -0.5]),
    }
    model = DqnModel(3, 2, hidden_width=2, params=params)
    np.testing.assert_allclose(model.forward(np.array([1.0, -2.0, 3.0])), [4.5, 7.5])
    assert model.forward(np.ones((4, 3))).shape == (4, 2)
    with pytest.raises(ValueError):
        model.forward(np.ones(4))


def test_glorot_init_is_bounded_with_zero_biases():
    model = DqnModel(7, 5, 24, rng=np.random.default_rng(0))
    assert np.all(np.abs(model.params["w1"]) <= np.sqrt(6.0 / (7 + 24)))
    assert np.all(model.params["b2"] == 0.0)
    with pytest.raises(ValueError):
        DqnModel(3, 5, 24, params={"w1": np.zeros((3, 24))})


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(10):
        inputs, width, batch = int(rng.integers(2, 8)), int(rng.integers(3, 9)), int(rng.integers(1, 12))
        model = DqnModel(inputs, 5, hidden_width=width, rng=rng)
        states = rng.normal(size=(batch, inputs))
        actions = rng.integers(0, 5, size=batch)
        targets = rng.normal(size=batch)
        _, analytic = model.loss_and_gradients(states, actions, targets)
        numeric = numerical_gradient(lambda: model.loss(states, actions, targets), model.params)
        for name in analytic:
            np.testing.assert_allclose(analytic[name], numeric[name], rtol=1e-4, atol=1e-7)


def test_td_targets_drop_bootstrap_on_terminal():
    params = {name: np.zeros(shape) for name, shape in DqnModel(3, 2, 4).shapes.items()}
    params["b3"] = np.array([1.0, 3.0])
    snapshot = DqnModel(3, 2, 4, params=params)
    targets = td_targets(snapshot, np.array([1.0, 1.0]), np.ones((2, 3)), np.array([False, True]), 0.5)
    np.testing.assert_allclose(targets, [2.5, 1.0])


def test_adam_fits_a_single_terminal_transition():
    model = DqnModel(3, 5, 24, rng=np.random.default_rng(0))
    optimizer = AdamOptimizer(step_size=1e-3)
    state = one_hot(1)[None, :]
    for _ in range(500):
        _, grads = model.loss_and_gradients(state, [2], [1.0])
        optimizer.step(model.params, grads)
    assert model.loss(state, [2], [1.0]) < 1e-4


def test_aggressive_step_size_warns(caplog):
    with caplog.at_level(logging.WARNING, logger="agents.dqn_agent"):
        AdamOptimizer(step_size=0.2)
    assert "aggressive" in caplog.text
    with pytest.raises(ValueError):
        AdamOptimizer(step_size=0.0)


def test_dqn_solves_toy_mdp():
    rng = np.random.default_rng(3)
    model = DqnModel(3, 2, 24, rng=rng)
    optimizer = AdamOptimizer(step_size=5e-3)
    memory = ReplayMemory(capacity=64, batch_size=36)
    for _ in range(6):
        for (state, action), (next_state, reward, terminal) in TOY_MDP.items():
            memory.push(Experience(one_hot(state), action, reward, one_hot(next_state), terminal))
    for _ in range(3000):
        dqn_train_step(model, memory, optimizer, rng, TOY_DISCOUNT)
    q = model.forward(np.eye(3))
    assert [greedy_action(row) for row in q] == [0, 0, 1]
    np.testing.assert_allclose(q, TOY_Q_STAR, atol=0.05)


def test_train_step_needs_a_full_batch():
    memory = ReplayMemory(capacity=64, batch_size=32)
    memory.push(Experience(one_hot(0), 0, 0.0, one_hot(1), False))
    with pytest.raises(ValueError):
        dqn_train_step(DqnModel(3, 5), memory, AdamOptimizer(), np.random.default_rng(0), 0.9)


# replay memory

def test_replay_memory_overwrites_oldest_and_samples_without_replacement():
    memory = ReplayMemory(capacity=40, batch_size=32)
    for k in range(50):
        memory.push(Experience(one_hot(0), 0, float(k), one_hot(1), False))
    assert len(memory) == 40
    rewards = {e.reward for e in memory._buffer}
    assert rewards == set(float(k) for k in range(10, 50))
    batch = memory.sample(np.random.default_rng(0))
    assert len(set(batch.indices.tolist())) == 32
    assert batch.states.shape == (32, 3)
    with pytest.raises(ValueError):
        ReplayMemory(capacity=32, batch_size=32)


def test_replay_sampling_is_uniform_over_the_buffer():
    memory = ReplayMemory(capacity=40, batch_size=32)
    for k in range(40):
        memory.push(Experience(one_hot(0), 0, float(k), one_hot(1), False))
    rng = np.random.default_rng(8)
    counts = np.zeros(40, dtype=int)
    for _ in range(2000):
        np.add.at(counts, memory.sample(rng, batch_size=8).indices, 1)
    assert counts.sum() == 16_000
    assert chisquare(counts).pvalue > 1e-4


def test_dqn_agent_trains_once_memory_is_ready():
    config = AgentConfig(batch_size=4, replay_capacity=16, step_size=1e-3)
    agent = DqnAgent(config, np.random.default_rng(0))
    for k in range(6):
        action = agent.act(observation(k % 3))
        agent.observe(observation(k % 3), action, -1.0, observation((k + 1) % 3), False)
    assert agent.metrics.updates == 3
    assert agent.metrics.decisions == 6
    summary = agent.summary()
    assert summary["agent"] == "dqn"
    assert summary["avg_loss"] >= 0.0


# checkpoints

def test_qtable_checkpoint_round_trip(tmp_path):
    agent = QLearningAgent(AgentConfig(), np.random.default_rng(0))
    agent.table.values[:] = np.arange(15, dtype=float).reshape(3, 5) / 7.0
    path = agent.save(tmp_path / "model.ckpt", seed=5)
    assert (tmp_path / "model.csv").is_file()
    restored = QLearningAgent(AgentConfig(), np.random.default_rng(1))
    restored.load(path)
    np.testing.assert_array_equal(restored.table.values, agent.table.values)


def test_dqn_checkpoint_round_trip(tmp_path):
    config = AgentConfig(step_size=1e-3)
    agent = DqnAgent(config, np.random.default_rng(0))
    path = agent.save(tmp_path / "dqn.ckpt")
    restored = DqnAgent(config, np.random.default_rng(9))
    restored.load(path)
    for name, value in agent.model.params.items():
        np.testing.assert_array_equal(restored.model.params[name], value)
    with pytest.raises(CheckpointError):
        QLearningAgent(AgentConfig(), np.random.default_rng(0)).load(path)
    with pytest.raises(ValueError):
        DqnAgent(config, np.random.default_rng(0), input_size=7).load(path)


def test_malformed_checkpoint_header_is_rejected(tmp_path):
    path = tmp_path / "broken.ckpt"
    path.write_text("not a header\n1 2 3\n", encoding="utf-8")
    with pytest.raises(CheckpointError):
        QLearningAgent(AgentConfig(), np.random.default_rng(0)).load(path)
    path.write_text('{"format": "celltune-checkpoint", "version": 2}\n', encoding="utf-8")
    with pytest.raises(CheckpointError):
        QLearningAgent(AgentConfig(), np.random.default_rng(0)).load(path)
