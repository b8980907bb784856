#!/usr/bin/env python3
"""
Deep Q-network agent (SON fault management)
A two-hidden-layer ReLU network written directly in numpy: forward pass,
backpropagation of the squared TD error and an Adam update.
"""
import logging
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np

from agents.base_agent import AgentKind, BaseAgent
from agents.policy import EpsilonSchedule, select_action_verbose
from agents.replay_memory import Experience, ReplayMemory
from config.run_config import AgentConfig
from environments.base_environment import Observation
from infrastructure.artifact_store import load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

PARAMETER_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")
# Step size above which Adam updates on this network tend to oscillate
AGGRESSIVE_STEP_SIZE = 1e-2
CONSERVATIVE_STEP_SIZE = 1e-3

Params = Dict[str, np.ndarray]


class DqnModel:
    """input (m) -> H -> ReLU -> H -> ReLU -> n Q-values"""

    def __init__(self, input_size: int, output_size: int, hidden_width: int = 24,
                 rng: Optional[np.random.Generator] = None, params: Optional[Params] = None):
        self.input_size = input_size
        self.output_size = output_size
        self.hidden_width = hidden_width
        if params is not None:
            self._check_shapes(params)
            self.params = {name: np.array(params[name], dtype=float) for name in PARAMETER_NAMES}
        else:
            self.params = self._glorot_init(rng if rng is not None else np.random.default_rng(0))

    @property
    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        m, h, n = self.input_size, self.hidden_width, self.output_size
        return {"w1": (m, h), "b1": (h,), "w2": (h, h), "b2": (h,), "w3": (h, n), "b3": (n,)}

    def _check_shapes(self, params: Params) -> None:
        for name, shape in self.shapes.items():
            if name not in params or np.shape(params[name]) != shape:
                raise ValueError(f"parameter {name} must have shape {shape}, got {np.shape(params.get(name))}")

    def _glorot_init(self, rng: np.random.Generator) -> Params:
        params: Params = {}
        for name, shape in self.shapes.items():
            if name.startswith("w"):
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape)
            else:
                params[name] = np.zeros(shape)
        return params

    def copy(self) -> "DqnModel":
        return DqnModel(self.input_size, self.output_size, self.hidden_width, params=self.params)

    def _as_batch(self, states) -> np.ndarray:
        x = np.asarray(states, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_size:
            raise ValueError(f"expected input of width {self.input_size}, got shape {np.shape(states)}")
        return x

    def _forward_cache(self, x: np.ndarray) -> Tuple[np.ndarray, ...]:
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["w2"] + p["b2"]
        h2 = np.maximum(z2, 0.0)
        q = h2 @ p["w3"] + p["b3"]
        return z1, h1, z2, h2, q

    def forward(self, states) -> np.ndarray:
        single = np.ndim(states) == 1
        q = self._forward_cache(self._as_batch(states))[-1]
        return q[0] if single else q

    def loss_and_gradients(self, states, actions, targets) -> Tuple[float, Params]:
        """Mean squared error between Q(s_j, a_j) and fixed targets y_j, with its gradients."""
        x = self._as_batch(states)
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        batch = x.shape[0]
        if actions.shape != (batch,) or targets.shape != (batch,):
            raise ValueError("actions and targets must have one entry per state")

        z1, h1, z2, h2, q = self._forward_cache(x)
        rows = np.arange(batch)
        error = q[rows, actions] - targets
        loss = float(np.mean(error ** 2))

        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * error / batch
        p = self.params
        grads: Params = {"w3": h2.T @ dq, "b3": dq.sum(axis=0)}
        dz2 = (dq @ p["w3"].T) * (z2 > 0)
        grads["w2"], grads["b2"] = h1.T @ dz2, dz2.sum(axis=0)
        dz1 = (dz2 @ p["w2"].T) * (z1 > 0)
        grads["w1"], grads["b1"] = x.T @ dz1, dz1.sum(axis=0)
        return loss, grads

    def loss(self, states, actions, targets) -> float:
        x = self._as_batch(states)
        q = self._forward_cache(x)[-1]
        rows = np.arange(x.shape[0])
        return float(np.mean((q[rows, np.asarray(actions, dtype=int)] - np.asarray(targets, dtype=float)) ** 2))


def numerical_gradient(loss_fn: Callable[[], float], params: Params, eps: float = 1e-6) -> Params:
    """Central finite differences of loss_fn with respect to every entry of params (mutated in place and restored)."""
    grads: Params = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        it = np.nditer(value, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            original = value[idx]
            value[idx] = original + eps
            upper = loss_fn()
            value[idx] = original - eps
            lower = loss_fn()
            value[idx] = original
            grad[idx] = (upper - lower) / (2.0 * eps)
        grads[name] = grad
    return grads


class AdamOptimizer:
    def __init__(self, step_size: float = CONSERVATIVE_STEP_SIZE, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if step_size <= 0:
            raise ValueError(f"step size must be positive, got {step_size}")
        if step_size > AGGRESSIVE_STEP_SIZE:
            logger.warning(f"⚠️ Adam step size {step_size} is aggressive; {CONSERVATIVE_STEP_SIZE} is the stable profile")
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    @classmethod
    def from_config(cls, config: AgentConfig) -> "AdamOptimizer":
        return cls(config.step_size, config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad ** 2
            m_hat = self.m[name] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** self.t)
            params[name] -= self.step_size * m_hat / (np.sqrt(v_hat) + self.eps)


def td_targets(snapshot: DqnModel, rewards: np.ndarray, next_states: np.ndarray,
               terminals: np.ndarray, discount: float) -> np.ndarray:
    bootstrap = discount * np.max(snapshot.forward(next_states), axis=1)
    return np.where(terminals, rewards, rewards + bootstrap)


def dqn_train_step(model: DqnModel, memory: ReplayMemory, optimizer: AdamOptimizer,
                   rng: np.random.Generator, discount: float) -> float:
    """One Adam update on a uniformly sampled batch; targets use weights frozen at the start of the step."""
    if not memory.ready:
        raise ValueError(f"replay memory holds {len(memory)} experiences, need {memory.batch_size}")
    snapshot = model.copy()
    batch = memory.sample(rng)
    targets = td_targets(snapshot, batch.rewards, batch.next_states, batch.terminals, discount)
    loss, grads = model.loss_and_gradients(batch.states, batch.actions, targets)
    optimizer.step(model.params, grads)
    if not all(np.all(np.isfinite(v)) for v in model.params.values()):
        raise FloatingPointError("DQN weights became non-finite")
    return loss


class DqnAgent(BaseAgent):
    learns = True

    def __init__(self, config: AgentConfig, rng: np.random.Generator, input_size: int = 3, action_count: int = 5):
        super().__init__(AgentKind.DQN, config, rng, state_count=input_size, action_count=action_count)
        self.model = DqnModel(input_size, action_count, config.hidden_width, rng=rng)
        self.optimizer = AdamOptimizer.from_config(config)
        self.memory = ReplayMemory(config.replay_capacity, config.batch_size)
        self.schedule = EpsilonSchedule.from_config(config)

    @property
    def epsilon(self) -> float:
        return self.schedule.epsilon

    def greedy(self) -> "DqnAgent":
        self.schedule.pin(self.config.eval_epsilon)
        return super().greedy()

    def end_episode(self) -> None:
        super().end_episode()
        if self.training:
            self.schedule.step()

    def act(self, observation: Observation) -> int:
        action, explored = select_action_verbose(self.model.forward(observation.vector), self.schedule, self.rng)
        self.metrics.decisions += 1
        self.metrics.explorations += int(explored)
        return action

    def observe(self, observation: Observation, action: int, reward: float,
                next_observation: Observation, terminal: bool, truncated: bool = False) -> Optional[float]:
        super().observe(observation, action, reward, next_observation, terminal, truncated)
        if not self.training:
            return None
        self.memory.push(Experience(observation.vector, action, reward, next_observation.vector,
                                    terminal and not truncated))
        if not self.memory.ready:
            return None
        loss = dqn_train_step(self.model, self.memory, self.optimizer, self.rng, self.config.discount)
        self.metrics.updates += 1
        self.metrics.total_loss += loss
        return loss

    def model_bytes(self) -> int:
        return int(sum(value.nbytes for value in self.model.params.values()))

    def save(self, path: Union[str, Path], seed: int = 0) -> Path:
        hyperparameters = {
            "hidden_width": self.model.hidden_width,
            "step_size": self.optimizer.step_size,
            "discount": self.config.discount,
            "epsilon": self.schedule.epsilon,
            "input_size": self.model.input_size,
        }
        return save_checkpoint(path, "dqn", self.model.params, seed, hyperparameters)

    def load(self, path: Union[str, Path]) -> None:
        checkpoint = load_checkpoint(path, expected_kind="dqn")
        try:
            self.model = DqnModel(self.model.input_size, self.model.output_size, self.model.hidden_width,
                                  params=checkpoint.arrays)
        except ValueError as e:
            raise ValueError(f"checkpoint {path} does not fit this network: {e}") from e
        self.logger.info(f"Loaded DQN weights from {path}")
