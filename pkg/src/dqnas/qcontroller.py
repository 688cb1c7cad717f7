"""Double-DQN decision logic: state encoding, epsilon-greedy selection,
one-step lookahead targets, and periodic target-network synchronization.

The default target rule follows the update as published (the best next
action is both chosen and evaluated by the target network); the canonical
double-estimator variant (choose with the main network, evaluate with the
target) is available behind `double_dqn_canonical`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, EmptyMask
from .neural_core import QNetParams, qnet_forward
from .search_space import (
    KIND_ORDINAL,
    ActionVocabulary,
    LayerKind,
    LayerSpec,
)


@dataclass(frozen=True)
class PolicyConfig:
    epsilon: float = 1.0
    decay: float = 0.05
    epsilon_min: float = 0.1

    def validate(self) -> None:
        if not 0.0 <= self.epsilon_min <= self.epsilon <= 1.0:
            raise ConfigError(
                f"need 0 <= epsilon_min <= epsilon <= 1, got "
                f"{self.epsilon_min}/{self.epsilon}"
            )
        if self.decay <= 0.0:
            raise ConfigError("epsilon decay must be positive")


@dataclass(frozen=True)
class BellmanConfig:
    gamma: float = 0.9
    sync_period: int = 5
    double_dqn_canonical: bool = False

    def validate(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.sync_period < 1:
            raise ConfigError("sync period must be at least 1")


@dataclass(frozen=True)
class PrefixSnapshot:
    """The mask-relevant summary of a prefix, stored with experiences so the
    allowed-action mask of a next state can be rebuilt during training."""

    last_kind: int | None  # LayerKind ordinal
    seen_flatten: bool
    last_was_pooling: bool
    depth: int

    def to_json(self) -> list:
        return [self.last_kind, self.seen_flatten, self.last_was_pooling, self.depth]

    @classmethod
    def from_json(cls, data: Sequence) -> "PrefixSnapshot":
        last_kind, seen_flatten, last_was_pooling, depth = data
        return cls(
            last_kind=None if last_kind is None else int(last_kind),
            seen_flatten=bool(seen_flatten),
            last_was_pooling=bool(last_was_pooling),
            depth=int(depth),
        )


@dataclass
class Experience:
    """One (state, action, reward, next state) transition. Terminal
    transitions carry no next state."""

    state: np.ndarray
    action: int
    reward: float = 0.0
    next_state: np.ndarray | None = None
    next_prefix: PrefixSnapshot | None = None

    @property
    def terminal(self) -> bool:
        return self.next_state is None

    def to_json(self) -> dict:
        return {
            "state": np.asarray(self.state).tolist(),
            "action": int(self.action),
            "reward": float(self.reward),
            "next_state": None
            if self.next_state is None
            else np.asarray(self.next_state).tolist(),
            "next_prefix": None if self.next_prefix is None else self.next_prefix.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "Experience":
        return cls(
            state=np.asarray(data["state"], dtype=np.float64),
            action=int(data["action"]),
            reward=float(data["reward"]),
            next_state=None
            if data["next_state"] is None
            else np.asarray(data["next_state"], dtype=np.float64),
            next_prefix=None
            if data["next_prefix"] is None
            else PrefixSnapshot.from_json(data["next_prefix"]),
        )


@dataclass
class ControllerState:
    main: QNetParams
    target: QNetParams
    policy: PolicyConfig
    epochs_since_sync: int = 0


class StateEncoder:
    """Encodes the last layer of a prefix as normalized ordinals.

    Slot 0 is the layer kind's one-based ordinal over all kinds; the remaining
    slots are each present field's one-based ordinal within its configured
    domain, every slot divided by its domain size so values land in (0, 1].
    The vector is right-padded with zeros (or truncated) to `width`.
    """

    def __init__(self, vocab: ActionVocabulary, width: int):
        if width < 1:
            raise ConfigError("state width must be at least 1")
        self.width = width
        self._vocab = vocab
        self._num_kinds = len(LayerKind)

    def encode_layer(self, spec: LayerSpec) -> np.ndarray:
        values = [(KIND_ORDINAL[spec.kind] + 1) / self._num_kinds]
        domains = self._vocab.config.field_domains(spec.kind)
        for name, domain in domains.items():
            value = getattr(spec, name)
            try:
                ordinal = domain.index(value) + 1
            except ValueError:
                ordinal = 0  # out-of-domain value (e.g. parsed wire form)
            values.append(ordinal / len(domain))
        vec = np.zeros(self.width)
        take = min(len(values), self.width)
        vec[:take] = values[:take]
        return vec

    def encode(self, prefix: Sequence[LayerSpec]) -> np.ndarray:
        """State tensor (1, width); the zero vector for an empty prefix."""
        if not prefix:
            return np.zeros((1, self.width))
        return self.encode_layer(prefix[-1])[np.newaxis, :]

    def encode_full(self, prefix: Sequence[LayerSpec]) -> np.ndarray:
        """Whole-prefix encoding (len, width) for the recurrent-history mode."""
        if not prefix:
            return np.zeros((1, self.width))
        return np.stack([self.encode_layer(s) for s in prefix])


def encode_state(
    prefix: Sequence[LayerSpec], width: int, vocab: ActionVocabulary
) -> np.ndarray:
    return StateEncoder(vocab, width).encode(prefix)


def select_action(
    q: np.ndarray,
    mask: np.ndarray,
    policy: PolicyConfig,
    rng: np.random.Generator,
) -> tuple[int, bool]:
    """Epsilon-greedy pick over the mask-true indices.

    Ties at the masked argmax break toward the lowest index so runs replay
    deterministically.
    """
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise EmptyMask("no allowed actions to select from")
    p = rng.random()
    if p < policy.epsilon:
        return int(rng.choice(allowed)), True
    sub = np.asarray(q)[allowed]
    return int(allowed[int(np.argmax(sub))]), False


def decay_epsilon(policy: PolicyConfig, was_random: bool) -> PolicyConfig:
    """Each random action steps epsilon down by the decay constant, floored
    at epsilon_min; greedy actions leave it unchanged."""
    if not was_random:
        return policy
    return replace(policy, epsilon=max(policy.epsilon_min, policy.epsilon - policy.decay))


def bellman_target(
    reward: float,
    cfg: BellmanConfig,
    target_net: QNetParams,
    next_state: np.ndarray | None,
    next_mask: np.ndarray | None,
    main_net: QNetParams | None = None,
) -> float:
    """One-step lookahead target: the reward alone for terminal transitions,
    otherwise reward + gamma * Q_target(next state, best next action).

    Evaluated with dropout off. With `double_dqn_canonical` set, the best next
    action comes from `main_net` and only its value from the target network.
    """
    if next_state is None:
        return float(reward)
    if next_mask is None or not np.any(next_mask):
        raise EmptyMask("non-terminal transition requires a non-empty next mask")
    allowed = np.flatnonzero(next_mask)
    qt = qnet_forward(target_net, next_state, train_mode=False)
    if cfg.double_dqn_canonical:
        if main_net is None:
            raise ConfigError("canonical double-DQN target requires the main network")
        qm = qnet_forward(main_net, next_state, train_mode=False)
        best = int(allowed[int(np.argmax(qm[allowed]))])
        lookahead = float(qt[best])
    else:
        lookahead = float(np.max(qt[allowed]))
    return float(reward) + cfg.gamma * lookahead


def sync_target(cs: ControllerState) -> ControllerState:
    """Overwrite the target network with an element-wise copy of the main one."""
    cs.target = cs.main.copy()
    cs.epochs_since_sync = 0
    return cs
