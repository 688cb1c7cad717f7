"""Bounded FIFO memory of evaluated models with stratified prioritized
sampling: half of every batch comes from the highest-reward records, a
quarter from a uniform draw, and the rest from recent invalid models so the
controller keeps learning what to avoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, EmptyBuffer
from .qcontroller import Experience
from .search_space import LayerSpec, architecture_from_wire, architecture_to_wire

INVALID_REWARD = -10.0


@dataclass
class ModelRecord:
    sequence: list[int]  # sampled action indices
    architecture: list[LayerSpec]
    reward: float
    insertion_ordinal: int
    experiences: list[Experience]
    failure: str | None = None  # invalid_architecture | worker_crashed | timeout | worker_error

    @property
    def invalid(self) -> bool:
        return self.reward == INVALID_REWARD

    def to_json(self) -> dict[str, Any]:
        return {
            "sequence": list(self.sequence),
            "architecture": architecture_to_wire(self.architecture),
            "reward": self.reward,
            "insertion_ordinal": self.insertion_ordinal,
            "experiences": [e.to_json() for e in self.experiences],
            "failure": self.failure,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "ModelRecord":
        return cls(
            sequence=[int(i) for i in data["sequence"]],
            architecture=architecture_from_wire(data["architecture"]),
            reward=float(data["reward"]),
            insertion_ordinal=int(data["insertion_ordinal"]),
            experiences=[Experience.from_json(e) for e in data["experiences"]],
            failure=data.get("failure"),
        )


@dataclass
class MemoryBuffer:
    capacity: int = 512
    top_fraction: float = 0.5
    uniform_fraction: float = 0.25
    invalid_fraction: float = 0.25
    records: list[ModelRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ConfigError("buffer capacity must be at least 1")
        total = self.top_fraction + self.uniform_fraction + self.invalid_fraction
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ConfigError(f"sampling fractions must sum to 1, got {total}")

    def __len__(self) -> int:
        return len(self.records)

    def record_model(self, rec: ModelRecord) -> None:
        """Append, evicting the oldest record once over capacity."""
        self.records.append(rec)
        if len(self.records) > self.capacity:
            del self.records[0]

    def select_records(self, k: int, rng: np.random.Generator) -> list[ModelRecord]:
        """The k records backing one training batch.

        Slices: ceil(k * top) best valid records (reward desc, then recency),
        ceil(k * uniform) uniform draws, remainder the most recent invalid
        records. Shortfalls are padded by uniform draws; overshoot truncates.
        """
        if not self.records:
            raise EmptyBuffer("cannot sample from an empty buffer")
        if k < 1:
            raise ConfigError("batch size must be at least 1")
        n_top = math.ceil(k * self.top_fraction)
        n_uniform = math.ceil(k * self.uniform_fraction)
        n_invalid = k - n_top - n_uniform

        valid = [r for r in self.records if not r.invalid]
        valid.sort(key=lambda r: (-r.reward, -r.insertion_ordinal))
        picked: list[ModelRecord] = valid[:n_top]

        picked.extend(
            self.records[int(i)]
            for i in rng.integers(0, len(self.records), size=n_uniform)
        )

        if n_invalid > 0:
            invalid = [r for r in self.records if r.invalid]
            invalid.sort(key=lambda r: -r.insertion_ordinal)
            take = invalid[:n_invalid]
            if not take:  # no invalid models yet: fall back to uniform draws
                take = [
                    self.records[int(i)]
                    for i in rng.integers(0, len(self.records), size=n_invalid)
                ]
            picked.extend(take)

        while len(picked) < k:
            picked.append(self.records[int(rng.integers(0, len(self.records)))])
        return picked[:k]

    def sample_batch(self, k: int, rng: np.random.Generator) -> list[Experience]:
        """All experiences of the k selected records, concatenated."""
        out: list[Experience] = []
        for rec in self.select_records(k, rng):
            out.extend(rec.experiences)
        return out

    def top_records(self, k: int) -> list[ModelRecord]:
        valid = [r for r in self.records if not r.invalid]
        valid.sort(key=lambda r: (-r.reward, -r.insertion_ordinal))
        return valid[:k]

    def to_json(self) -> dict[str, Any]:
        return {
            "capacity": self.capacity,
            "top_fraction": self.top_fraction,
            "uniform_fraction": self.uniform_fraction,
            "invalid_fraction": self.invalid_fraction,
            "records": [r.to_json() for r in self.records],
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "MemoryBuffer":
        return cls(
            capacity=int(data["capacity"]),
            top_fraction=float(data["top_fraction"]),
            uniform_fraction=float(data["uniform_fraction"]),
            invalid_fraction=float(data["invalid_fraction"]),
            records=[ModelRecord.from_json(r) for r in data["records"]],
        )
