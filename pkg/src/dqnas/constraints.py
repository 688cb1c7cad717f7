"""Structural rules for valid layer sequences, applied two ways: as an
incremental action mask during generation and as a whole-sequence check.

R1  first layer is a convolution-family layer
R2  no convolution or pooling layer after Flatten
R3  final layer is the output dense layer (softmax above two classes,
    sigmoid otherwise) and appears nowhere else
R4  Dropout only immediately after a pooling layer
R5  no Dense layer before Flatten
R6  exactly one Flatten per sequence; Terminate is only legal after it
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .search_space import (
    CONV_KINDS,
    POOLING_KINDS,
    ActionVocabulary,
    LayerKind,
    LayerSpec,
)


@dataclass(frozen=True)
class PrefixState:
    """Everything the rules need to know about a partially built sequence."""

    last_kind: LayerKind | None = None
    seen_flatten: bool = False
    last_was_pooling: bool = False
    depth: int = 0
    max_depth: int = 8

    def advance(self, kind: LayerKind) -> "PrefixState":
        return replace(
            self,
            last_kind=kind,
            seen_flatten=self.seen_flatten or kind is LayerKind.FLATTEN,
            last_was_pooling=kind in POOLING_KINDS,
            depth=self.depth + 1,
        )


@dataclass(frozen=True)
class RuleViolation:
    rule_id: str  # R1..R6
    position: int
    description: str

    def to_dict(self) -> dict:
        return {
            "rule_id": self.rule_id,
            "position": self.position,
            "description": self.description,
        }


def _kind_allowed(kind: LayerKind, st: PrefixState) -> bool:
    if kind is LayerKind.OUTPUT_DENSE:
        return False  # appended by the engine, never sampled
    if st.depth == 0:
        return kind in CONV_KINDS  # R1
    if kind in CONV_KINDS or kind in POOLING_KINDS:
        return not st.seen_flatten  # R2
    if kind is LayerKind.DROPOUT:
        return st.last_was_pooling  # R4
    if kind is LayerKind.BATCH_NORM:
        return True
    if kind is LayerKind.FLATTEN:
        return not st.seen_flatten  # R6
    if kind is LayerKind.DENSE:
        return st.seen_flatten  # R5
    if kind is LayerKind.TERMINATE:
        return st.seen_flatten  # R6
    return False


def allowed_next_mask(vocab: ActionVocabulary, st: PrefixState) -> np.ndarray:
    """Boolean mask over vocabulary indices: True where appending the decoded
    layer violates none of R1-R6."""
    allowed_ordinals = np.array(
        [_kind_allowed(kind, st) for kind in LayerKind], dtype=bool
    )
    return allowed_ordinals[np.asarray(vocab.kind_ids)]


def check_sequence(
    arch: Sequence[LayerSpec], num_classes: int
) -> list[RuleViolation]:
    """Whole-sequence check of a complete architecture (output layer included).
    Returns violations in position order; an empty list means valid."""
    violations: list[RuleViolation] = []
    flatten_seen_at: int | None = None
    last = len(arch) - 1
    expected_act = "softmax" if num_classes > 2 else "sigmoid"

    for i, spec in enumerate(arch):
        kind = spec.kind
        if i == 0 and kind not in CONV_KINDS:
            violations.append(
                RuleViolation("R1", 0, "first layer must be a convolution-family layer")
            )
        if kind is LayerKind.TERMINATE:
            violations.append(
                RuleViolation("R6", i, "terminate token is not a layer")
            )
            continue
        if kind is LayerKind.FLATTEN:
            if flatten_seen_at is None:
                flatten_seen_at = i
            else:
                violations.append(
                    RuleViolation("R6", i, "more than one Flatten in the sequence")
                )
            continue
        after_flatten = flatten_seen_at is not None
        if after_flatten and (kind in CONV_KINDS or kind in POOLING_KINDS):
            violations.append(
                RuleViolation(
                    "R2", i, f"{kind.value} appears after the Flatten layer"
                )
            )
        if kind is LayerKind.DROPOUT:
            if i == 0 or arch[i - 1].kind not in POOLING_KINDS:
                violations.append(
                    RuleViolation(
                        "R4", i, "Dropout must come immediately after a pooling layer"
                    )
                )
        if kind is LayerKind.DENSE and not after_flatten:
            violations.append(
                RuleViolation("R5", i, "Dense layer before the Flatten layer")
            )
        if kind is LayerKind.OUTPUT_DENSE and i != last:
            violations.append(
                RuleViolation("R3", i, "output layer before the end of the sequence")
            )

    final = arch[last]
    if final.kind is not LayerKind.OUTPUT_DENSE:
        violations.append(
            RuleViolation("R3", last, "final layer must be the output dense layer")
        )
    elif final.activation != expected_act:
        violations.append(
            RuleViolation(
                "R3",
                last,
                f"output activation must be {expected_act} for {num_classes} classes",
            )
        )
    if flatten_seen_at is None:
        violations.append(
            RuleViolation("R6", last, "sequence contains no Flatten layer")
        )
    violations.sort(key=lambda v: (v.position, v.rule_id))
    return violations


def output_layer(num_classes: int) -> LayerSpec:
    """The engine-appended output layer: units = classes with softmax above
    two classes, a single sigmoid unit for binary targets."""
    if num_classes > 2:
        return LayerSpec(
            kind=LayerKind.OUTPUT_DENSE, dense_units=num_classes, activation="softmax"
        )
    return LayerSpec(kind=LayerKind.OUTPUT_DENSE, dense_units=1, activation="sigmoid")


def complete_architecture(
    sampled: Sequence[LayerSpec], num_classes: int
) -> list[LayerSpec]:
    """Append the mandatory tail: Flatten (unless already sampled) and the
    output layer."""
    arch = list(sampled)
    if not any(s.kind is LayerKind.FLATTEN for s in arch):
        arch.append(LayerSpec(kind=LayerKind.FLATTEN))
    arch.append(output_layer(num_classes))
    return arch
