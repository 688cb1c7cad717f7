"""Layer/parameter vocabulary and the action-index <-> layer-spec bijection.

The vocabulary enumerates every choosable layer configuration once, in a
fixed order (kind order first, then each parameter domain in declaration
order, later fields varying fastest), so action indices are reproducible
artifacts of the configuration alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, fields as dc_fields
from enum import Enum
from typing import Any, Iterable, Sequence

from .errors import ConfigError, IndexOutOfRange, UnknownSpec


class LayerKind(Enum):
    CONV2D = "conv2d"
    CONV2D_TRANSPOSE = "conv2dtranspose"
    SEPARABLE_CONV2D = "separableconv2d"
    DEPTHWISE_CONV2D = "depthwiseconv2d"
    MAX_POOL2D = "maxpool2d"
    AVG_POOL2D = "avgpool2d"
    GLOBAL_MAX_POOL2D = "globalmaxpool2d"
    GLOBAL_AVG_POOL2D = "globalavgpool2d"
    DROPOUT = "dropout"
    BATCH_NORM = "batchnorm"
    FLATTEN = "flatten"
    DENSE = "dense"
    OUTPUT_DENSE = "outputdense"
    TERMINATE = "terminate"


KIND_ORDER: tuple[LayerKind, ...] = tuple(LayerKind)
KIND_ORDINAL: dict[LayerKind, int] = {k: i for i, k in enumerate(KIND_ORDER)}

CONV_KINDS = frozenset(
    {
        LayerKind.CONV2D,
        LayerKind.CONV2D_TRANSPOSE,
        LayerKind.SEPARABLE_CONV2D,
        LayerKind.DEPTHWISE_CONV2D,
    }
)
POOLING_KINDS = frozenset(
    {
        LayerKind.MAX_POOL2D,
        LayerKind.AVG_POOL2D,
        LayerKind.GLOBAL_MAX_POOL2D,
        LayerKind.GLOBAL_AVG_POOL2D,
    }
)
GLOBAL_POOLING_KINDS = frozenset(
    {LayerKind.GLOBAL_MAX_POOL2D, LayerKind.GLOBAL_AVG_POOL2D}
)
DENSE_KINDS = frozenset({LayerKind.DENSE, LayerKind.OUTPUT_DENSE})


@dataclass(frozen=True)
class LayerSpec:
    """One fully-parameterized layer choice. Fields not used by `kind` stay None."""

    kind: LayerKind
    filters: int | None = None
    kernel_size: int | None = None
    strides: int | None = None
    padding: str | None = None
    kernel_init: str | None = None
    bias_init: str | None = None
    regularizer: str | None = None
    pool_size: int | None = None
    dropout_rate: float | None = None
    dense_units: int | None = None
    activation: str | None = None

    def __post_init__(self) -> None:
        required, optional = FIELD_PATTERN[self.kind]
        for f in dc_fields(self):
            if f.name == "kind":
                continue
            value = getattr(self, f.name)
            if f.name in required:
                if value is None:
                    raise ValueError(f"{self.kind.value} requires field {f.name!r}")
            elif f.name not in optional and value is not None:
                raise ValueError(f"{self.kind.value} does not take field {f.name!r}")


# Per-kind field-presence pattern: (required, optional). OutputDense is built
# with units/activation by the engine but enumerated bare in the vocabulary.
_CONV_FIELDS = (
    "filters",
    "kernel_size",
    "strides",
    "padding",
    "kernel_init",
    "bias_init",
    "regularizer",
)
_DEPTHWISE_FIELDS = _CONV_FIELDS[1:]
_POOL_FIELDS = ("pool_size", "strides", "padding")
FIELD_PATTERN: dict[LayerKind, tuple[frozenset[str], frozenset[str]]] = {
    LayerKind.CONV2D: (frozenset(_CONV_FIELDS), frozenset()),
    LayerKind.CONV2D_TRANSPOSE: (frozenset(_CONV_FIELDS), frozenset()),
    LayerKind.SEPARABLE_CONV2D: (frozenset(_CONV_FIELDS), frozenset()),
    LayerKind.DEPTHWISE_CONV2D: (frozenset(_DEPTHWISE_FIELDS), frozenset()),
    LayerKind.MAX_POOL2D: (frozenset(_POOL_FIELDS), frozenset()),
    LayerKind.AVG_POOL2D: (frozenset(_POOL_FIELDS), frozenset()),
    LayerKind.GLOBAL_MAX_POOL2D: (frozenset({"padding"}), frozenset()),
    LayerKind.GLOBAL_AVG_POOL2D: (frozenset({"padding"}), frozenset()),
    LayerKind.DROPOUT: (frozenset({"dropout_rate"}), frozenset()),
    LayerKind.BATCH_NORM: (frozenset(), frozenset()),
    LayerKind.FLATTEN: (frozenset(), frozenset()),
    LayerKind.DENSE: (frozenset({"dense_units", "activation"}), frozenset()),
    LayerKind.OUTPUT_DENSE: (frozenset(), frozenset({"dense_units", "activation"})),
    LayerKind.TERMINATE: (frozenset(), frozenset()),
}


@dataclass(frozen=True)
class VocabularyConfig:
    """Parameter-domain lists; defaults are the full published search space."""

    enabled_kinds: tuple[LayerKind, ...] = KIND_ORDER
    filters: tuple[int, ...] = (16, 32, 64, 96, 128, 160, 192, 224, 256)
    kernel_sizes: tuple[int, ...] = (3, 5, 7, 9)
    conv_strides: tuple[int, ...] = (2, 3)
    paddings: tuple[str, ...] = ("same", "valid")
    kernel_inits: tuple[str, ...] = (
        "HeNormal",
        "HeUniform",
        "RandomNormal",
        "RandomUniform",
    )
    bias_inits: tuple[str, ...] = (
        "HeNormal",
        "HeUniform",
        "RandomNormal",
        "RandomUniform",
    )
    regularizers: tuple[str, ...] = ("l1", "l2", "l1_l2")
    pool_sizes: tuple[int, ...] = (2, 3, 4, 5)
    pool_strides: tuple[int, ...] = (2, 3, 4, 5)
    dropout_rates: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    dense_units: tuple[int, ...] = (8, 16, 32, 64, 128, 256, 512)
    activations: tuple[str, ...] = ("sigmoid", "tanh", "relu", "elu", "selu", "swish")

    def validate(self) -> None:
        for f in dc_fields(self):
            values = getattr(self, f.name)
            if len(values) == 0:
                raise ConfigError(f"domain {f.name!r} is empty")
            if len(set(values)) != len(values):
                raise ConfigError(f"domain {f.name!r} contains duplicates")
        unknown = [k for k in self.enabled_kinds if not isinstance(k, LayerKind)]
        if unknown:
            raise ConfigError(f"unknown layer kinds: {unknown}")

    def field_domains(self, kind: LayerKind) -> dict[str, tuple]:
        """Enumerable domains for `kind`, in LayerSpec field-declaration order."""
        if kind in CONV_KINDS:
            domains = {
                "filters": self.filters,
                "kernel_size": self.kernel_sizes,
                "strides": self.conv_strides,
                "padding": self.paddings,
                "kernel_init": self.kernel_inits,
                "bias_init": self.bias_inits,
                "regularizer": self.regularizers,
            }
            if kind is LayerKind.DEPTHWISE_CONV2D:
                del domains["filters"]
            return domains
        if kind in (LayerKind.MAX_POOL2D, LayerKind.AVG_POOL2D):
            return {
                "pool_size": self.pool_sizes,
                "strides": self.pool_strides,
                "padding": self.paddings,
            }
        if kind in GLOBAL_POOLING_KINDS:
            # The padding token is semantically inert for global pooling but is
            # kept so serialized architectures round-trip exactly.
            return {"padding": self.paddings}
        if kind is LayerKind.DROPOUT:
            return {"dropout_rate": self.dropout_rates}
        if kind is LayerKind.DENSE:
            return {"dense_units": self.dense_units, "activation": self.activations}
        # BatchNorm, Flatten, OutputDense, Terminate carry no enumerable fields.
        return {}

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: list(getattr(self, f.name)) for f in dc_fields(self)}
        out["enabled_kinds"] = [k.value for k in self.enabled_kinds]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VocabularyConfig":
        known = {f.name for f in dc_fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown vocabulary config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            if key == "enabled_kinds":
                kwargs[key] = tuple(_kind_from_token(tok) for tok in value)
            else:
                kwargs[key] = tuple(value)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


class ActionVocabulary:
    """Immutable enumeration of every LayerSpec an action index can mean."""

    def __init__(self, config: VocabularyConfig, entries: Sequence[LayerSpec]):
        self.config = config
        self.entries: tuple[LayerSpec, ...] = tuple(entries)
        self.size = len(self.entries)
        self._index_of: dict[LayerSpec, int] = {
            spec: i for i, spec in enumerate(self.entries)
        }
        if len(self._index_of) != self.size:
            raise ConfigError("vocabulary enumeration produced duplicate entries")
        self.kind_ids = [KIND_ORDINAL[spec.kind] for spec in self.entries]

    def decode(self, index: int) -> LayerSpec:
        if not 0 <= index < self.size:
            raise IndexOutOfRange(f"action index {index} not in [0, {self.size})")
        return self.entries[index]

    def encode(self, spec: LayerSpec) -> int:
        try:
            return self._index_of[spec]
        except KeyError:
            raise UnknownSpec(f"spec not in vocabulary: {spec}") from None

    def indices_of_kind(self, kind: LayerKind) -> list[int]:
        ordinal = KIND_ORDINAL[kind]
        return [i for i, k in enumerate(self.kind_ids) if k == ordinal]

    def __len__(self) -> int:
        return self.size

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ActionVocabulary) and self.entries == other.entries


def build_vocabulary(config: VocabularyConfig | None = None) -> ActionVocabulary:
    """Enumerate the full cartesian search space for `config`."""
    cfg = config or VocabularyConfig()
    cfg.validate()
    entries: list[LayerSpec] = []
    for kind in KIND_ORDER:
        if kind not in cfg.enabled_kinds:
            continue
        domains = cfg.field_domains(kind)
        if not domains:
            entries.append(LayerSpec(kind=kind))
            continue
        names = list(domains)
        for combo in itertools.product(*(domains[n] for n in names)):
            entries.append(LayerSpec(kind=kind, **dict(zip(names, combo))))
    return ActionVocabulary(cfg, entries)


def encode_action(vocab: ActionVocabulary, spec: LayerSpec) -> int:
    return vocab.encode(spec)


def decode_action(vocab: ActionVocabulary, index: int) -> LayerSpec:
    return vocab.decode(index)


# ---------------------------------------------------------------------------
# Wire form: the tuple serialization used in reports, configs, and the worker
# protocol, e.g. ["conv2d", 96, 5, 3, "valid", "HeUniform", "RandomUniform", "l2"].
# Flatten and BatchNormalization serialize as bare strings; dense layers as
# [units, activation] with the trailing tuple meaning the output layer.
# ---------------------------------------------------------------------------

_BARE_TOKENS = {
    LayerKind.BATCH_NORM: "BatchNormalization",
    LayerKind.FLATTEN: "Flatten",
}
_BARE_LOOKUP = {
    "batchnormalization": LayerKind.BATCH_NORM,
    "batchnorm": LayerKind.BATCH_NORM,
    "flatten": LayerKind.FLATTEN,
}


def _kind_from_token(token: str) -> LayerKind:
    low = token.lower()
    if low in _BARE_LOOKUP:
        return _BARE_LOOKUP[low]
    for kind in LayerKind:
        if kind.value == low:
            return kind
    raise ConfigError(f"unknown layer kind token {token!r}")


def layer_to_wire(spec: LayerSpec) -> Any:
    kind = spec.kind
    if kind in _BARE_TOKENS:
        return _BARE_TOKENS[kind]
    if kind in DENSE_KINDS:
        return [spec.dense_units, spec.activation]
    if kind is LayerKind.DEPTHWISE_CONV2D:
        return [
            kind.value,
            spec.kernel_size,
            spec.strides,
            spec.padding,
            spec.kernel_init,
            spec.bias_init,
            spec.regularizer,
        ]
    if kind in CONV_KINDS:
        return [
            kind.value,
            spec.filters,
            spec.kernel_size,
            spec.strides,
            spec.padding,
            spec.kernel_init,
            spec.bias_init,
            spec.regularizer,
        ]
    if kind in (LayerKind.MAX_POOL2D, LayerKind.AVG_POOL2D):
        return [kind.value, spec.pool_size, spec.strides, spec.padding]
    if kind in GLOBAL_POOLING_KINDS:
        return [kind.value, spec.padding]
    if kind is LayerKind.DROPOUT:
        return [kind.value, spec.dropout_rate]
    if kind is LayerKind.TERMINATE:
        return [kind.value]
    raise UnknownSpec(f"cannot serialize {spec}")


def layer_from_wire(item: Any, *, is_last: bool = False) -> LayerSpec:
    """Parse one wire item. Values are taken as-is; domain membership is the
    vocabulary's concern, not the parser's."""
    if isinstance(item, str):
        kind = _kind_from_token(item)
        return LayerSpec(kind=kind)
    if not isinstance(item, (list, tuple)) or not item:
        raise UnknownSpec(f"malformed wire layer: {item!r}")
    head = item[0]
    if isinstance(head, (int, float)) and not isinstance(head, bool):
        if len(item) != 2:
            raise UnknownSpec(f"dense wire tuple needs [units, activation]: {item!r}")
        kind = LayerKind.OUTPUT_DENSE if is_last else LayerKind.DENSE
        return LayerSpec(kind=kind, dense_units=int(head), activation=str(item[1]))
    kind = _kind_from_token(str(head))
    rest = list(item[1:])
    try:
        if kind is LayerKind.DEPTHWISE_CONV2D:
            k, s, pad, ki, bi, reg = rest
            return LayerSpec(
                kind=kind, kernel_size=int(k), strides=int(s), padding=str(pad),
                kernel_init=str(ki), bias_init=str(bi), regularizer=str(reg),
            )
        if kind in CONV_KINDS:
            flt, k, s, pad, ki, bi, reg = rest
            return LayerSpec(
                kind=kind, filters=int(flt), kernel_size=int(k), strides=int(s),
                padding=str(pad), kernel_init=str(ki), bias_init=str(bi),
                regularizer=str(reg),
            )
        if kind in (LayerKind.MAX_POOL2D, LayerKind.AVG_POOL2D):
            p, s, pad = rest
            return LayerSpec(kind=kind, pool_size=int(p), strides=int(s), padding=str(pad))
        if kind in GLOBAL_POOLING_KINDS:
            (pad,) = rest
            return LayerSpec(kind=kind, padding=str(pad))
        if kind is LayerKind.DROPOUT:
            (rate,) = rest
            return LayerSpec(kind=kind, dropout_rate=float(rate))
        if rest:
            raise ValueError(f"{kind.value} takes no parameters")
        return LayerSpec(kind=kind)
    except (ValueError, TypeError) as exc:
        raise UnknownSpec(f"malformed wire layer {item!r}: {exc}") from None


def architecture_to_wire(arch: Sequence[LayerSpec]) -> list[Any]:
    return [layer_to_wire(spec) for spec in arch]


def architecture_from_wire(items: Iterable[Any]) -> list[LayerSpec]:
    items = list(items)
    last = len(items) - 1
    return [layer_from_wire(item, is_last=(i == last)) for i, item in enumerate(items)]
