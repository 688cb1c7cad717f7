"""Tensor-shape propagation, parameter counting, and invalid-model detection.

Conventions follow mainstream convolution arithmetic: valid padding gives
floor((n - k) / s) + 1, same padding gives ceil(n / s), transposed
convolution inverts them. A sequence whose propagation hits a non-positive
dimension (or a kernel larger than its input) is the "negative dimensions"
failure mode that earns a model the -10.0 sentinel reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

from .errors import (
    InvalidArchitecture,
    KernelExceedsInput,
    LayerConstraintError,
    NegativeDimension,
)
from .search_space import (
    CONV_KINDS,
    GLOBAL_POOLING_KINDS,
    LayerKind,
    LayerSpec,
)


@dataclass(frozen=True)
class TensorShape:
    """(height, width, channels); after Flatten, h = w = 1 and c is the
    feature count."""

    h: int
    w: int
    c: int
    flattened: bool = False

    def __post_init__(self) -> None:
        if self.h < 1 or self.w < 1 or self.c < 1:
            raise NegativeDimension(f"non-positive dimension in {self!r}")

    @property
    def features(self) -> int:
        return self.h * self.w * self.c

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.h, self.w, self.c)


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failing_index: int | None = None
    reason: str | None = None  # NegativeDimension | KernelExceedsInput | ConstraintViolation
    detail: str | None = None
    final_shape: TensorShape | None = None
    parameter_count: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"valid": self.valid}
        if self.valid:
            assert self.final_shape is not None
            out["final_shape"] = list(self.final_shape.as_tuple())
            out["flattened"] = self.final_shape.flattened
            out["parameter_count"] = self.parameter_count
        else:
            out["failing_index"] = self.failing_index
            out["reason"] = self.reason
            out["detail"] = self.detail
        return out


def _spatial_out(n: int, k: int, s: int, padding: str, index_hint: str) -> int:
    if padding == "valid":
        if k > n:
            raise KernelExceedsInput(
                f"kernel/pool size {k} exceeds input extent {n} ({index_hint})"
            )
        return (n - k) // s + 1
    return math.ceil(n / s)


def _transpose_out(n: int, k: int, s: int, padding: str) -> int:
    if padding == "valid":
        return (n - 1) * s + k
    return n * s


def infer_layer_shape(spec: LayerSpec, shape: TensorShape) -> TensorShape:
    """Shape produced by applying one layer to `shape`.

    Raises NegativeDimension / KernelExceedsInput for impossible geometry and
    LayerConstraintError for layers applied to a tensor class they cannot
    accept (conv/pool after Flatten, Dense before it).
    """
    kind = spec.kind
    if kind in CONV_KINDS or kind in (LayerKind.MAX_POOL2D, LayerKind.AVG_POOL2D):
        if shape.flattened:
            raise LayerConstraintError(f"{kind.value} applied to flattened tensor")
        if kind is LayerKind.CONV2D_TRANSPOSE:
            h = _transpose_out(shape.h, spec.kernel_size, spec.strides, spec.padding)
            w = _transpose_out(shape.w, spec.kernel_size, spec.strides, spec.padding)
        else:
            k = spec.kernel_size if kind in CONV_KINDS else spec.pool_size
            h = _spatial_out(shape.h, k, spec.strides, spec.padding, "height")
            w = _spatial_out(shape.w, k, spec.strides, spec.padding, "width")
        if kind in CONV_KINDS and kind is not LayerKind.DEPTHWISE_CONV2D:
            c = spec.filters
        else:
            c = shape.c
        return TensorShape(h, w, c)
    if kind in GLOBAL_POOLING_KINDS:
        if shape.flattened:
            raise LayerConstraintError(f"{kind.value} applied to flattened tensor")
        return TensorShape(1, 1, shape.c)
    if kind is LayerKind.FLATTEN:
        if shape.flattened:
            raise LayerConstraintError("second Flatten in sequence")
        return TensorShape(1, 1, shape.features, flattened=True)
    if kind in (LayerKind.DENSE, LayerKind.OUTPUT_DENSE):
        if not shape.flattened:
            raise LayerConstraintError("dense layer requires flattened input")
        if spec.dense_units is None:
            raise LayerConstraintError("dense layer without a unit count")
        return TensorShape(1, 1, spec.dense_units, flattened=True)
    if kind in (LayerKind.DROPOUT, LayerKind.BATCH_NORM):
        return shape
    raise LayerConstraintError(f"{kind.value} is not a shape-bearing layer")


def layer_parameter_count(spec: LayerSpec, in_shape: TensorShape) -> int:
    """Learnable parameters contributed by one layer (biases included)."""
    kind = spec.kind
    c_in = in_shape.c
    if kind is LayerKind.CONV2D or kind is LayerKind.CONV2D_TRANSPOSE:
        # The transpose kernel swaps in/out channel roles but holds the same
        # number of weights as the forward kernel.
        return (spec.kernel_size**2 * c_in + 1) * spec.filters
    if kind is LayerKind.DEPTHWISE_CONV2D:
        return (spec.kernel_size**2 + 1) * c_in
    if kind is LayerKind.SEPARABLE_CONV2D:
        return spec.kernel_size**2 * c_in + (c_in + 1) * spec.filters
    if kind in (LayerKind.DENSE, LayerKind.OUTPUT_DENSE):
        return (in_shape.features + 1) * spec.dense_units
    if kind is LayerKind.BATCH_NORM:
        return 4 * c_in
    return 0


def validate_architecture(
    arch: Sequence[LayerSpec], input_shape: TensorShape
) -> ValidationReport:
    """Fold shape inference over `arch`; the first failure is located and
    classified, never raised."""
    shape = input_shape
    params = 0
    for i, spec in enumerate(arch):
        if spec.kind is LayerKind.TERMINATE:
            return ValidationReport(
                valid=False,
                failing_index=i,
                reason="ConstraintViolation",
                detail="terminate token inside an architecture",
            )
        try:
            params += layer_parameter_count(spec, shape)
            shape = infer_layer_shape(spec, shape)
        except KernelExceedsInput as exc:
            return ValidationReport(
                valid=False, failing_index=i, reason="KernelExceedsInput", detail=str(exc)
            )
        except NegativeDimension as exc:
            return ValidationReport(
                valid=False, failing_index=i, reason="NegativeDimension", detail=str(exc)
            )
        except LayerConstraintError as exc:
            return ValidationReport(
                valid=False, failing_index=i, reason="ConstraintViolation", detail=str(exc)
            )
    return ValidationReport(valid=True, final_shape=shape, parameter_count=params)


def count_parameters(arch: Sequence[LayerSpec], input_shape: TensorShape) -> int:
    report = validate_architecture(arch, input_shape)
    if not report.valid:
        raise InvalidArchitecture(
            f"cannot count parameters: layer {report.failing_index} fails with "
            f"{report.reason}"
        )
    assert report.parameter_count is not None
    return report.parameter_count
