"""Interval tensors and sound propagation rules for network layers.

An ``IntervalTensor`` carries elementwise lower and upper bounds. Each rule
maps an input box to an output box that contains every image of a point from
the input box; affine rules use the midpoint/radius form, monotone
activations apply to both bounds, and batch normalization computes its
statistics over both bounds jointly so that a zero-radius input reproduces
the plain point computation exactly.

Payloads may be ndarrays or autodiff Tensors; the rules are written against
the dual-mode helpers in :mod:`intervalcl.autodiff` and work identically in
both modes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from intervalcl import autodiff as ad
from intervalcl.autodiff import Tensor


def _raw(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x)


@dataclass
class IntervalTensor:
    """Elementwise box: ``lower[i] <= x[i] <= upper[i]``."""

    lower: object
    upper: object

    def __post_init__(self):
        lo, hi = _raw(self.lower), _raw(self.upper)
        if lo.shape != hi.shape:
            raise ValueError(f"bound shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            worst = float(np.max(lo - hi))
            raise ValueError(f"lower exceeds upper by up to {worst:.3g}")

    @property
    def shape(self):
        return _raw(self.lower).shape

    @property
    def midpoint(self):
        return (self.lower + self.upper) * 0.5

    @property
    def radius(self):
        return (self.upper - self.lower) * 0.5

    @classmethod
    def point(cls, x) -> "IntervalTensor":
        """Degenerate box with zero radius sharing the payload on both sides."""
        return cls(x, x)

    @classmethod
    def from_ball(cls, x, eps) -> "IntervalTensor":
        """Box of radius ``eps`` (scalar or broadcastable) around ``x``."""
        if np.any(np.asarray(eps) < 0):
            raise ValueError("radius must be non-negative")
        return cls(x - eps, x + eps)

    def contains(self, x, slack=0.0) -> bool:
        v = np.asarray(x)
        return bool(np.all(_raw(self.lower) - slack <= v)
                    and np.all(v <= _raw(self.upper) + slack))


def _matmul_wt(x, weight):
    """Batched ``x @ weight.T`` for ndarray or Tensor operands."""
    wt = weight.transpose((1, 0)) if isinstance(weight, Tensor) else weight.T
    return x @ wt


def interval_affine(iv: IntervalTensor, weight, bias) -> IntervalTensor:
    """Dense layer ``y = x W^T + b`` lifted to boxes.

    The midpoint maps through the affine map; the radius maps through the
    absolute weight matrix. ``weight`` has shape (out, in), inputs are
    batched (B, in).
    """
    w_raw = _raw(weight)
    if _raw(iv.lower).shape[-1] != w_raw.shape[1]:
        raise ValueError(
            f"input width {_raw(iv.lower).shape[-1]} does not match weight {w_raw.shape}")
    if _raw(bias).shape != (w_raw.shape[0],):
        raise ValueError(f"bias shape {_raw(bias).shape} does not match out width")
    mid = iv.midpoint
    rad = iv.radius
    centre = _matmul_wt(mid, weight) + bias
    halfwidth = _matmul_wt(rad, ad.absolute(weight))
    return IntervalTensor(centre - halfwidth, centre + halfwidth)


def interval_conv2d(iv: IntervalTensor, kernel, bias, stride=1) -> IntervalTensor:
    """Valid-padding NHWC convolution lifted to boxes.

    ``kernel`` has shape (kh, kw, c_in, c_out). Patches of the midpoint go
    through the kernel, patches of the radius through its absolute value.
    """
    k_raw = _raw(kernel)
    if k_raw.ndim != 4:
        raise ValueError(f"kernel must be (kh, kw, c_in, c_out), got {k_raw.shape}")
    kh, kw, c_in, c_out = k_raw.shape
    lo_shape = _raw(iv.lower).shape
    if len(lo_shape) != 4 or lo_shape[3] != c_in:
        raise ValueError(f"input {lo_shape} does not match kernel channels {c_in}")
    if _raw(bias).shape != (c_out,):
        raise ValueError(f"bias shape {_raw(bias).shape} does not match {c_out} channels")

    def apply(patches, ker):
        batch, oh, ow, width = patches.shape
        flat = patches.reshape(batch * oh * ow, width)
        kflat = ker.reshape(kh * kw * c_in, c_out)
        return (flat @ kflat).reshape(batch, oh, ow, c_out)

    mid_patches = ad.extract_patches(iv.midpoint, kh, kw, stride, stride)
    rad_patches = ad.extract_patches(iv.radius, kh, kw, stride, stride)
    centre = apply(mid_patches, kernel) + bias
    halfwidth = apply(rad_patches, ad.absolute(kernel))
    return IntervalTensor(centre - halfwidth, centre + halfwidth)


_MONOTONE = {"relu": ad.relu, "sigmoid": ad.sigmoid}


def interval_activation(iv: IntervalTensor, kind: str) -> IntervalTensor:
    """Monotone nonlinearity applied to both bounds."""
    try:
        fn = _MONOTONE[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return IntervalTensor(fn(iv.lower), fn(iv.upper))


def batch_moments(lower, upper, axes):
    """Per-feature mean and population variance over both bounds jointly.

    Equivalent to concatenating the lower and upper batches and taking the
    moments of the result, but computed in a decomposed form so that a
    degenerate box (lower == upper) yields the moments of the point batch
    bit for bit.
    """
    mean = ((_mean(lower, axes) + _mean(upper, axes))) * 0.5
    dev_l = lower - mean
    dev_u = upper - mean
    var = (_mean(dev_l * dev_l, axes) + _mean(dev_u * dev_u, axes)) * 0.5
    return mean, var


def _mean(x, axes):
    return x.mean(axis=axes, keepdims=True) if isinstance(x, Tensor) \
        else np.mean(x, axis=axes, keepdims=True)


def _bn_axes(shape) -> tuple:
    if len(shape) == 2:
        return (0,)
    if len(shape) == 4:
        return (0, 1, 2)
    raise ValueError(f"batchnorm expects (B, F) or NHWC input, got {shape}")


def interval_batchnorm(iv: IntervalTensor, gamma, shift, *, eps=1e-5,
                       stats=None, capture=None) -> IntervalTensor:
    """Batch normalization over boxes.

    Without ``stats``, moments are taken over the current batch of bounds
    (both bounds pooled); pass ``stats=(mean, var)`` to normalize with frozen
    moments instead. ``capture``, if given, receives the ``(mean, var)``
    actually used. A negative ``gamma`` flips which bound is which, handled
    through the centre/half-width form so the output stays ordered.
    """
    shape = _raw(iv.lower).shape
    axes = _bn_axes(shape)
    feat = shape[-1]
    if _raw(gamma).shape != (feat,) or _raw(shift).shape != (feat,):
        raise ValueError(
            f"gamma/shift must have shape ({feat},), got "
            f"{_raw(gamma).shape} and {_raw(shift).shape}")
    if stats is None:
        mean, var = batch_moments(iv.lower, iv.upper, axes)
    else:
        mean, var = stats
    if capture is not None:
        capture.append((mean, var))
    scale = 1.0 / ad.sqrt(var + eps)
    norm_l = (iv.lower - mean) * scale
    norm_u = (iv.upper - mean) * scale
    centre = (norm_l + norm_u) * 0.5
    halfwidth = (norm_u - norm_l) * 0.5
    out_centre = gamma * centre + shift
    out_halfwidth = ad.absolute(gamma) * halfwidth
    return IntervalTensor(out_centre - out_halfwidth, out_centre + out_halfwidth)


def point_batchnorm(x, gamma, shift, *, eps=1e-5, stats=None, capture=None):
    """Point-mode batch normalization sharing every formula with the
    interval rule (a point batch is a zero-radius box)."""
    out = interval_batchnorm(IntervalTensor.point(x), gamma, shift,
                             eps=eps, stats=stats, capture=capture)
    return out.lower


def interval_pool(iv: IntervalTensor, kind: str, window: int, stride=None) -> IntervalTensor:
    """Average or max pooling applied to each bound separately.

    Both reductions are monotone in every input coordinate, so pooling the
    lower and upper bounds independently is sound and exact per window.
    """
    if stride is None:
        stride = window
    lo_w = ad.pool_windows(iv.lower, window, stride)
    hi_w = ad.pool_windows(iv.upper, window, stride)
    if kind == "avg":
        return IntervalTensor(lo_w.mean(axis=3), hi_w.mean(axis=3))
    if kind == "max":
        return IntervalTensor(lo_w.max(axis=3), hi_w.max(axis=3))
    raise ValueError(f"unknown pooling kind {kind!r}")


@dataclass
class SoundnessReport:
    """Outcome of Monte Carlo containment checking."""

    samples: int
    max_violation: float
    violations: int

    @property
    def sound(self) -> bool:
        return self.violations == 0


def soundness_oracle(net_spec, params, input_box: IntervalTensor,
                     samples: int, seed: int, tol: float = 1e-9) -> SoundnessReport:
    """Sample points from the input box and check containment at every layer.

    For each box in the batch, ``samples`` uniform points are drawn, pushed
    through the plain point forward pass (batch statistics frozen to the
    ones the interval pass used), and every intermediate and final
    activation is compared with the propagated bounds. Violations are
    measured relative to ``max(1, |bound|)``; a sample counts as violating
    if it escapes anywhere by more than ``tol``.
    """
    from intervalcl import nets

    lo = np.asarray(_raw(input_box.lower), dtype=np.float64)
    hi = np.asarray(_raw(input_box.upper), dtype=np.float64)
    rng = np.random.default_rng(seed)
    batch = lo.shape[0]

    bn_capture: list = []
    bound_trace: list = []
    nets.forward_interval(net_spec, params, input_box, record=bound_trace,
                          bn_capture=bn_capture)
    bn_stats = [(np.asarray(_raw(m)), np.asarray(_raw(v))) for m, v in bn_capture] or None

    # One point forward over all boxes and draws at once: (B*S, features).
    draw = rng.uniform(0.0, 1.0, size=(samples,) + lo.shape)
    points = lo[None] + draw * (hi - lo)[None]
    flat = points.swapaxes(0, 1).reshape((batch * samples,) + lo.shape[1:])
    act_trace: list = []
    nets.forward_point(net_spec, params, flat, record=act_trace, bn_stats=bn_stats)

    worst_per_sample = np.zeros((batch, samples))
    for box, act in zip(bound_trace, act_trace):
        bl, bu = _raw(box.lower), _raw(box.upper)
        a = _raw(act).reshape((batch, samples) + bl.shape[1:])
        scale = np.maximum(1.0, np.maximum(np.abs(bl), np.abs(bu)))
        escape = np.maximum(bl[:, None] - a, a - bu[:, None]) / scale[:, None]
        reduce_axes = tuple(range(2, escape.ndim))
        if reduce_axes:
            escape = escape.max(axis=reduce_axes)
        worst_per_sample = np.maximum(worst_per_sample, escape)
    return SoundnessReport(samples=batch * samples,
                           max_violation=float(worst_per_sample.max()),
                           violations=int((worst_per_sample > tol).sum()))
