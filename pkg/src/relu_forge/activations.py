"""Elementwise activation functions and their derivatives.

The rectifier family uses the one-sided convention ``relu'(0) = 1``.
Softmax acts along an axis; its derivative is a Jacobian and is handled by
the training code, so :meth:`Activation.derivative` rejects it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

ACTIVATION_NAMES = (
    "relu",
    "leaky_relu",
    "parametric_relu",
    "relu6",
    "sigmoid",
    "tanh",
    "identity",
    "softmax",
)

_DEFAULT_ALPHA = {"leaky_relu": 0.01, "parametric_relu": 0.25, "relu6": 0.0}
_PIECEWISE_LINEAR = frozenset({"relu", "leaky_relu", "parametric_relu", "relu6"})


@dataclass(frozen=True)
class Activation:
    """A named activation with an optional slope parameter ``alpha``."""

    name: str
    alpha: float = 0.0

    def __post_init__(self):
        if self.name not in ACTIVATION_NAMES:
            raise ValueError(f"unknown activation {self.name!r}")

    @property
    def is_piecewise_linear(self) -> bool:
        return self.name in _PIECEWISE_LINEAR

    def kinks(self) -> tuple[float, ...]:
        """Pre-activation values where the derivative jumps."""
        if self.name == "relu6":
            return (0.0, 6.0)
        if self.name in _PIECEWISE_LINEAR:
            return (0.0,)
        return ()

    def __call__(self, z, axis: int = -1):
        z = np.asarray(z, dtype=float)
        name = self.name
        if name == "relu":
            return np.maximum(z, 0.0)
        if name in ("leaky_relu", "parametric_relu"):
            return np.where(z >= 0.0, z, self.alpha * z)
        if name == "relu6":
            return np.minimum(np.maximum(self.alpha * z, z), 6.0)
        if name == "sigmoid":
            return expit(z)
        if name == "tanh":
            return np.tanh(z)
        if name == "identity":
            return z
        shifted = z - np.max(z, axis=axis, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=axis, keepdims=True)

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        name = self.name
        if name == "relu":
            return (z >= 0.0).astype(float)
        if name in ("leaky_relu", "parametric_relu"):
            return np.where(z >= 0.0, 1.0, self.alpha)
        if name == "relu6":
            inner = np.where(z >= 0.0, 1.0, self.alpha)
            return np.where(z >= 6.0, 0.0, inner)
        if name == "sigmoid":
            s = expit(z)
            return s * (1.0 - s)
        if name == "tanh":
            return 1.0 - np.tanh(z) ** 2
        if name == "identity":
            return np.ones_like(z)
        raise ValueError("softmax has no elementwise derivative")

    def to_json(self) -> dict:
        out = {"activation": self.name}
        if self.name in _DEFAULT_ALPHA:
            out["alpha"] = self.alpha
        return out


def get_activation(spec, alpha: float | None = None) -> Activation:
    """Coerce a name or an :class:`Activation` into an :class:`Activation`."""
    if isinstance(spec, Activation):
        return spec
    if alpha is None:
        alpha = _DEFAULT_ALPHA.get(spec, 0.0)
    return Activation(spec, float(alpha))


RELU = Activation("relu")
IDENTITY = Activation("identity")
