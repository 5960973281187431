"""Scalar kernels g with matrix monotone derivative.

Three admissible families are supported:

- ``neglog``: g(x) = -log x
- ``negentropy``: g(x) = x log x
- ``power``: g(x) = x**p for p in [1, 2], g(x) = -x**p for p in (0, 1)

Every function here is vectorized over ``x`` and has closed-form
derivatives of arbitrary order (needed by the Taylor branch of the
divided-difference tables).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, InvalidExponent, InvalidOrder

KINDS = ("neglog", "negentropy", "power")


@dataclass(frozen=True)
class FunctionFamily:
    """Immutable descriptor of a scalar kernel g.

    Build instances through :func:`validate_family`; direct construction
    skips the admissibility checks. ``control=True`` marks a deliberately
    inadmissible kernel used as a negative control by the verifier.
    """

    kind: str
    exponent: Optional[float] = None
    control: bool = False

    @property
    def sign(self) -> float:
        if self.kind == "power" and self.exponent < 1.0:
            return -1.0
        return 1.0

    @property
    def label(self) -> str:
        if self.kind == "power":
            return f"power({self.exponent:g})"
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.exponent}

    @classmethod
    def from_dict(cls, data: dict, allow_inadmissible: bool = False) -> "FunctionFamily":
        if not isinstance(data, dict) or "kind" not in data:
            raise ValueError("family must be an object with a 'kind' field")
        return validate_family(data["kind"], data.get("p"), allow_inadmissible)

    @classmethod
    def parse(cls, text: str, allow_inadmissible: bool = False) -> "FunctionFamily":
        """Parse ``neglog``, ``negentropy`` or ``power:<p>`` (``power=<p>`` also accepted)."""
        text = text.strip()
        for sep in (":", "="):
            if sep in text:
                kind, _, p = text.partition(sep)
                try:
                    exponent = float(p)
                except ValueError:
                    raise ValueError(f"bad exponent in family {text!r}") from None
                return validate_family(kind.strip(), exponent, allow_inadmissible)
        return validate_family(text, None, allow_inadmissible)


def validate_family(kind, exponent=None, allow_inadmissible=False) -> FunctionFamily:
    """Check a (kind, exponent) pair against the standing assumptions on g.

    The power family accepts exponents in (0, 1) and [1, 2]; anything else
    raises :class:`InvalidExponent`. With ``allow_inadmissible`` a power
    exponent p > 2 is accepted (g = x**p is convex but g' is not matrix
    monotone) and the result is flagged as a control.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown family kind {kind!r}; expected one of {KINDS}")
    if kind != "power":
        if exponent is not None:
            raise ValueError(f"family {kind!r} takes no exponent")
        return FunctionFamily(kind)
    if exponent is None:
        raise InvalidExponent("power family requires an exponent")
    p = float(exponent)
    if not math.isfinite(p):
        raise InvalidExponent(f"exponent must be finite, got {exponent!r}")
    if 0.0 < p <= 2.0:
        return FunctionFamily("power", p)
    if allow_inadmissible and p > 2.0:
        return FunctionFamily("power", p, control=True)
    raise InvalidExponent(f"power exponent {p:g} outside (0, 1) U [1, 2]")


def _check_positive(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError("g is defined on the open positive semi-axis only")
    return arr


def _falling(p: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= p - i
    return out


def _deriv(f: FunctionFamily, x, k: int):
    """k-th derivative of g (k >= 0) at positive ``x``; no domain check."""
    if f.kind == "neglog":
        if k == 0:
            return -np.log(x)
        return (-1.0) ** k * math.factorial(k - 1) * x ** (-float(k))
    if f.kind == "negentropy":
        if k == 0:
            return x * np.log(x)
        if k == 1:
            return np.log(x) + 1.0
        return (-1.0) ** k * math.factorial(k - 2) * x ** (-float(k - 1))
    coef = f.sign * _falling(f.exponent, k)
    if coef == 0.0:
        return np.zeros_like(x, dtype=float)
    return coef * x ** (f.exponent - k)


def _scalar_or_array(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def g_value(f: FunctionFamily, x):
    """Evaluate g at ``x > 0`` (scalar or array)."""
    arr = _check_positive(x)
    return _scalar_or_array(_deriv(f, arr, 0), x)


def g_deriv(f: FunctionFamily, x, order: int):
    """Closed-form derivative of g of order 1, 2 or 3."""
    if order not in (1, 2, 3):
        raise InvalidOrder(f"derivative order must be 1, 2 or 3, got {order!r}")
    arr = _check_positive(x)
    return _scalar_or_array(_deriv(f, arr, order), x)


def derivative_function(f: FunctionFamily, shift: int):
    """Return ``h(x, k)`` giving the k-th derivative of g^(shift)."""

    def h(x, k=0):
        return _deriv(f, x, k + shift)

    return h


ADMISSIBLE_DEFAULTS = (
    FunctionFamily("neglog"),
    FunctionFamily("negentropy"),
    FunctionFamily("power", 1.5),
    FunctionFamily("power", 0.5),
)

NEGATIVE_CONTROL = FunctionFamily("power", 3.0, control=True)
