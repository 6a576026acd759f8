"""Scalar thresholding functions h_tau and their componentwise operator.

Every rule zeroes inputs with ``|u| <= tau`` and applies an odd defining
function above the threshold. Internally each defining function is written as
``|u| - deficit`` with a non-negative deficit, which keeps ``f(u) <= u`` exact
in floating point and avoids cancellation for ``|u| >> tau``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import AITError, NonFinite, NonpositiveThreshold

__all__ = [
    "Kind",
    "ThresholdRule",
    "parse_rule",
    "apply_scalar",
    "apply_vector",
    "boundedness_constant",
    "ALL_RULES",
]

DEFAULT_SCAD_A = 3.7


class Kind(enum.Enum):
    HARD = "hard"
    HALF = "half"
    TWOTHIRDS = "twothirds"
    SOFT = "soft"
    SCAD = "scad"


_C = {
    Kind.HARD: 0.0,
    Kind.HALF: 1.0 / 3.0,
    Kind.TWOTHIRDS: 0.5,
    Kind.SOFT: 1.0,
    Kind.SCAD: 1.0,
}


@dataclass(frozen=True)
class ThresholdRule:
    kind: Kind
    scad_a: float = DEFAULT_SCAD_A

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.SCAD and not self.scad_a > 2:
            raise AITError(f"SCAD needs a > 2, got a={self.scad_a}")

    @property
    def c(self):
        return _C[self.kind]

    @property
    def name(self):
        if self.kind is Kind.SCAD and self.scad_a != DEFAULT_SCAD_A:
            return f"scad:a={self.scad_a:g}"
        return self.kind.value

    def __str__(self):
        return self.name


ALL_RULES = tuple(ThresholdRule(k) for k in Kind)


def parse_rule(text):
    """Parse ``"hard"``, ``"half"``, ``"twothirds"``, ``"soft"``, ``"scad"`` or ``"scad:a=3.7"``."""
    if isinstance(text, ThresholdRule):
        return text
    name, _, params = text.strip().lower().partition(":")
    try:
        kind = Kind(name)
    except ValueError:
        raise AITError(f"unknown thresholding rule {text!r}") from None
    if not params:
        return ThresholdRule(kind)
    if kind is not Kind.SCAD:
        raise AITError(f"rule {name!r} takes no parameters")
    key, _, value = params.partition("=")
    if key.strip() != "a" or not value:
        raise AITError(f"bad SCAD parameter {params!r}; expected a=<float>")
    return ThresholdRule(kind, float(value))


def boundedness_constant(rule):
    """Smallest c with u - c*tau <= f_tau(u) <= u above the threshold."""
    return parse_rule(rule).c


# 2/3 rule in units of tau: s = |u|/tau. The minimiser x of
# (x - s)^2 + lam |x|^(2/3), lam = 3 * 2^(-4/3), has the closed form
# g(s) = ((p + sqrt(2s/p - p^2)) / 2)^3 with
# p = 2^(2/3) 3^(-1/4) sqrt(cosh(arccosh((3 sqrt3 / 4) s^2) / 3)),
# and satisfies s - g = (lam/3) g^(-1/3) = 2^(-4/3) g^(-1/3).
_TT_KAPPA = 3.0 * math.sqrt(3.0) / 4.0
_TT_P = 2.0 ** (2.0 / 3.0) * 3.0 ** -0.25
_TT_D = 2.0 ** (-4.0 / 3.0)
_TT_ASYMPTOTIC = 1e100


def _deficit_twothirds(s):
    big = s > _TT_ASYMPTOTIC
    sm = np.where(big, 1.0, s)
    theta = np.arccosh(np.maximum(_TT_KAPPA * sm * sm, 1.0))
    p = _TT_P * np.sqrt(np.cosh(theta / 3.0))
    g = ((p + np.sqrt(np.maximum(2.0 * sm / p - p * p, 0.0))) / 2.0) ** 3
    g = np.where(big, s, g)
    return _TT_D * g ** (-1.0 / 3.0)


def _deficit_half(s):
    # f = (2/3) u (1 + cos(2pi/3 - (2/3) arccos(w))), w = (sqrt2/2) s^(-3/2);
    # with delta = (2/3) arcsin(w) this is u - (u/3)(2 sin^2(delta/2) + sqrt3 sin(delta))
    w = (math.sqrt(2.0) / 2.0) * s ** -1.5
    delta = (2.0 / 3.0) * np.arcsin(np.minimum(w, 1.0))
    return s * (2.0 * np.sin(delta / 2.0) ** 2 + math.sqrt(3.0) * np.sin(delta)) / 3.0


def _magnitude(rule, a, tau):
    """Defining function on magnitudes ``a > tau > 0``."""
    kind = rule.kind
    if kind is Kind.HARD:
        return a.copy()
    if kind is Kind.SOFT:
        return a - tau
    if kind is Kind.SCAD:
        A = rule.scad_a
        deficit = np.where(
            a <= 2.0 * tau, tau, np.where(a <= A * tau, (A * tau - a) / (A - 2.0), 0.0)
        )
        return a - deficit
    # a/tau can overflow; past 1e300 the deficit is far below one ulp of a
    with np.errstate(over="ignore"):
        s = np.minimum(a / tau, 1e300)
    if kind is Kind.HALF:
        return a - tau * _deficit_half(s)
    return a - tau * _deficit_twothirds(s)


def _check_tau(tau):
    tau = float(tau)
    if not math.isfinite(tau):
        raise NonFinite(f"threshold must be finite, got {tau}")
    if tau < 0:
        raise NonpositiveThreshold(f"threshold must be positive, got {tau}")
    return tau


def apply_vector(rule, z, tau):
    """Componentwise thresholding H_tau(z).

    Entries with ``|z_i| <= tau`` become 0 (strict gate, so a component equal
    to the threshold is dropped); the rest map to ``sign(z_i) f_tau(|z_i|)``.

    ``tau = 0`` is accepted as the limit tau -> 0+, in which every defining
    function is the identity: nonzero entries pass through unchanged. The
    adaptive threshold hits exactly zero when fewer than k+1 entries of z are
    nonzero.
    """
    rule = parse_rule(rule)
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise NonFinite("input contains NaN or infinity")
    tau = _check_tau(tau)
    a = np.abs(z)
    keep = a > tau
    out = np.zeros_like(z)
    if tau == 0.0:
        out[keep] = z[keep]
        return out
    out[keep] = np.sign(z[keep]) * _magnitude(rule, a[keep], tau)
    return out


def apply_scalar(rule, u, tau):
    """Scalar h_tau(u); see :func:`apply_vector`."""
    if not math.isfinite(float(u)):
        raise NonFinite(f"input must be finite, got {u}")
    return float(apply_vector(rule, np.array([u], dtype=np.float64), tau)[0])
