"""Scalar Gaussian primitives and quadrature rules.

Everything here is vectorised over numpy arrays and free of state.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import erfc, log_ndtr, roots_hermitenorm, roots_laguerre, roots_legendre

_SQRT2 = np.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

MAX_QUAD_ORDER = 256


def phi(z):
    """Standard normal density."""
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z - _LOG_SQRT_2PI)


def log_phi(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * z * z - _LOG_SQRT_2PI


def Phi(x):
    """Standard normal CDF, via erfc so both tails keep relative accuracy."""
    x = np.asarray(x, dtype=float)
    return 0.5 * erfc(-x / _SQRT2)


def log_Phi(x):
    return log_ndtr(np.asarray(x, dtype=float))


def log_bin_mass(a, b):
    """log(Phi(b) - Phi(a)) for a < b, stable in both tails.

    Bins lying entirely above zero are reflected so the subtraction always
    happens on the small side of the CDF.
    """
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = log_hi + np.log(-np.expm1(log_lo - log_hi))
    return out


def _check_c2(c2):
    c2 = np.asarray(c2, dtype=float)
    if np.any(~(c2 > 0)):
        raise ValueError("noise variance c2 must be positive")
    return c2


def psi(low, up, z, c2):
    """Probability that z + N(0, c2) falls in the bin (low, up]."""
    c = np.sqrt(_check_c2(c2))
    z = np.asarray(z, dtype=float)
    return np.exp(log_bin_mass((low - z) / c, (up - z) / c))


def psi_prime(low, up, z, c2):
    """Derivative of `psi` with respect to z."""
    c = np.sqrt(_check_c2(c2))
    z = np.asarray(z, dtype=float)
    return (phi((low - z) / c) - phi((up - z) / c)) / c


def bin_ratios(a, b):
    """Return (log p, phi(a)/p, phi(b)/p, a*phi(a)/p, b*phi(b)/p) for p = Phi(b) - Phi(a).

    Infinite edges contribute exact zeros to the ratio terms.
    """
    logp = log_bin_mass(a, b)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        ra = np.where(np.isfinite(a), np.exp(log_phi(a) - logp), 0.0)
        rb = np.where(np.isfinite(b), np.exp(log_phi(b) - logp), 0.0)
        ara = np.where(np.isfinite(a), a * ra, 0.0)
        brb = np.where(np.isfinite(b), b * rb, 0.0)
    return logp, ra, rb, ara, brb


class QuadratureKind(Enum):
    HERMITE = "gauss-hermite-probabilist"
    LAGUERRE = "gauss-laguerre"
    LEGENDRE = "gauss-legendre"


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    kind: QuadratureKind

    def integrate(self, f):
        return np.sum(self.weights * f(self.nodes))

    def __len__(self):
        return len(self.nodes)


def _check_order(n):
    if not (1 <= int(n) <= MAX_QUAD_ORDER) or int(n) != n:
        raise ValueError(f"quadrature order must be an integer in [1, {MAX_QUAD_ORDER}], got {n}")
    return int(n)


def gauss_hermite(n=64):
    """Rule for the standard normal measure Dz (weights sum to one)."""
    n = _check_order(n)
    x, w = roots_hermitenorm(n)
    return QuadratureRule(np.asarray(x), np.asarray(w) / w.sum(), QuadratureKind.HERMITE)


def gauss_laguerre(n=64):
    """Rule for e^{-t} dt on [0, inf)."""
    n = _check_order(n)
    x, w = roots_laguerre(n)
    return QuadratureRule(np.asarray(x), np.asarray(w), QuadratureKind.LAGUERRE)


def gauss_legendre(n=16):
    """Rule for dx on [-1, 1]."""
    n = _check_order(n)
    x, w = roots_legendre(n)
    return QuadratureRule(np.asarray(x), np.asarray(w), QuadratureKind.LEGENDRE)


def composite_legendre(breaks, n=16):
    """Nodes and weights of an n-point Gauss-Legendre rule on every panel of `breaks`."""
    breaks = np.unique(np.asarray(breaks, dtype=float))
    rule = gauss_legendre(n)
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * rule.nodes[None, :]).ravel()
    weights = (half[:, None] * rule.weights[None, :]).ravel()
    return nodes, weights
