"""Componentwise posterior moments and extrinsic Gaussian messages.

Messages carry one scalar variance shared by all components; posteriors are
reported through their averaged variance.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .scalar import bin_ratios

V_MIN = 1e-11
V_MAX = 1e11


class DegenerateBinError(FloatingPointError):
    """Observed bin has zero probability under the incoming message."""


@dataclass
class GaussianMessage:
    mean: np.ndarray
    var: float
    clamped: bool = False


@dataclass
class PosteriorMoments:
    mean: np.ndarray
    avg_var: float


def _check_var(v):
    if not np.all(np.asarray(v) > 0):
        raise ValueError("message variance must be positive")


# --------------------------------------------------------------------------
# module B: Bernoulli-Gaussian prior
# --------------------------------------------------------------------------

def prior_moments(r, v, rho):
    """Componentwise posterior mean and variance for r = x + CN(0, v).

    The slab responsibility is evaluated as a logistic of the log-likelihood
    ratio between spike and slab so it cannot underflow for small v.
    """
    r = np.asarray(r, dtype=complex)
    v = np.asarray(v, dtype=float)
    _check_var(v)
    slab = 1.0 / rho
    vs = v + slab
    abs2 = r.real ** 2 + r.imag ** 2
    if rho < 1.0:
        # log[(1-rho) CN(0; r, v)] - log[rho CN(0; r, v + 1/rho)]
        llr = (np.log1p(-rho) - np.log(rho) + np.log(vs / v)
               - abs2 / v + abs2 / vs)
        c = expit(-llr)
    else:
        c = np.ones_like(abs2)
    gain = slab / vs
    m_slab = gain * r
    v_slab = v * gain
    mean = c * m_slab
    # C (v_slab + |m_slab|^2) - C^2 |m_slab|^2, regrouped to avoid cancellation
    var = c * v_slab + c * (1.0 - c) * np.abs(m_slab) ** 2
    return mean, var


def prior_denoise(msg, prior):
    mean, var = prior_moments(msg.mean, msg.var, prior.rho)
    return PosteriorMoments(mean, float(np.mean(var)))


# --------------------------------------------------------------------------
# module A: quantized AWGN likelihood
# --------------------------------------------------------------------------

def truncated_moments(r, u, low, up, c2):
    """Posterior mean/variance of a real z ~ N(r, u) observed as z + N(0, c2) in (low, up]."""
    r = np.asarray(r, dtype=float)
    u = np.asarray(u, dtype=float)
    s2 = u + c2
    s = np.sqrt(s2)
    logp, ra, rb, ara, brb = bin_ratios((low - r) / s, (up - r) / s)
    if np.any(~np.isfinite(logp)):
        raise DegenerateBinError("observed bin has vanishing probability")
    d = ra - rb
    mean = r + (u / s) * d
    var = u + (u * u / s2) * ((ara - brb) - d * d)
    return mean, var


def quantized_moments(r, v, y_quantized, quantizer, sigma2):
    """Complex componentwise posterior moments; real and imaginary parts are independent."""
    r = np.asarray(r, dtype=complex)
    y = np.asarray(y_quantized, dtype=complex)
    _check_var(v)
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    u = 0.5 * np.asarray(v, dtype=float)
    c2 = 0.5 * sigma2
    lo_r, up_r = quantizer.bin_edges(y.real)
    lo_i, up_i = quantizer.bin_edges(y.imag)
    m_r, v_r = truncated_moments(r.real, u, lo_r, up_r, c2)
    m_i, v_i = truncated_moments(r.imag, u, lo_i, up_i, c2)
    return m_r + 1j * m_i, v_r + v_i


def quantized_denoise(msg, y_quantized, quantizer, sigma2):
    mean, var = quantized_moments(msg.mean, msg.var, y_quantized, quantizer, sigma2)
    return PosteriorMoments(mean, float(np.mean(var)))


# --------------------------------------------------------------------------
# extrinsic messages
# --------------------------------------------------------------------------

def extrinsic(post, prior_msg, v_min=V_MIN, v_max=V_MAX):
    """Divide the posterior by the incoming message in natural parameters.

    A non-positive or tiny precision difference means the posterior carries no
    information beyond the incoming message; the variance is then pinned at
    v_max and the posterior mean is passed on. Variances below v_min are raised
    to v_min. Either case sets ``clamped``.
    """
    vp = post.avg_var
    v = prior_msg.var
    if not (vp > 0 and v > 0):
        raise ValueError("variances must be positive")
    prec = 1.0 / vp - 1.0 / v
    if prec <= 1.0 / v_max:
        return GaussianMessage(np.array(post.mean, copy=True), v_max, True)
    v_ext = 1.0 / prec
    r_ext = v_ext * (post.mean / vp - prior_msg.mean / v)
    if v_ext < v_min:
        return GaussianMessage(r_ext, v_min, True)
    return GaussianMessage(r_ext, v_ext, False)
