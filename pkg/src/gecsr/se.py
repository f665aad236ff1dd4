"""State evolution: scalar recursion predicting the per-iteration MSE of GEC-SR.

The recursion tracks four scalars. v_x and v_z are the variances of the
messages entering the linear module. eta_x is the precision of the
equivalent AWGN channel seen by the prior denoiser. eta_z is the power of
the z-estimate handed to the quantized-output denoiser.
"""
from dataclasses import dataclass

import numpy as np

from .scalar import bin_ratios, composite_legendre, gauss_laguerre

DEFAULT_LAGUERRE = gauss_laguerre(64)
DEFAULT_PANEL_ORDER = 16

# composite rule layout for the Gaussian outer integral
_Z_LIMIT = 12.0
_Z_PANEL = 0.5
_EDGE_OFFSETS = np.array([-16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0])


class SeDivergedError(FloatingPointError):
    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of A A^H (length M) together with alpha = M / N."""
    eigenvalues: np.ndarray
    alpha: float

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if np.any(lam < 0):
            raise ValueError("eigenvalues must be non-negative")
        object.__setattr__(self, "eigenvalues", lam)

    @classmethod
    def of(cls, matrix):
        return cls(matrix.spectrum, matrix.alpha)

    @classmethod
    def ones(cls, m, alpha):
        return cls(np.ones(m), alpha)

    @property
    def mean(self):
        return float(self.eigenvalues.mean())


@dataclass
class SeState:
    t: int
    eta_z: float
    eta_z_tilde: float
    eta_x: float
    eta_x_tilde: float
    v_x: float
    v_z: float
    mse: float

    @property
    def mse_db(self):
        return 10.0 * np.log10(self.mse)


# --------------------------------------------------------------------------
# scalar channels
# --------------------------------------------------------------------------

def mmse_bg(eta, rho, quad=None):
    """MMSE of x ~ BG(rho) (unit power) observed as r = x + CN(0, 1/eta).

    Uses the Laguerre form
        rho/(rho+eta) + rho(1-rho) eta/(rho+eta)^2
            * int e^{-s} s / (rho + (1-rho)(1+eta/rho) e^{-s eta/(rho+eta)}) ds,
    obtained from the usual |z|^2 integral by peeling off its linear part and
    rescaling s = |z|^2 (1 + eta/rho). The remaining integrand is smooth for
    every eta, and nothing cancels at high SNR.
    """
    if eta < 0:
        raise ValueError(f"eta must be non-negative, got {eta}")
    if not (0.0 < rho <= 1.0):
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    if np.isinf(eta):
        return 0.0
    quad = DEFAULT_LAGUERRE if quad is None else quad
    base = rho / (rho + eta)
    if rho == 1.0 or eta == 0.0:
        return base
    k = (1.0 - rho) * (1.0 + eta / rho)
    s = quad.nodes
    integral = np.sum(quad.weights * s / (rho + k * np.exp(-s * eta / (rho + eta))))
    return base + rho * (1.0 - rho) * eta / (rho + eta) ** 2 * integral


def _panel_breaks(scale, width):
    grid = np.arange(-_Z_LIMIT, _Z_LIMIT + 0.5 * _Z_PANEL, _Z_PANEL)
    pts = [grid]
    for e in np.atleast_1d(scale):
        pts.append(e + width * _EDGE_OFFSETS)
    br = np.concatenate(pts)
    return br[(br >= -_Z_LIMIT) & (br <= _Z_LIMIT)]


def fisher_quantized(eta_z, P_z, sigma2, quantizer, order=DEFAULT_PANEL_ORDER):
    """Sum over codebook bins of  int Dz psi'(y; sqrt(eta_z/2) z, c2)^2 / psi(y; ...).

    c2 = (sigma2 + P_z - eta_z) / 2. This is the Fisher information of one real
    quantizer output about its mean. The outer Gaussian integral uses a fixed
    composite Gauss-Legendre rule on [-12, 12], with extra panels around every
    bin edge where the integrand varies on the scale c / sqrt(eta_z / 2).
    """
    c2 = 0.5 * (sigma2 + P_z - eta_z)
    if not c2 > 0:
        raise ValueError("effective noise variance sigma2 + P_z - eta_z must be positive")
    if eta_z < 0:
        raise ValueError("eta_z must be non-negative")
    c = np.sqrt(c2)
    low = quantizer.lower_edges[:, None]
    up = quantizer.upper_edges[:, None]
    scale = np.sqrt(0.5 * eta_z)
    if scale == 0.0:
        z, w = np.zeros(1), np.ones(1)
    else:
        finite = quantizer.upper_edges[:-1]
        z, w = composite_legendre(_panel_breaks(finite / scale, c / scale), order)
        w = w * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    mu = scale * z[None, :]
    logp, ra, rb, _, _ = bin_ratios((low - mu) / c, (up - mu) / c)
    with np.errstate(under="ignore"):
        integrand = np.exp(logp) * (ra - rb) ** 2 / c2
    return float(np.sum(integrand.sum(axis=0) * w))


def quantized_eta_z_tilde(eta_z, P_z, sigma2, quantizer, order=DEFAULT_PANEL_ORDER):
    """Complex-channel precision gained from one quantized complex output.

    The real and imaginary quantizers are identical and independent, and a
    circular complex precision is half the per-dimension Fisher information.
    """
    return 0.5 * fisher_quantized(eta_z, P_z, sigma2, quantizer, order)


# --------------------------------------------------------------------------
# spectral auxiliaries
# --------------------------------------------------------------------------

def spectral_eta_z_tilde(v_x, v_z, spectrum):
    lam = spectrum.eigenvalues
    return float(np.mean((1.0 / (v_z * v_x)) / (1.0 / v_x + lam / v_z)))


def spectral_eta_x_tilde(v_x, v_z, spectrum, P_x):
    lam = spectrum.eigenvalues
    alpha = spectrum.alpha
    residual = (1.0 - alpha) * v_x + alpha * np.mean(1.0 / (1.0 / v_x + lam / v_z))
    return P_x - float(residual)


# --------------------------------------------------------------------------
# recursions
# --------------------------------------------------------------------------

def _initial_state(P_x):
    return SeState(0, 0.0, np.nan, 0.0, np.nan, P_x, np.inf, P_x)


def _snap_eta_z(eta_z, P_z):
    # P_z - v_x can land a few ulps below zero when v_x == P_z (e.g. rho = 1)
    if -1e-12 * P_z < eta_z < 0.0:
        return 0.0
    return eta_z


def _require(ok, msg, traj):
    if not ok:
        raise SeDivergedError(msg, traj)


def se_run(spectrum, rho, sigma2, quantizer, P_x=1.0, T=50, order=DEFAULT_PANEL_ORDER, quad=None):
    """Iterate the general-spectrum recursion T times from v_x = P_x, eta_z = 0.

    Returns states t = 0..T. The MSE predicted for iteration t is states[t].mse.
    """
    P_z = P_x * spectrum.mean
    traj = [_initial_state(P_x)]
    st = traj[0]
    for t in range(T):
        # 1) quantized channel
        ezt = quantized_eta_z_tilde(st.eta_z, P_z, sigma2, quantizer, order)
        _require(ezt > 0 and np.isfinite(ezt), f"t={t}: non-positive quantized-channel precision", traj)
        v_z = 1.0 / ezt - (P_z - st.eta_z)
        _require(v_z > 0, f"t={t}: non-positive v_z", traj)
        # 2) linear module, x side
        ext = spectral_eta_x_tilde(st.v_x, v_z, spectrum, P_x)
        _require(P_x - ext > 0, f"t={t}: non-positive P_x - eta_x_tilde", traj)
        eta_x = 1.0 / (P_x - ext) - 1.0 / st.v_x
        _require(eta_x > 0 and np.isfinite(eta_x), f"t={t}: non-positive eta_x", traj)
        # 3) prior denoiser
        m = mmse_bg(eta_x, rho, quad)
        v_x = 1.0 / (1.0 / m - eta_x)
        _require(v_x > 0 and np.isfinite(v_x), f"t={t}: non-positive v_x", traj)
        # 4) linear module, z side
        ezs = spectral_eta_z_tilde(v_x, v_z, spectrum)
        eta_z = _snap_eta_z(P_z - (1.0 / ezs - v_z), P_z)
        _require(np.isfinite(eta_z) and eta_z >= 0, f"t={t}: eta_z out of range", traj)
        st = SeState(t + 1, eta_z, ezt, eta_x, ext, v_x, v_z, m)
        traj.append(st)
    return traj


def se_run_row_orthogonal(alpha, rho, sigma2, quantizer, P_x=1.0, T=50, order=DEFAULT_PANEL_ORDER, quad=None):
    """Closed recursion for A A^H = I (all eigenvalues one, P_z = P_x)."""
    P_z = P_x
    traj = [_initial_state(P_x)]
    v_x = P_x
    for t in range(T):
        ezt = quantized_eta_z_tilde(_snap_eta_z(P_z - v_x, P_z), P_z, sigma2, quantizer, order)
        _require(ezt > 0 and np.isfinite(ezt), f"t={t}: non-positive quantized-channel precision", traj)
        denom = 1.0 / (alpha * ezt) - v_x
        _require(denom > 0, f"t={t}: non-positive eta_x denominator", traj)
        eta_x = 1.0 / denom
        m = mmse_bg(eta_x, rho, quad)
        v_x_new = 1.0 / (1.0 / m - eta_x)
        _require(v_x_new > 0 and np.isfinite(v_x_new), f"t={t}: non-positive v_x", traj)
        v_z = 1.0 / ezt - v_x
        ext = P_x - 1.0 / (eta_x + 1.0 / v_x)
        traj.append(SeState(t + 1, _snap_eta_z(P_z - v_x_new, P_z), ezt, eta_x, ext, v_x_new, v_z, m))
        v_x = v_x_new
    return traj


def mse_trajectory(traj):
    """Predicted MSE for iterations 1..T."""
    return np.array([s.mse for s in traj[1:]])
