"""Joint Gaussian estimate of x and z = Ax from two scalar-variance messages.

With message variances v_x (on x) and v_z (on z) the posterior covariance is
Q = (I / v_x + A^H A / v_z)^{-1}.  Three interchangeable evaluations are
provided: a dense solve, one based on the cached SVD, and an FFT version for
partial unitary DFT matrices.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve


@dataclass
class LinearPosterior:
    x_mean: np.ndarray
    x_avg_var: float
    z_mean: np.ndarray
    z_avg_var: float


def _unpack(matrix, msg_x, msg_z):
    rx = np.asarray(msg_x.mean, dtype=complex)
    rz = np.asarray(msg_z.mean, dtype=complex)
    if rx.shape != (matrix.n,) or rz.shape != (matrix.m,):
        raise ValueError(f"message shapes {rx.shape}, {rz.shape} do not fit a {matrix.m}x{matrix.n} matrix")
    vx, vz = float(msg_x.var), float(msg_z.var)
    if not (vx > 0 and vz > 0):
        raise ValueError("message variances must be positive")
    return rx, vx, rz, vz


def linear_estimate_dense(matrix, msg_x, msg_z):
    """Reference path: explicit N x N inverse."""
    rx, vx, rz, vz = _unpack(matrix, msg_x, msg_z)
    a = matrix.entries
    ah = a.conj().T
    prec = (ah @ a) / vz
    prec[np.diag_indices_from(prec)] += 1.0 / vx
    factor = cho_factor(prec, lower=False)
    q = cho_solve(factor, np.eye(matrix.n, dtype=complex))
    x_mean = q @ (rx / vx + ah @ rz / vz)
    z_mean = a @ x_mean
    x_avg = np.trace(q).real / matrix.n
    z_avg = np.sum((a @ q) * a.conj()).real / matrix.m
    return LinearPosterior(x_mean, x_avg, z_mean, z_avg)


def _spectral_traces(s, n, m, vx, vz):
    """Average diagonals of Q and A Q A^H from the singular values alone."""
    d2 = np.zeros(n)
    d2[: len(s)] = np.asarray(s) ** 2
    g = 1.0 / (1.0 / vx + d2 / vz)
    return g.sum() / n, (d2 * g).sum() / m


def linear_estimate_svd(matrix, msg_x, msg_z):
    """O(N^2) path using A = U diag(s) V^H."""
    rx, vx, rz, vz = _unpack(matrix, msg_x, msg_z)
    u, s, v = matrix.svd
    r = len(s)
    d2 = np.zeros(matrix.n)
    d2[:r] = s ** 2
    # V^H x computed as conj(conj(x) V) to avoid materialising V^H
    b = (rx.conj() @ v).conj() / vx
    b[:r] += s * (rz.conj() @ u[:, :r]).conj() / vz
    c = b / (1.0 / vx + d2 / vz)
    x_mean = v @ c
    z_mean = u[:, :r] @ (s * c[:r])
    x_avg, z_avg = _spectral_traces(s, matrix.n, matrix.m, vx, vz)
    return LinearPosterior(x_mean, x_avg, z_mean, z_avg)


def linear_estimate_dft(matrix, msg_x, msg_z):
    """O(N log N) path for rows of the unitary DFT (A A^H = I)."""
    if not matrix.is_dft:
        raise ValueError("FFT path needs a partial-DFT sensing matrix")
    rx, vx, rz, vz = _unpack(matrix, msg_x, msg_z)
    mask = matrix.row_mask
    b = np.fft.fft(rx, norm="ortho") / vx
    b[matrix.dft_rows] += rz / vz
    c = b / (1.0 / vx + mask / vz)
    x_mean = np.fft.ifft(c, norm="ortho")
    z_mean = c[matrix.dft_rows]
    g = 1.0 / (1.0 / vx + 1.0 / vz)
    x_avg = (matrix.m * g + (matrix.n - matrix.m) * vx) / matrix.n
    return LinearPosterior(x_mean, x_avg, z_mean, g)


def linear_estimate(matrix, msg_x, msg_z, path="auto"):
    """Dispatch to the fastest path the matrix supports ("auto"), or force one."""
    if path == "auto":
        path = "dft" if matrix.is_dft else ("svd" if matrix.has_svd else "dense")
    try:
        fn = {"dense": linear_estimate_dense, "svd": linear_estimate_svd, "dft": linear_estimate_dft}[path]
    except KeyError:
        raise ValueError(f"unknown linear path {path!r}") from None
    return fn(matrix, msg_x, msg_z)
