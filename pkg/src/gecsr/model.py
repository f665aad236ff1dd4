"""Signal model: sparse prior, uniform quantizer, sensing matrices and problem instances.

Randomness always comes from ``numpy.random.Generator`` (PCG64) objects built
from explicit integer seeds, so every instance can be regenerated exactly.
"""
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MATRIX_MAGIC = b"GECM"
INSTANCE_MAGIC = b"GECI"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

RANK_TOL = 1e-12


def as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def complex_normal(rng, size, var=1.0):
    """Circular complex Gaussian samples with E|w|^2 = var."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


# --------------------------------------------------------------------------
# prior
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BernoulliGaussianPrior:
    """Zero with probability 1 - rho, otherwise CN(0, 1/rho); E|x|^2 = 1."""
    rho: float

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"sparsity rho must lie in (0, 1], got {self.rho}")

    @property
    def second_moment(self):
        return 1.0

    def sample(self, n, rng):
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = as_rng(rng)
        active = rng.random(n) < self.rho
        return np.where(active, complex_normal(rng, n, 1.0 / self.rho), 0.0 + 0.0j)


def sample_prior(prior, n, rng):
    return prior.sample(n, rng)


# --------------------------------------------------------------------------
# quantizer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Quantizer:
    """Uniform mid-rise B-bit quantizer with saturating outer bins.

    Output index b runs over -2^B/2 + 1, ..., 2^B/2 and maps to (b - 1/2) * step.
    Bin b covers ((b - 1) * step, b * step], the outer two bins are open to -inf/+inf.
    """
    bits: int
    step: float = None

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ValueError(f"bits must be a positive integer, got {self.bits}")
        if self.step is None:
            object.__setattr__(self, "step", 2.0 ** (1 - self.bits))
        if not self.step > 0:
            raise ValueError(f"step must be positive, got {self.step}")

    @property
    def levels(self):
        return 2 ** self.bits

    @property
    def b_min(self):
        return -self.levels // 2 + 1

    @property
    def b_max(self):
        return self.levels // 2

    @property
    def codebook(self):
        b = np.arange(self.b_min, self.b_max + 1)
        return (b - 0.5) * self.step

    @property
    def lower_edges(self):
        b = np.arange(self.b_min, self.b_max + 1)
        return np.where(b == self.b_min, -np.inf, (b - 1) * self.step)

    @property
    def upper_edges(self):
        b = np.arange(self.b_min, self.b_max + 1)
        return np.where(b == self.b_max, np.inf, b * self.step)

    def index(self, y):
        """Bin index b of real inputs y."""
        b = np.ceil(np.asarray(y, dtype=float) / self.step)
        return np.clip(b, self.b_min, self.b_max).astype(np.int64)

    def quantize_real(self, y):
        return (self.index(y) - 0.5) * self.step

    def quantize(self, y):
        y = np.asarray(y)
        if np.iscomplexobj(y):
            return self.quantize_real(y.real) + 1j * self.quantize_real(y.imag)
        return self.quantize_real(y)

    def output_index(self, y_out, check=True):
        t = np.asarray(y_out, dtype=float) / self.step + 0.5
        b = np.rint(t)
        if check and (np.any(np.abs(t - b) > 1e-9) or np.any(b < self.b_min) or np.any(b > self.b_max)):
            raise ValueError("value is not a codebook output of this quantizer")
        return b.astype(np.int64)

    def bin_edges(self, y_out, check=True):
        """Vectorised (low, up) thresholds for codebook outputs."""
        b = self.output_index(y_out, check=check)
        low = np.where(b == self.b_min, -np.inf, (b - 1) * self.step)
        up = np.where(b == self.b_max, np.inf, b * self.step)
        return low, up

    def bin_of(self, y_out):
        """(low, up] bin of a single codebook output."""
        low, up = self.bin_edges(np.asarray([y_out], dtype=float))
        return float(low[0]), float(up[0])


def quantize(q, y):
    return q.quantize(y)


def bin_of(q, y_out):
    return q.bin_of(y_out)


# --------------------------------------------------------------------------
# sensing matrices
# --------------------------------------------------------------------------

class SensingMatrix:
    """Complex M x N sensing matrix with cached SVD or a partial-DFT descriptor.

    Construct with `from_dense`, `from_svd` or `make_partial_dft`; the object is
    treated as immutable afterwards.
    """

    def __init__(self, m, n, *, entries=None, svd=None, dft_rows=None):
        self.m = int(m)
        self.n = int(n)
        self._entries = entries
        self._svd = svd
        self.dft_rows = None if dft_rows is None else np.asarray(dft_rows, dtype=np.int64)
        if self.dft_rows is not None:
            self._mask = np.zeros(self.n, dtype=bool)
            self._mask[self.dft_rows] = True

    @classmethod
    def from_dense(cls, a, compute_svd=True):
        a = np.asarray(a, dtype=complex)
        if a.ndim != 2:
            raise ValueError("sensing matrix must be two-dimensional")
        mat = cls(a.shape[0], a.shape[1], entries=a)
        if compute_svd:
            u, s, vh = np.linalg.svd(a, full_matrices=True)
            mat._svd = (u, _truncate(s), vh.conj().T)
        return mat

    @classmethod
    def from_svd(cls, u, singular_values, v):
        s = np.asarray(singular_values, dtype=float)
        if u.shape[0] != u.shape[1] or v.shape[0] != v.shape[1]:
            raise ValueError("U and V must be square")
        if len(s) != min(u.shape[0], v.shape[0]):
            raise ValueError("need min(M, N) singular values")
        return cls(u.shape[0], v.shape[0], svd=(u, _truncate(s), v))

    @property
    def is_dft(self):
        return self.dft_rows is not None

    @property
    def has_svd(self):
        return self._svd is not None or self.is_dft

    @property
    def svd(self):
        """(U, singular values, V) with A = U diag(s) V^H."""
        if self._svd is None:
            if not self.is_dft:
                raise ValueError("sensing matrix carries no SVD cache")
            # A = I [I 0] V^H with V^H = DFT rows, kept rows first
            others = np.flatnonzero(~self._mask)
            k = np.concatenate([self.dft_rows, others])[:, None]
            j = np.arange(self.n)[None, :]
            vh = np.exp(-2j * np.pi * ((k * j) % self.n) / self.n) / np.sqrt(self.n)
            self._svd = (np.eye(self.m, dtype=complex), np.ones(self.m), vh.conj().T)
        return self._svd

    @property
    def row_mask(self):
        return self._mask

    @property
    def shape(self):
        return (self.m, self.n)

    @property
    def alpha(self):
        return self.m / self.n

    @property
    def entries(self):
        if self._entries is None:
            if self.is_dft:
                k = self.dft_rows[:, None]
                j = np.arange(self.n)[None, :]
                self._entries = np.exp(-2j * np.pi * ((k * j) % self.n) / self.n) / np.sqrt(self.n)
            else:
                u, s, v = self._svd
                r = len(s)
                self._entries = (u[:, :r] * s) @ v[:, :r].conj().T
        return self._entries

    @property
    def spectrum(self):
        """Eigenvalues of A A^H, length M, zero padded past the rank."""
        if self.is_dft:
            return np.ones(self.m)
        s = self.svd[1]
        lam = np.zeros(self.m)
        lam[: len(s)] = s ** 2
        return lam

    def matvec(self, x):
        if self.is_dft:
            return np.fft.fft(x, norm="ortho")[self.dft_rows]
        if self._entries is None:
            u, s, v = self._svd
            r = len(s)
            return u[:, :r] @ (s * (np.asarray(x).conj() @ v[:, :r]).conj())
        return self._entries @ x

    def rmatvec(self, z):
        if self.is_dft:
            full = np.zeros(self.n, dtype=complex)
            full[self.dft_rows] = z
            return np.fft.ifft(full, norm="ortho")
        if self._entries is None:
            u, s, v = self._svd
            r = len(s)
            return v[:, :r] @ (s * (np.asarray(z).conj() @ u[:, :r]).conj())
        return (np.asarray(z).conj() @ self._entries).conj()


def _truncate(s):
    s = np.asarray(s, dtype=float).copy()
    if len(s) and s.max() > 0:
        s[s < RANK_TOL * s.max()] = 0.0
    return s


def make_partial_dft(n, m, rng):
    """Rows of the unitary N-point DFT picked uniformly without replacement."""
    if m > n or m < 1:
        raise ValueError(f"need 1 <= m <= n, got m={m}, n={n}")
    rows = np.sort(as_rng(rng).choice(n, size=m, replace=False))
    return SensingMatrix(m, n, dft_rows=rows)


def haar_unitary(n, rng):
    """Haar-distributed n x n unitary via QR with phase-corrected R diagonal."""
    z = complex_normal(as_rng(rng), (n, n))
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))[None, :]


def make_svd_matrix(n, m, singular_values, rng):
    """A = U diag(s) V^H with Haar U (M x M) and V (N x N)."""
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or len(s) != min(m, n):
        raise ValueError(f"need exactly min(m, n) = {min(m, n)} singular values, got {s.shape}")
    if np.any(s < 0):
        raise ValueError("singular values must be non-negative")
    rng = as_rng(rng)
    u = haar_unitary(m, rng)
    v = haar_unitary(n, rng)
    return SensingMatrix.from_svd(u, s, v)


def singular_values_from_groups(groups):
    """[(value, count), ...] -> concatenated singular-value vector."""
    return np.concatenate([np.full(int(c), float(v)) for v, c in groups])


# --------------------------------------------------------------------------
# problem instances
# --------------------------------------------------------------------------

@dataclass
class ProblemInstance:
    x_true: np.ndarray
    z_true: np.ndarray
    y_quantized: np.ndarray
    sigma2: float
    seed: int
    quantizer: Quantizer = field(default=None)


def generate_instance(matrix, prior, quantizer, sigma2, seed):
    """Draw x from the prior and quantize y = Ax + w, w ~ CN(0, sigma2 I)."""
    rng = np.random.default_rng(seed)
    x = prior.sample(matrix.n, rng)
    z = matrix.matvec(x)
    w = complex_normal(rng, matrix.m, sigma2)
    y = quantizer.quantize(z + w)
    return ProblemInstance(x, z, y, float(sigma2), int(seed), quantizer)


# --------------------------------------------------------------------------
# binary formats
# --------------------------------------------------------------------------

def _write_complex(fh, arr):
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    fh.write(arr.view("<f8").tobytes())


def _read_complex(fh, count):
    buf = fh.read(16 * count)
    if len(buf) != 16 * count:
        raise ValueError("truncated file")
    return np.frombuffer(buf, dtype="<f8").view(np.complex128).copy()


def _read_header(fh, magic):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated header")
    got, version, m, n = _HEADER.unpack(raw)
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    return m, n


def save_matrix(matrix, path):
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, FORMAT_VERSION, matrix.m, matrix.n))
        _write_complex(fh, matrix.entries)


def load_matrix(path):
    """Read a GECM file; the SVD cache is recomputed."""
    with open(path, "rb") as fh:
        m, n = _read_header(fh, MATRIX_MAGIC)
        a = _read_complex(fh, m * n).reshape(m, n)
    return SensingMatrix.from_dense(a)


_INSTANCE_META = struct.Struct("<dIdQ")


def save_instance(instance, path):
    """GECI file: header (M, N), then sigma2 f64, bits u32, step f64, seed u64, x_true, y_quantized."""
    q = instance.quantizer
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(INSTANCE_MAGIC, FORMAT_VERSION, len(instance.y_quantized), len(instance.x_true)))
        fh.write(_INSTANCE_META.pack(instance.sigma2, q.bits, q.step, instance.seed))
        _write_complex(fh, instance.x_true)
        _write_complex(fh, instance.y_quantized)


def load_instance(path, matrix=None):
    """Read a GECI file. z_true is rebuilt when the matrix is supplied."""
    with open(Path(path), "rb") as fh:
        m, n = _read_header(fh, INSTANCE_MAGIC)
        sigma2, bits, step, seed = _INSTANCE_META.unpack(fh.read(_INSTANCE_META.size))
        x = _read_complex(fh, n)
        y = _read_complex(fh, m)
    z = matrix.matvec(x) if matrix is not None else None
    return ProblemInstance(x, z, y, sigma2, seed, Quantizer(bits, step))
