"""Monte-Carlo recovery trials, state-evolution predictions and CSV tables.

Trial ``i`` uses seed ``base_seed + i`` for the signal and noise; its sensing
matrix comes from ``default_rng((base_seed + i, 1))`` (or ``(base_seed, 1)``
with a fixed matrix). Every bit depth of one trial reuses the same signal and
matrix, so results for different B are directly comparable.
"""
import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .engine import DivergedError, GecConfig, gec_sr_run, to_db
from .model import (
    BernoulliGaussianPrior,
    Quantizer,
    generate_instance,
    make_partial_dft,
    make_svd_matrix,
    singular_values_from_groups,
)
from .se import SeDivergedError, Spectrum, se_run, se_run_row_orthogonal

log = logging.getLogger(__name__)

MATRIX_STREAM = 1
DIVERGENCE_LIMIT = 0.10

RECOVER_COLUMNS = ["bits", "iter", "mse_sim_db", "n_diverged", "v1x", "v1z", "clamp_events"]
SE_COLUMNS = ["bits", "iter", "mse_se_db", "mse_se_row_orth_db"]
EXPERIMENT_COLUMNS = ["bits", "iter", "mse_sim_db", "mse_se_db", "n_diverged", "v1x", "v1z", "clamp_events"]

PRESETS = {
    "fig3": {
        "desk": {"kind": "partial-dft", "n": 1024, "m": 717},
        "full": {"kind": "partial-dft", "n": 8192, "m": 5734},
        "bits": [3],
    },
    "fig2": {
        "desk": {"kind": "svd-spectrum", "n": 2048, "m": 1434, "groups": [[1.0, 1250], [3.0, 184]]},
        "full": {"kind": "svd-spectrum", "n": 8192, "m": 5734, "groups": [[1.0, 5000], [3.0, 734]]},
        "bits": [1, 2, 3],
    },
}
FULL_SCALE_TRIALS = 2000


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    matrix: dict = field(default_factory=lambda: dict(PRESETS["fig3"]["desk"]))
    rho: float = 0.4
    sigma2: float = 1e-5
    bits: list = field(default_factory=lambda: [3])
    step: float = None
    trials: int = 200
    tmax: int = 30
    seed: int = 0
    damping: float = 0.0
    tol: float = 1e-8
    fixed_matrix: bool = False
    workers: int = 1
    out: str = None
    dump_trials: bool = False

    def validate(self):
        m = self.matrix
        kind = m.get("kind")
        if kind not in ("partial-dft", "svd-spectrum"):
            raise ConfigError(f"unknown matrix kind {kind!r}")
        n, mm = m.get("n"), m.get("m")
        if not (isinstance(n, int) and isinstance(mm, int) and n > 0 and mm > 0):
            raise ConfigError("matrix dims n, m must be positive integers")
        if kind == "partial-dft" and mm > n:
            raise ConfigError("partial DFT needs m <= n")
        if kind == "svd-spectrum":
            groups = m.get("groups")
            if not groups:
                raise ConfigError("svd-spectrum matrix needs singular-value groups")
            if sum(int(c) for _, c in groups) != min(n, mm):
                raise ConfigError(f"singular-value group sizes must sum to min(m, n) = {min(n, mm)}")
            if any(float(v) < 0 or int(c) < 0 for v, c in groups):
                raise ConfigError("singular values and group sizes must be non-negative")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.tmax < 1:
            raise ConfigError("tmax must be >= 1")
        if not (0.0 < self.rho <= 1.0):
            raise ConfigError("rho must lie in (0, 1]")
        if self.sigma2 < 0:
            raise ConfigError("sigma2 must be non-negative")
        if not self.bits or any(int(b) != b or b < 1 for b in self.bits):
            raise ConfigError("bits must be a non-empty list of positive integers")
        if self.step is not None and not self.step > 0:
            raise ConfigError("quantizer step must be positive")
        if not (0.0 <= self.damping <= 1.0):
            raise ConfigError("damping must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**data)

    def quantizer(self, bits):
        return Quantizer(int(bits), self.step)

    @property
    def prior(self):
        return BernoulliGaussianPrior(self.rho)


def apply_preset(cfg, name, full_scale=False):
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}") from None
    matrix = dict(preset["full" if full_scale else "desk"])
    out = replace(cfg, matrix=matrix, bits=list(preset["bits"]))
    if full_scale:
        out.trials = FULL_SCALE_TRIALS
    return out


def to_full_scale(cfg):
    """Full dimensions (N=8192, M=5734, 2000 trials) for the configured matrix kind."""
    kind = cfg.matrix.get("kind")
    name = "fig3" if kind == "partial-dft" else "fig2"
    matrix = dict(PRESETS[name]["full"])
    if kind == "svd-spectrum":
        values = [float(v) for v, _ in cfg.matrix["groups"]]
        desk = PRESETS["fig2"]["desk"]["groups"]
        if values != [v for v, _ in desk]:
            # keep the configured singular values, rescale the group sizes
            matrix["groups"] = _rescale_groups(cfg.matrix["groups"], cfg.matrix, matrix["m"], matrix["n"])
    return replace(cfg, matrix=matrix, trials=FULL_SCALE_TRIALS)


def _rescale_groups(groups, old, m, n):
    total = min(m, n)
    old_total = min(old["m"], old["n"])
    sizes = [int(round(int(c) * total / old_total)) for _, c in groups]
    sizes[-1] = total - sum(sizes[:-1])
    return [[float(v), s] for (v, _), s in zip(groups, sizes)]


# --------------------------------------------------------------------------
# matrices and spectra
# --------------------------------------------------------------------------

def build_matrix(spec, rng):
    kind = spec["kind"]
    if kind == "partial-dft":
        return make_partial_dft(spec["n"], spec["m"], rng)
    if kind == "svd-spectrum":
        s = singular_values_from_groups(spec["groups"])
        return make_svd_matrix(spec["n"], spec["m"], s, rng)
    raise ConfigError(f"unknown matrix kind {kind!r}")


def spec_spectrum(spec):
    """Spectrum of A A^H implied by a matrix spec (no random draw needed)."""
    n, m = spec["n"], spec["m"]
    if spec["kind"] == "partial-dft":
        return Spectrum(np.ones(m), m / n)
    s = singular_values_from_groups(spec["groups"])
    lam = np.zeros(m)
    lam[: len(s)] = s ** 2
    return Spectrum(lam, m / n)


def matrix_seed(cfg, trial):
    return (cfg.seed, MATRIX_STREAM) if cfg.fixed_matrix else (cfg.seed + trial, MATRIX_STREAM)


# --------------------------------------------------------------------------
# trials
# --------------------------------------------------------------------------

def _pad(values, length):
    values = list(values)
    if values and len(values) < length:
        values += [values[-1]] * (length - len(values))
    return values


def run_trial(cfg, trial, matrix=None):
    """All bit depths of one trial. Returns {bits: record}."""
    if matrix is None:
        matrix = build_matrix(cfg.matrix, np.random.default_rng(matrix_seed(cfg, trial)))
    seed = cfg.seed + trial
    prior = cfg.prior
    gec = GecConfig(max_iters=cfg.tmax, damping=cfg.damping, convergence_tol=cfg.tol)
    results = {}
    for b in cfg.bits:
        q = cfg.quantizer(b)
        inst = generate_instance(matrix, prior, q, cfg.sigma2, seed)
        rec = {"trial": trial, "seed": seed, "diverged": False}
        try:
            state = gec_sr_run(matrix, inst.y_quantized, q, cfg.sigma2, prior, gec, inst.x_true)
        except DivergedError as exc:
            log.warning("trial %d (B=%d) diverged: %s", trial, b, exc)
            rec.update(diverged=True, mse=[], v1x=[], v1z=[], clamps=[])
            results[b] = rec
            continue
        h = state.history
        rec["mse"] = _pad([r.mse for r in h], cfg.tmax)
        rec["v1x"] = _pad([r.v_1x for r in h], cfg.tmax)
        rec["v1z"] = _pad([r.v_1z for r in h], cfg.tmax)
        rec["clamps"] = [r.clamp_events for r in h] + [0] * (cfg.tmax - len(h))
        results[b] = rec
    return results


def _trial_worker(args):
    cfg, trial, matrix = args
    return trial, run_trial(cfg, trial, matrix)


def run_trials(cfg):
    """Run every trial, possibly across processes; output is indexed by trial id."""
    shared = None
    if cfg.fixed_matrix:
        shared = build_matrix(cfg.matrix, np.random.default_rng(matrix_seed(cfg, 0)))
    tasks = [(cfg, i, shared) for i in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = dict(pool.map(_trial_worker, tasks))
    else:
        done = dict(map(_trial_worker, tasks))
    return [done[i] for i in range(cfg.trials)]


def aggregate(cfg, trials):
    """Per (bits, iter): dB of the trial-mean linear MSE plus diagnostics."""
    rows = []
    for b in cfg.bits:
        recs = [t[b] for t in trials]
        ok = [r for r in recs if not r["diverged"]]
        n_div = len(recs) - len(ok)
        for k in range(cfg.tmax):
            if ok:
                mse = float(np.mean([r["mse"][k] for r in ok]))
                v1x = float(np.mean([r["v1x"][k] for r in ok]))
                v1z = float(np.mean([r["v1z"][k] for r in ok]))
                clamps = int(sum(r["clamps"][k] for r in ok))
            else:
                mse = v1x = v1z = float("nan")
                clamps = 0
            rows.append({"bits": int(b), "iter": k + 1, "mse_sim_db": float(to_db(mse)),
                         "n_diverged": n_div, "v1x": v1x, "v1z": v1z, "clamp_events": clamps})
    return rows


def divergence_fraction(cfg, trials):
    total = len(trials) * len(cfg.bits)
    bad = sum(t[b]["diverged"] for t in trials for b in cfg.bits)
    return bad / total


def trial_rows(cfg, trials):
    rows = []
    for b in cfg.bits:
        for t in trials:
            r = t[b]
            for k, v in enumerate(r["mse"]):
                rows.append({"bits": int(b), "trial": r["trial"], "seed": r["seed"], "iter": k + 1,
                             "mse_db": float(to_db(v)), "diverged": int(r["diverged"])})
            if r["diverged"]:
                rows.append({"bits": int(b), "trial": r["trial"], "seed": r["seed"], "iter": 0,
                             "mse_db": float("nan"), "diverged": 1})
    return rows


# --------------------------------------------------------------------------
# state evolution
# --------------------------------------------------------------------------

def se_rows(cfg):
    """Predicted MSE per (bits, iter). Raises SeDivergedError with partial rows attached."""
    spectrum = spec_spectrum(cfg.matrix)
    all_ones = bool(np.all(spectrum.eigenvalues == 1.0))
    rows = []
    for b in cfg.bits:
        q = cfg.quantizer(b)
        try:
            traj = se_run(spectrum, cfg.rho, cfg.sigma2, q, T=cfg.tmax)
        except SeDivergedError as exc:
            traj = exc.trajectory
            rows += _se_block(b, traj, None)
            exc.rows = rows
            raise
        orth = se_run_row_orthogonal(spectrum.alpha, cfg.rho, cfg.sigma2, q, T=cfg.tmax) if all_ones else None
        rows += _se_block(b, traj, orth)
    return rows


def _se_block(b, traj, orth):
    out = []
    for k, st in enumerate(traj[1:]):
        ro = float(to_db(orth[k + 1].mse)) if orth is not None else float("nan")
        out.append({"bits": int(b), "iter": k + 1, "mse_se_db": float(to_db(st.mse)), "mse_se_row_orth_db": ro})
    return out


def merge_rows(sim, se):
    key = {(r["bits"], r["iter"]): r["mse_se_db"] for r in se}
    return [{**r, "mse_se_db": key.get((r["bits"], r["iter"]), float("nan"))} for r in sim]


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, columns, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(r[c]) for c in columns])


def rows_to_csv(rows, columns):
    buf = io.StringIO()
    write_csv(rows, columns, buf)
    return buf.getvalue()


_INT_COLUMNS = {"bits", "iter", "n_diverged", "clamp_events", "trial", "seed", "diverged"}


def read_csv(fh):
    reader = csv.DictReader(fh)
    return [{k: (int(v) if k in _INT_COLUMNS else float(v)) for k, v in row.items()} for row in reader]


def config_json(cfg):
    return json.dumps(asdict(cfg), indent=2, sort_keys=True)
