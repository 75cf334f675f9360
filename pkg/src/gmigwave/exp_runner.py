"""End-to-end experiments: configure, sample, far fields, estimate, recover, report.

Configurations are small YAML (or JSON) documents with analytic strength
shapes.  All randomness derives from one root seed: realization ``i`` of the
sampling stage uses ``SeedSequence(root, spawn_key=(0, i))``, so editing the
config elsewhere never perturbs the draws.
"""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import __version__
from . import io as gio
from .band_estimators import EstimatorConfig, band_average_set, ensemble_limit
from .forward_ops import DEFAULT_NYQUIST_FRACTION, DirectionSet, FarFieldRecord, FarFieldSource, farfield_many
from .gmig_field import (
    AdmissibilityError,
    FieldRealization,
    Grid,
    MatrixStrengthPair,
    PreparedSampler,
    ScalarStrengthPair,
    default_delta,
    validate_strengths,
)
from .shapes import profile_from_config
from .symbol_recovery import RecoveryReport, invert_polar_fourier, normalize, recovery_error
from .waves_core import WaveKind

STAGES = ("sample", "farfield", "estimate", "recover", "report")
STAGE_IDS = {name: i for i, name in enumerate(STAGES)}
SWEEP_AXES = ("Q", "M", "directions", "tau_max")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A stage produced non-finite or otherwise unusable numbers (CLI exit code 3)."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


# Configuration ---------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    kind: WaveKind
    d: int
    grid: Grid
    m: float
    delta: float
    support_radius: Optional[float]
    covariance: Any
    relation: Any
    Qs: list
    dk: float
    shifts: np.ndarray
    directions: int
    mode: str
    M: int
    kappa_eval: float
    root_seed: int
    realizations: int
    target_n: int
    target_length: float
    nyquist_fraction: float
    out: Optional[str]
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def hash(self) -> str:
        return gio.config_hash(self.raw)

    @property
    def target_grid(self) -> Grid:
        return Grid(self.d, self.target_n, self.target_length)


def _interval_text(kind: WaveKind, d: int) -> str:
    if kind.tag == "electromagnetic":
        return "(-1, 3]"
    lo = "d-4" if kind.tag in ("acoustic", "elastic") else "d-6"
    a, b = kind.order_interval(d)
    return f"({lo}, d] = ({a:g}, {b:g}]"


def _relation_profile(desc, cov_profile):
    """Relation entry: a profile, None, or {scale, phase} relative to the covariance profile."""
    if desc is None:
        return None
    if isinstance(desc, dict) and "scale" in desc:
        return ("scaled", float(desc["scale"]), float(desc.get("phase", 0.0)))
    return desc


def _build_profiles(desc, d, matrix: bool):
    if desc is None:
        return None
    if matrix:
        if not (isinstance(desc, list) and len(desc) == d and all(len(r) == d for r in desc)):
            raise ConfigError(f"matrix strengths must be {d}x{d} nested lists of shapes")
        return [[profile_from_config(e, d) for e in row] for row in desc]
    return profile_from_config(desc, d)


def parse_config(raw: dict, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Validate a plain-dict configuration; every rejection names the violated condition."""
    raw = copy.deepcopy(raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    try:
        tag = raw.get("kind", "acoustic")
        lame = raw.get("lame", {}) or {}
        kind = WaveKind(tag, lame.get("lambda"), lame.get("mu"))
        d = int(raw.get("d", 2))
        if d not in (2, 3):
            raise ConfigError(f"d must be 2 or 3, got {d}")
        if tag == "electromagnetic" and d != 3:
            raise ConfigError("electromagnetic experiments require d = 3")
        g = raw.get("grid", {})
        grid = Grid(d, int(g.get("n", 256)), float(g.get("length", 20.0)))
        tg = raw.get("target_grid", 64)
        if isinstance(tg, dict):
            target_n, target_length = int(tg.get("n", 64)), float(tg.get("length", grid.length))
        else:
            target_n, target_length = int(tg), grid.length
        m = float(raw.get("m", 2.0))
        lo, hi = kind.order_interval(d)
        if not (lo < m <= hi):
            raise ConfigError(
                f"order m={m:g} violates the admissible interval {_interval_text(kind, d)} for {tag} waves in d={d}"
            )
        delta = raw.get("delta")
        delta = default_delta(grid) if delta is None else float(delta)
        strengths = raw.get("strengths", {})
        matrix = kind.is_vector
        cov = _build_profiles(strengths.get("covariance"), d, matrix)
        if cov is None:
            raise ConfigError("strengths.covariance is required")
        rel_spec = _relation_profile(strengths.get("relation"), cov)
        rel = rel_spec if isinstance(rel_spec, tuple) else _build_profiles(rel_spec, d, matrix)
        band = raw.get("band", {})
        Qs = band.get("Q", [128])
        Qs = [float(q) for q in (Qs if isinstance(Qs, list) else [Qs])]
        dk = float(band.get("dk", 0.25))
        if not 0 < dk <= 0.5:
            raise ConfigError(f"band step dk must lie in (0, 0.5], got {dk}")
        sh = band.get("shifts", {})
        if isinstance(sh, list):
            shifts = np.asarray(sh, dtype=float)
        else:
            step = sh.get("step")
            step = 2 * np.pi / target_length if step is None else float(step)
            shifts = step * np.arange(int(sh.get("count", 9)))
        if shifts[0] != 0:
            raise ConfigError("shift list must start at tau = 0")
        mode_raw = raw.get("mode", "single")
        if isinstance(mode_raw, dict):
            mode = "ensemble"
            M = int(mode_raw.get("ensemble", mode_raw).get("M", 100))
            kappa_eval = float(mode_raw.get("ensemble", mode_raw).get("kappa_eval", 64))
            if M < 2:
                raise ConfigError("ensemble size M must be at least 2")
        elif mode_raw == "single":
            mode, M, kappa_eval = "single", 0, 0.0
        else:
            raise ConfigError(f"mode must be 'single' or {{ensemble: {{M, kappa_eval}}}}, got {mode_raw!r}")
        seeds = raw.get("seeds", {}) or {}
        root_seed = int(seeds.get("root", 0))
        if not 0 <= root_seed < 2**64:
            raise ConfigError("root seed must be an unsigned 64-bit integer")
        cfg = ExperimentConfig(
            kind=kind, d=d, grid=grid, m=m, delta=delta, support_radius=raw.get("support_radius"),
            covariance=cov, relation=rel, Qs=Qs, dk=dk, shifts=shifts,
            directions=int(raw.get("directions", 16)), mode=mode, M=M, kappa_eval=kappa_eval,
            root_seed=root_seed, realizations=int(seeds.get("realizations", 1)),
            target_n=target_n, target_length=target_length,
            nyquist_fraction=float(raw.get("nyquist_fraction", DEFAULT_NYQUIST_FRACTION)),
            out=raw.get("out"), raw=raw,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    _check_feasibility(cfg)
    return cfg


def _check_feasibility(cfg: ExperimentConfig):
    scale = 1.0
    if cfg.kind.tag == "elastic":
        scale = cfg.kind.speeds.c_s
    top = (cfg.kappa_eval + cfg.shifts.max()) if cfg.mode == "ensemble" else 2 * max(cfg.Qs) + cfg.shifts.max()
    if scale * top > cfg.nyquist_fraction * cfg.grid.nyquist:
        raise ConfigError(
            f"highest wavenumber {scale * top:.4g} exceeds the Nyquist budget "
            f"{cfg.nyquist_fraction:g} x pi/h = {cfg.nyquist_fraction * cfg.grid.nyquist:.4g}"
        )
    tg = cfg.target_grid
    if cfg.shifts.max() * wavenumber_scale_of(cfg) * tg.h > np.pi:
        raise ConfigError("tau_max exceeds the target-grid Nyquist limit pi/h")
    if cfg.directions < 2 or cfg.directions % 2:
        raise ConfigError("direction count must be even (negation-closed set)")
    rep = validate_strengths(build_strengths(cfg, cfg.grid), cfg.grid)
    if not rep.ok:
        raise ConfigError("strengths rejected: " + "; ".join(rep.messages))


def wavenumber_scale_of(cfg: ExperimentConfig) -> float:
    return cfg.kind.speeds.c_s if cfg.kind.tag == "elastic" else 1.0


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(raw, overrides)


# Strengths and truths ------------------------------------------------------------

def _eval_profile(grid: Grid, prof):
    return np.zeros(grid.shape) if prof is None else grid.evaluate(prof)


def _relation_values(cfg, grid, cov_vals, entry=None):
    rel = cfg.relation
    if rel is None:
        return np.zeros_like(cov_vals, dtype=complex)
    if isinstance(rel, tuple):
        return rel[1] * np.exp(1j * rel[2]) * cov_vals
    prof = rel if entry is None else rel[entry[0]][entry[1]]
    return _eval_profile(grid, prof).astype(complex)


def strength_arrays(cfg: ExperimentConfig, grid: Grid):
    """(covariance, relation) strength arrays on a grid, zeroed outside D."""
    mask = grid.support_mask(cfg.support_radius)
    if not cfg.kind.is_vector:
        ac = np.real(_eval_profile(grid, cfg.covariance))
        ar = _relation_values(cfg, grid, ac)
        return np.where(mask, ac, 0.0), np.where(mask, ar, 0.0)
    d = cfg.d
    Ac = np.zeros(grid.shape + (d, d), dtype=complex)
    Ar = np.zeros_like(Ac)
    for i in range(d):
        for j in range(d):
            Ac[..., i, j] = _eval_profile(grid, cfg.covariance[i][j])
            Ar[..., i, j] = _relation_values(cfg, grid, Ac[..., i, j], (i, j))
    m3 = mask[..., None, None]
    return np.where(m3, Ac, 0), np.where(m3, Ar, 0)


def build_strengths(cfg: ExperimentConfig, grid: Grid):
    a, b = strength_arrays(cfg, grid)
    if cfg.kind.is_vector:
        return MatrixStrengthPair(cfg.m, a, b)
    return ScalarStrengthPair(cfg.m, a, b)


def realization_seed(root: int, index: int, stage: str = "sample") -> np.random.SeedSequence:
    return np.random.SeedSequence(root, spawn_key=(STAGE_IDS[stage], index))


def sample_realizations(cfg: ExperimentConfig, strengths, count: int, start: int = 0) -> FieldRealization:
    """``count`` realizations stacked on a leading axis, each from its own seed stream."""
    sampler = PreparedSampler(strengths, cfg.grid, cfg.delta)
    vals = [sampler.draw(realization_seed(cfg.root_seed, i)).values for i in range(start, start + count)]
    return FieldRealization(grid=cfg.grid, values=np.stack(vals), seed=(cfg.root_seed, start, count),
                            delta=cfg.delta, m=cfg.m)


# Recording/replaying far-field sources -----------------------------------------

def _query_key(xhat, freq, parts):
    freq = np.atleast_1d(np.asarray(freq, dtype=float))
    return (tuple(np.round(np.asarray(xhat, dtype=float), 15)), float(freq[0]), float(freq[-1]), freq.size, parts)


class RecordingSource:
    """Wraps a far-field callable and keeps every answered query."""

    def __init__(self, inner, kind: WaveKind):
        self.inner = inner
        self.kind = kind
        self.log = []

    def __call__(self, xhat, freq, parts: str = "ps"):
        if self.kind.tag == "elastic":
            val = self.inner(xhat, freq, parts=parts)
        else:
            val = self.inner(xhat, freq)
        self.log.append((np.asarray(xhat, dtype=float), np.atleast_1d(np.asarray(freq, dtype=float)), parts, val))
        return val


class ReplaySource:
    """Serves previously recorded queries; an unknown query is an error."""

    def __init__(self, log, kind: WaveKind):
        self.kind = kind
        self.table = {_query_key(x, f, p): v for x, f, p, v in log}

    def __call__(self, xhat, freq, parts: str = "ps"):
        key = _query_key(xhat, freq, parts)
        if key not in self.table:
            raise KeyError(f"far-field query not recorded: direction {key[0]}, {key[3]} frequencies")
        return self.table[key]


def _log_to_arrays(log, kind):
    arrays = {}
    meta = []
    for q, (x, fr, parts, val) in enumerate(log):
        arrays[f"q{q}_freq"] = fr
        if kind.tag == "elastic":
            for name, part in zip("ps", val):
                if part is not None:
                    arrays[f"q{q}_{name}"] = part
        else:
            arrays[f"q{q}_val"] = val
        meta.append({"xhat": x.tolist(), "parts": parts})
    return meta, arrays


def _arrays_to_log(meta, arrays, kind):
    log = []
    for q, info in enumerate(meta):
        fr = arrays[f"q{q}_freq"]
        if kind.tag == "elastic":
            val = (arrays.get(f"q{q}_p"), arrays.get(f"q{q}_s"))
        else:
            val = arrays[f"q{q}_val"]
        log.append((np.asarray(info["xhat"]), fr, info["parts"], val))
    return log


# Pipeline --------------------------------------------------------------------------

def direction_set(cfg: ExperimentConfig, count: Optional[int] = None) -> DirectionSet:
    return DirectionSet.make(cfg.d, count or cfg.directions)


def _estimate_single(cfg, source, dirs: DirectionSet, shifts, Qs):
    return band_average_set(cfg.kind, source, dirs.vectors, dirs.neg, shifts, Qs, cfg.dk, cfg.m, cfg.d)


def _estimate_ensemble(cfg, source, dirs: DirectionSet, shifts, M):
    out = {}
    for target in ("covariance", "relation"):
        est, err = [], []
        for j, xh in enumerate(dirs.vectors):
            row_e, row_s = [], []
            for t in shifts:
                ec = EstimatorConfig(kind=cfg.kind, target=target, m=cfg.m, d=cfg.d, xhat=tuple(xh), tau=float(t),
                                     mode="ensemble", M=M, kappa_eval=cfg.kappa_eval)
                r = ensemble_limit(ec, source)
                row_e.append(r.estimate)
                row_s.append(r.stderr)
            est.append(row_e)
            err.append(row_s)
        out[(target, cfg.kappa_eval)] = (np.array(est), np.array(err))
    return out


def _batch_source(cfg, fields: FieldRealization, M: Optional[int] = None):
    vals = fields.values if M is None else fields.values[:M]
    f = FieldRealization(grid=fields.grid, values=vals, seed=fields.seed, delta=fields.delta, m=fields.m)
    return FarFieldSource(cfg.kind, f, nyquist_fraction=cfg.nyquist_fraction)


def _single_source(cfg, fields: FieldRealization, index: int):
    f = FieldRealization(grid=fields.grid, values=fields.values[index], seed=(cfg.root_seed, index),
                         delta=fields.delta, m=fields.m)
    return FarFieldSource(cfg.kind, f, nyquist_fraction=cfg.nyquist_fraction)


class TableSource:
    """Far fields tabulated on a (direction x frequency) product set, answered by lookup.

    ``tables`` maps a part tag ("" for non-elastic kinds, "p"/"s" for
    elastic) to arrays laid out batch + (n_dir, n_freq) (+ (d,)).  Elastic
    compressional tables live at c_s/c_p times the listed frequencies, which
    is what the estimators request.
    """

    def __init__(self, kind: WaveKind, directions, freqs, tables: dict):
        self.kind = kind
        self.directions = np.asarray(directions, dtype=float)
        self.freqs = np.asarray(freqs, dtype=float)
        self.tables = tables
        self._vector = kind.is_vector or kind.tag == "electromagnetic"

    def _freqs_for(self, tag):
        if tag == "p":
            return self.kind.speeds.c_s / self.kind.speeds.c_p * self.freqs
        return self.freqs

    @classmethod
    def from_values(cls, kind: WaveKind, values, grid: Grid, directions, freqs,
                    nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION) -> "TableSource":
        freqs = np.asarray(freqs, dtype=float)
        if kind.tag == "elastic":
            sp = kind.speeds
            u_p, _ = farfield_many(kind, values, grid, directions, sp.c_s / sp.c_p * freqs, nyquist_fraction, "p")
            _, u_s = farfield_many(kind, values, grid, directions, freqs, nyquist_fraction, "s")
            tables = {"p": u_p, "s": u_s}
        else:
            tables = {"": farfield_many(kind, values, grid, directions, freqs, nyquist_fraction)}
        return cls(kind, directions, freqs, tables)

    @classmethod
    def concatenate(cls, parts: list) -> "TableSource":
        first = parts[0]
        tables = {k: np.concatenate([t.tables[k] for t in parts]) for k in first.tables}
        return cls(first.kind, first.directions, first.freqs, tables)

    def truncated(self, M: int) -> "TableSource":
        return TableSource(self.kind, self.directions, self.freqs, {k: v[:M] for k, v in self.tables.items()})

    @property
    def size(self) -> int:
        t = next(iter(self.tables.values()))
        return t.shape[0]

    def _pick(self, xhat, freq, tag):
        xhat = np.asarray(xhat, dtype=float)
        j = int(np.argmin(np.linalg.norm(self.directions - xhat, axis=1)))
        if not np.allclose(self.directions[j], xhat, atol=1e-12):
            raise KeyError("direction not tabulated")
        fr = self._freqs_for(tag)
        idx = np.abs(fr[None, :] - freq[:, None]).argmin(axis=1)
        if not np.allclose(fr[idx], freq, rtol=1e-12, atol=1e-12):
            raise KeyError("frequency not tabulated")
        tab = self.tables[tag]
        vec = tab.ndim >= 3 and self._vector
        dir_axis = tab.ndim - (3 if vec else 2)
        return np.take(np.take(tab, j, axis=dir_axis), idx, axis=dir_axis)

    def __call__(self, xhat, freq, parts: str = "ps"):
        freq = np.atleast_1d(np.asarray(freq, dtype=float))
        if self.kind.tag == "elastic":
            return (self._pick(xhat, freq, "p") if "p" in parts else None,
                    self._pick(xhat, freq, "s") if "s" in parts else None)
        return self._pick(xhat, freq, "")


def sample_members(strengths, grid: Grid, delta: float, root: int, start: int, count: int) -> np.ndarray:
    """Realizations start..start+count-1 stacked on a leading axis."""
    sampler = strengths if isinstance(strengths, PreparedSampler) else PreparedSampler(strengths, grid, delta)
    return np.stack([sampler.draw(realization_seed(root, i)).values for i in range(start, start + count)])


def tabulate_ensemble(kind: WaveKind, strengths, grid: Grid, delta: float, directions, freqs, M: int,
                      root: int, chunk: Optional[int] = None,
                      nyquist_fraction: float = DEFAULT_NYQUIST_FRACTION) -> TableSource:
    """Far-field table of M seeded realizations, sampled and transformed chunk by chunk."""
    comp = grid.d if kind.is_vector else 1
    chunk = chunk or int(min(M, max(1, ENSEMBLE_CHUNK_VALUES // (grid.size * comp))))
    parts = []
    strengths = PreparedSampler(strengths, grid, delta)
    for start in range(0, M, chunk):
        vals = sample_members(strengths, grid, delta, root, start, min(chunk, M - start))
        parts.append(TableSource.from_values(kind, vals, grid, directions, freqs, nyquist_fraction))
    return TableSource.concatenate(parts)


ENSEMBLE_CHUNK_VALUES = 1 << 22


def ensemble_log(cfg: ExperimentConfig, dirs: DirectionSet, shifts, M: int, strengths=None, chunk=None) -> list:
    """Far-field queries of the ensemble estimators over M realizations.

    Realizations are sampled chunk by chunk into a direction x frequency
    table; realization i always uses the same seed stream, whatever the
    chunk size.
    """
    strengths = strengths if strengths is not None else build_strengths(cfg, cfg.grid)
    freqs = cfg.kappa_eval + np.asarray(shifts, dtype=float)
    table = tabulate_ensemble(cfg.kind, strengths, cfg.grid, cfg.delta, dirs.vectors, freqs, M, cfg.root_seed,
                              chunk, cfg.nyquist_fraction)
    rec = RecordingSource(table, cfg.kind)
    _estimate_ensemble(cfg, rec, dirs, shifts, M)
    return rec.log


def truncate_log(log: list, M: int) -> list:
    def cut(v):
        if isinstance(v, tuple):
            return tuple(None if a is None else a[:M] for a in v)
        return v[:M]
    return [(x, fr, pt, cut(v)) for x, fr, pt, v in log]


def compute_estimates(cfg, fields, dirs, shifts, Qs=None, M=None, source_factory=None, log=None):
    """Estimates keyed (realization, target, Q or kappa_eval) -> (estimate, stderr).

    Ensemble mode ignores ``fields`` and works from a query ``log`` (built on
    demand by :func:`ensemble_log`), truncated to the first M realizations.
    """
    results = {}
    if cfg.mode == "ensemble":
        M = M or cfg.M
        if source_factory is not None:
            src = source_factory(0)
        else:
            log = log if log is not None else ensemble_log(cfg, dirs, shifts, M)
            src = ReplaySource(truncate_log(log, M), cfg.kind)
        for key, val in _estimate_ensemble(cfg, src, dirs, shifts, M).items():
            results[(0,) + key] = val
        return results
    count = fields.values.shape[0] if fields is not None else cfg.realizations
    for r in range(count):
        src = source_factory(r) if source_factory else _single_source(cfg, fields, r)
        res = _estimate_single(cfg, src, dirs, shifts, Qs or cfg.Qs)
        for (target, q), br in res.items():
            results[(r, target, q)] = (br.estimate, br.stderr)
    return results


def truth_arrays(cfg: ExperimentConfig):
    return strength_arrays(cfg, cfg.target_grid)


def recover(cfg, estimates, dirs: DirectionSet, shifts):
    """Reconstruction and metrics for every estimate entry."""
    tg = cfg.target_grid
    truth_c, truth_r = truth_arrays(cfg)
    mask = tg.support_mask(cfg.support_radius)
    out = {}
    for (r, target, q), (est, err) in estimates.items():
        data = normalize(est, err, cfg.kind, cfg.d, cfg.m, target, dirs.vectors, shifts, neg=dirs.neg,
                         dir_weights=dirs.weights)
        rec = invert_polar_fourier(data, tg, window=True)
        rec_nw = invert_polar_fourier(data, tg, window=False)
        if not np.all(np.isfinite(rec.values)):
            raise NumericalError(f"non-finite reconstruction for {target} at Q={q}")
        truth = truth_c if target == "covariance" else truth_r
        matrix = cfg.kind.is_vector
        met = recovery_error(rec, truth, mask, tg.cell_volume, matrix=matrix)
        met_nw = recovery_error(rec_nw, truth, mask, tg.cell_volume, matrix=matrix)
        out[(r, target, q)] = RecoveryReport(
            target=target, reconstruction=rec.values, metrics=met, unwindowed_metrics=met_nw,
            tau_max=rec.tau_max, window="raised-cosine[0.8,1.0]", imag_residual=rec.imag_residual,
            propagated_se=rec.propagated_se,
        )
    return out


# Persistence-aware run -----------------------------------------------------------

@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    timings: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    status: str = "running"
    failed_stage: Optional[str] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "code_version": self.code_version, "timings": self.timings,
                "outputs": self.outputs, "seeds": self.seeds, "status": self.status,
                "failed_stage": self.failed_stage, "error": self.error}

    def write(self, out_dir: Path):
        path = Path(out_dir) / "manifest.json"
        path.write_text(gio.dumps(self.to_dict()) + "\n")
        return path

    @classmethod
    def read(cls, out_dir) -> "RunManifest":
        import json
        data = json.loads((Path(out_dir) / "manifest.json").read_text())
        return cls(**data)


def _record_output(man: RunManifest, stage: str, path: Path):
    man.outputs.setdefault(stage, {})[path.name] = gio.file_digest(path)


def run(cfg: ExperimentConfig, out_dir=None, stage_from: str = "sample") -> RunManifest:
    """Execute every stage from ``stage_from`` on, persisting outputs under ``out_dir``."""
    if stage_from not in STAGES:
        raise ConfigError(f"unknown stage {stage_from!r}; expected one of {STAGES}")
    out = Path(out_dir or cfg.out or "gmigwave_out")
    out.mkdir(parents=True, exist_ok=True)
    start = STAGE_IDS[stage_from]
    if start > 0:
        try:
            man = RunManifest.read(out)
        except OSError as exc:
            raise ConfigError(f"--stage-from {stage_from} needs an earlier run in {out}") from exc
        if man.config_hash != cfg.hash:
            raise ConfigError("config differs from the one recorded in the existing manifest")
        man.status, man.failed_stage, man.error = "running", None, None
    else:
        man = RunManifest(config_hash=cfg.hash, code_version=__version__)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg.raw, sort_keys=True))
    dirs = direction_set(cfg)
    state: dict = {}
    count = 1 if cfg.mode == "ensemble" else cfg.realizations
    man.seeds = {"root": cfg.root_seed, "scheme": "SeedSequence(root, spawn_key=(stage, index))",
                 "sample_spawn_keys": [[STAGE_IDS["sample"], i] for i in range(cfg.M if cfg.mode == "ensemble" else count)]}

    def stage_sample():
        strengths = build_strengths(cfg, cfg.grid)
        p = gio.save_container(out / "strengths.npz", {"kind": cfg.kind.tag, "m": cfg.m, "d": cfg.d},
                               {"covariance": strengths.a_c if not cfg.kind.is_vector else strengths.A_c,
                                "relation": strengths.a_r if not cfg.kind.is_vector else strengths.A_r})
        _record_output(man, "sample", p)
        state["strengths"] = strengths
        if cfg.mode == "ensemble":
            # ensemble members are regenerated chunk-wise from the seed ledger
            return
        fields = sample_realizations(cfg, strengths, count)
        p = gio.save_field(out / "realizations.npz", fields, kind=cfg.kind.tag,
                           seed_label={"root": cfg.root_seed, "count": count})
        _record_output(man, "sample", p)
        state["fields"] = fields

    def stage_farfield():
        records = []
        if cfg.mode == "ensemble":
            logs = [ensemble_log(cfg, dirs, cfg.shifts, cfg.M, strengths=state.get("strengths"))]
        else:
            fields = state.get("fields") or gio.load_field(out / "realizations.npz")
            recs = []

            def factory(r):
                rec = RecordingSource(_single_source(cfg, fields, r), cfg.kind)
                recs.append(rec)
                return rec

            compute_estimates(cfg, fields, dirs, cfg.shifts, source_factory=factory)
            logs = [rec.log for rec in recs]
        arrays, meta_all = {}, []
        for r, log in enumerate(logs):
            meta, arr = _log_to_arrays(log, cfg.kind)
            meta_all.append(meta)
            arrays.update({f"r{r}_{k}": v for k, v in arr.items()})
            if cfg.mode == "single":
                records += [FarFieldRecord(cfg.kind.tag, x, fr, val, seed=r) for x, fr, _, val in log]
        p = gio.save_container(out / "farfield.npz", {"queries": meta_all, "kind": cfg.kind.tag}, arrays)
        _record_output(man, "farfield", p)
        if records:
            p = gio.write_farfield_csv(out / "farfield.csv", records)
            _record_output(man, "farfield", p)
        state["logs"] = logs

    def stage_estimate():
        logs = state.get("logs")
        if logs is None:
            header, arrays = gio.load_container(out / "farfield.npz")
            logs = []
            for r, meta in enumerate(header["queries"]):
                sub = {k[len(f"r{r}_"):]: v for k, v in arrays.items() if k.startswith(f"r{r}_")}
                logs.append(_arrays_to_log(meta, sub, cfg.kind))
        est = compute_estimates(cfg, None, dirs, cfg.shifts,
                                source_factory=lambda r: ReplaySource(logs[r], cfg.kind))
        for key, (e, s) in est.items():
            if not (np.all(np.isfinite(e)) and np.all(np.isfinite(s))):
                raise NumericalError(f"non-finite estimates for {key}")
        arrays = {}
        rows = []
        for (r, target, q), (e, s) in est.items():
            arrays[f"r{r}_{target}_{q:g}_est"] = e
            arrays[f"r{r}_{target}_{q:g}_se"] = s
            for j in range(e.shape[0]):
                for i, t in enumerate(cfg.shifts):
                    ev, sv = e[j, i], s[j, i]
                    rows.append([cfg.hash, r, target, f"{q:g}", j] + [f"{x:.12g}" for x in dirs.vectors[j]]
                                + [f"{t:.12g}", gio.dumps(np.real(ev)), gio.dumps(np.imag(ev)), gio.dumps(sv)])
        p = gio.save_container(out / "estimates.npz", {"keys": [list(k) for k in est]}, arrays)
        _record_output(man, "estimate", p)
        hdr = ["config_hash", "seed_index", "target", "Q_or_kappa", "direction"] + \
              [f"xhat{k}" for k in range(cfg.d)] + ["tau", "re", "im", "stderr"]
        res_path = out / "estimates.csv"
        if res_path.exists():
            res_path.unlink()
        p = gio.append_rows(res_path, hdr, rows)
        _record_output(man, "estimate", p)
        state["estimates"] = est

    def stage_recover():
        est = state.get("estimates")
        if est is None:
            header, arrays = gio.load_container(out / "estimates.npz")
            est = {}
            for r, target, q in header["keys"]:
                est[(r, target, q)] = (arrays[f"r{r}_{target}_{q:g}_est"], arrays[f"r{r}_{target}_{q:g}_se"])
        reports = recover(cfg, est, dirs, cfg.shifts)
        tg = cfg.target_grid
        truth_c, truth_r = truth_arrays(cfg)
        mid = tg.n // 2
        trace_rows = []
        for (r, target, q), rep in reports.items():
            p = gio.save_container(out / f"reconstruction_{target}_r{r}_{q:g}.npz",
                                   {"target": target, "Q": q, "realization": r, "L": tg.length, "N": tg.n},
                                   {"values": rep.reconstruction})
            _record_output(man, "recover", p)
            trace_rows.append([r, target, f"{q:g}", f"{rep.metrics.rel_l2:.8g}",
                               f"{rep.unwindowed_metrics.rel_l2:.8g}", f"{rep.metrics.max_abs:.8g}"])
        # truth vs reconstruction along the first axis through the box centre
        ax = tg.axis()
        slice_rows = []
        for (r, target, q), rep in reports.items():
            truth = truth_c if target == "covariance" else truth_r
            rec = rep.reconstruction
            idx = (slice(None), mid) + ((mid,) if cfg.d == 3 else ())
            tv, rv = truth[idx], rec[idx]
            for k in range(tg.n):
                t_k = np.ravel(tv[k])
                r_k = np.ravel(rv[k])
                slice_rows.append([r, target, f"{q:g}", f"{ax[k]:.8g}", gio.dumps(np.real(t_k)),
                                   gio.dumps(np.imag(t_k)), gio.dumps(np.real(r_k)), gio.dumps(np.imag(r_k))])
        for name, hdr, rows in (
            ("error_trace.csv", ["seed_index", "target", "Q_or_kappa", "rel_l2", "rel_l2_unwindowed", "max_abs"],
             trace_rows),
            ("slices.csv", ["seed_index", "target", "Q_or_kappa", "x", "truth_re", "truth_im", "rec_re", "rec_im"],
             slice_rows),
        ):
            path = out / name
            if path.exists():
                path.unlink()
            _record_output(man, "recover", gio.append_rows(path, hdr, rows))
        state["reports"] = reports

    def stage_report():
        reports = state.get("reports")
        if reports is None:
            rows = gio.read_csv(out / "error_trace.csv")
            lines = [f"{r['target']} seed={r['seed_index']} Q={r['Q_or_kappa']}: rel_l2={r['rel_l2']} "
                     f"(unwindowed {r['rel_l2_unwindowed']})" for r in rows]
        else:
            lines = []
            for (r, target, q), rep in reports.items():
                lines.append(f"[{target}] seed_index={r} Q_or_kappa={q:g}")
                lines += ["  " + s for s in rep.summary_lines()]
        text = "\n".join([f"config {cfg.hash}, kind {cfg.kind.tag}, d={cfg.d}, m={cfg.m:g}, mode {cfg.mode}"] + lines)
        p = out / "report.txt"
        p.write_text(text + "\n")
        _record_output(man, "report", p)

    funcs = {"sample": stage_sample, "farfield": stage_farfield, "estimate": stage_estimate,
             "recover": stage_recover, "report": stage_report}
    for name in STAGES[start:]:
        t0 = time.perf_counter()
        try:
            funcs[name]()
        except (ConfigError, NumericalError) as exc:
            man.status, man.failed_stage, man.error = "failed", name, str(exc)
            man.write(out)
            raise
        except Exception as exc:  # noqa: BLE001 - every stage failure is reported with its name
            man.status, man.failed_stage, man.error = "failed", name, repr(exc)
            man.write(out)
            raise StageError(name, exc) from exc
        man.timings[name] = time.perf_counter() - t0
        man.write(out)
    man.status = "ok"
    man.write(out)
    return man


# Sweeps -------------------------------------------------------------------------------

def convergence_sweep(cfg: ExperimentConfig, axis: str, values, out_dir=None) -> list:
    """Recovery error against one axis with paired seeds; returns rows and writes sweep_<axis>.csv."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    values = list(values)
    if len(values) < 3:
        raise ConfigError("a convergence sweep needs at least 3 axis values")
    _check_sweep_values(cfg, axis, values)
    strengths = build_strengths(cfg, cfg.grid)
    rows = []
    if axis == "M":
        if cfg.mode != "ensemble":
            raise ConfigError("the M axis needs an ensemble-mode config")
        Ms = [int(v) for v in values]
        dirs = direction_set(cfg)
        log = ensemble_log(cfg, dirs, cfg.shifts, max(Ms), strengths=strengths)
        for M in Ms:
            est = compute_estimates(cfg, None, dirs, cfg.shifts, M=M, log=log)
            rows += _sweep_rows(axis, M, recover(cfg, est, dirs, cfg.shifts))
    else:
        fields = sample_realizations(cfg, strengths, 1) if cfg.mode == "single" else None
        if axis == "Q":
            if cfg.mode != "single":
                raise ConfigError("the Q axis needs a single-realization config")
            dirs = direction_set(cfg)
            est = compute_estimates(cfg, fields, dirs, cfg.shifts, Qs=[float(v) for v in values])
            for q in values:
                sub = {k: v for k, v in est.items() if k[2] == float(q)}
                rows += _sweep_rows(axis, q, recover(cfg, sub, dirs, cfg.shifts))
        elif axis == "directions":
            for nd in values:
                dirs = direction_set(cfg, int(nd))
                est = compute_estimates(cfg, fields, dirs, cfg.shifts)
                rows += _sweep_rows(axis, nd, recover(cfg, est, dirs, cfg.shifts))
        else:
            step = cfg.shifts[1] - cfg.shifts[0]
            dirs = direction_set(cfg)
            for tmax in values:
                shifts = step * np.arange(int(round(float(tmax) / step)) + 1)
                est = compute_estimates(cfg, fields, dirs, shifts)
                rows += _sweep_rows(axis, tmax, recover(cfg, est, dirs, shifts))
    if out_dir is not None:
        path = Path(out_dir) / f"sweep_{axis}.csv"
        if path.exists():
            path.unlink()
        gio.append_rows(path, ["axis", "value", "target", "seed_index", "rel_l2", "rel_l2_unwindowed"], rows)
    return rows


def _check_sweep_values(cfg: ExperimentConfig, axis: str, values):
    """Every sweep point must satisfy the same budgets as the base config."""
    if any(float(v) <= 0 for v in values):
        raise ConfigError(f"{axis} sweep values must be positive")
    scale = wavenumber_scale_of(cfg)
    budget = cfg.nyquist_fraction * cfg.grid.nyquist
    if axis == "Q":
        for q in values:
            if abs(float(q) / cfg.dk - round(float(q) / cfg.dk)) > 1e-9:
                raise ConfigError(f"band start {q} is not a multiple of dk = {cfg.dk}")
        top = 2 * max(float(v) for v in values) + cfg.shifts.max()
    elif axis == "tau_max":
        tmax = max(float(v) for v in values)
        if tmax * scale * cfg.target_grid.h > np.pi:
            raise ConfigError("tau_max exceeds the target-grid Nyquist limit pi/h")
        top = (cfg.kappa_eval if cfg.mode == "ensemble" else 2 * max(cfg.Qs)) + tmax
    elif axis == "directions":
        if any(int(v) != float(v) or int(v) < 2 or int(v) % 2 for v in values):
            raise ConfigError("direction counts must be even integers >= 2")
        return
    else:
        if any(int(v) != float(v) or int(v) < 2 for v in values):
            raise ConfigError("ensemble sizes must be integers >= 2")
        return
    if scale * top > budget:
        raise ConfigError(
            f"sweep reaches wavenumber {scale * top:.4g} beyond the Nyquist budget "
            f"{cfg.nyquist_fraction:g} x pi/h = {budget:.4g}"
        )


def _sweep_rows(axis, value, reports):
    return [[axis, value, target, r, rep.metrics.rel_l2, rep.unwindowed_metrics.rel_l2]
            for (r, target, _), rep in reports.items()]
