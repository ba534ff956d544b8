"""Dataset files, the incomplete-view protocol, experiment runs and reports.

Dataset directory layout::

    view1.csv ... viewM.csv   rows = samples, columns = features, no header
    labels.csv                optional, one integer per row
    mask.csv                  optional, n x m of 0/1 (1 = present)
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluation import ClusteringReport, evaluate_embedding
from .graphs import MultiViewDataset, build_graph_tensor
from .solver import IterRecord, SolverConfig, SolverResult, run

__all__ = [
    "SCHEMA_VERSION",
    "OUTPUT_DIR_ENV",
    "CSV_COLUMNS",
    "SWEEP_GRIDS",
    "DataError",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "load_dataset",
    "save_dataset",
    "make_incomplete",
    "synthesize",
    "zscore_views",
    "dataset_hash",
    "run_experiment",
    "emit_convergence_csv",
    "read_convergence_csv",
    "write_report",
    "sweep_configs",
]

SCHEMA_VERSION = 1
OUTPUT_DIR_ENV = "MVCOMPLETE_OUTPUT_DIR"
CSV_COLUMNS = ("iter", "res_gy", "res_dg", "res_dy", "objective", "rho")
SWEEP_GRIDS = {
    "missing_rate": (90.0, 70.0, 50.0, 30.0),
    "lam": (1.0, 3.0, 5.0, 7.0, 9.0),
    "mu": (10.0, 30.0, 50.0, 70.0, 90.0),
    "gamma": (1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6),
    "rank": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
}


class DataError(ValueError):
    """Malformed or inconsistent dataset files."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# --------------------------------------------------------------------------
# files

def _read_matrix(path: Path) -> np.ndarray:
    try:
        mat = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise DataError(f"{path.name}: {exc}") from None
    return mat


def _view_files(directory: Path) -> list[Path]:
    found = []
    for p in directory.glob("view*.csv"):
        m = re.fullmatch(r"view(\d+)\.csv", p.name)
        if m:
            found.append((int(m.group(1)), p))
    return [p for _, p in sorted(found)]


def load_dataset(directory) -> MultiViewDataset:
    """Read a dataset directory (see module docstring for the layout)."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    files = _view_files(directory)
    if not files:
        raise DataError(f"no view<k>.csv files in {directory}")
    views = [_read_matrix(p) for p in files]
    n = views[0].shape[0]
    for p, v in zip(files, views):
        if v.shape[0] != n:
            raise DataError(f"{p.name} has {v.shape[0]} samples, {files[0].name} has {n}")

    mask_path = directory / "mask.csv"
    if mask_path.exists():
        mask = _read_matrix(mask_path)
        if mask.shape != (n, len(views)):
            raise DataError(f"mask.csv has shape {mask.shape}, expected {(n, len(views))}")
        if not np.all((mask == 0) | (mask == 1)):
            raise DataError("mask.csv must contain only 0 and 1")
        presence = mask.T.astype(bool)
        empty = np.flatnonzero(~presence.any(axis=0))
        if empty.size:
            raise DataError(f"mask rows {empty[:10].tolist()} have no present view")
    else:
        presence = np.ones((len(views), n), dtype=bool)

    for p, v, pres in zip(files, views, presence):
        if not np.all(np.isfinite(v[pres])):
            raise DataError(f"{p.name} has non-finite values for present samples")

    labels = None
    labels_path = directory / "labels.csv"
    if labels_path.exists():
        raw = _read_matrix(labels_path).ravel()
        if raw.size != n:
            raise DataError(f"labels.csv has {raw.size} entries, expected {n}")
        if not np.all(raw == np.round(raw)):
            raise DataError("labels.csv must contain integers")
        labels = raw.astype(int)

    try:
        return MultiViewDataset([v.T for v in views], presence, labels)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def save_dataset(ds: MultiViewDataset, directory, write_mask: bool | None = None) -> Path:
    """Write ``ds`` in the directory layout read by :func:`load_dataset`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(ds.views, start=1):
        np.savetxt(directory / f"view{i}.csv", v.T, delimiter=",", fmt="%.17g")
    if ds.labels is not None:
        np.savetxt(directory / "labels.csv", ds.labels, fmt="%d")
    if write_mask is None:
        write_mask = not ds.is_complete
    if write_mask:
        np.savetxt(directory / "mask.csv", ds.presence.T.astype(int), delimiter=",", fmt="%d")
    return directory


# --------------------------------------------------------------------------
# protocol

def make_incomplete(ds: MultiViewDataset, p_percent: float, seed: int = 0) -> MultiViewDataset:
    """Delete views from a random ``floor(p% * n)`` of the samples.

    Each selected sample loses a uniformly chosen nonempty proper subset
    of its views, so at least one view survives.
    """
    if ds.m < 2:
        raise ConfigError("incomplete samples need at least two views")
    if not 0 <= p_percent <= 100:
        raise ConfigError(f"missing rate {p_percent} outside [0, 100]")
    if not ds.is_complete:
        raise ConfigError("make_incomplete expects a fully observed dataset")
    rng = np.random.default_rng(seed)
    n, m = ds.n, ds.m
    count = int(math.floor(p_percent / 100.0 * n + 1e-9))
    chosen = rng.choice(n, size=count, replace=False)
    presence = np.ones((m, n), dtype=bool)
    # subset codes 1 .. 2^m - 2 are exactly the nonempty proper subsets
    codes = rng.integers(1, 2**m - 1, size=count)
    bits = ((codes[:, None] >> np.arange(m)[None, :]) & 1).astype(bool)
    presence[:, chosen] = ~bits.T
    return MultiViewDataset([v.copy() for v in ds.views], presence, ds.labels)


def synthesize(n: int = 150, dims=(8, 10, 12), c: int = 3, separation: float = 6.0,
               cluster_std: float = 0.3, seed: int = 0) -> MultiViewDataset:
    """Gaussian clusters seen through ``len(dims)`` views.

    In each view the ``c`` cluster means are pairwise ``separation * cluster_std``
    apart (a randomly rotated regular simplex) and samples scatter around
    them with isotropic standard deviation ``cluster_std``. Labels are
    balanced and contiguous.
    """
    if c > min(dims):
        raise ConfigError("every view needs at least c dimensions")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) * c // n
    views = []
    for d in dims:
        means = np.zeros((c, d))
        means[np.arange(c), np.arange(c)] = separation * cluster_std / np.sqrt(2.0)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        means = means @ q.T
        x = means[labels] + cluster_std * rng.standard_normal((n, d))
        views.append(x.T)
    return MultiViewDataset(views, labels=labels)


def zscore_views(ds: MultiViewDataset) -> MultiViewDataset:
    """Standardize each feature over present samples; constant features are left alone."""
    out = []
    for v, pres in zip(ds.views, ds.presence):
        v = v.copy()
        sub = v[:, pres]
        mean = sub.mean(axis=1, keepdims=True)
        std = sub.std(axis=1, keepdims=True)
        ok = std[:, 0] > 0
        v[ok] = (v[ok] - mean[ok]) / std[ok]
        out.append(v)
    return MultiViewDataset(out, ds.presence, ds.labels)


def dataset_hash(ds: MultiViewDataset) -> str:
    h = hashlib.sha256()
    for v in ds.views:
        h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
        h.update(str(v.shape).encode())
    h.update(np.ascontiguousarray(ds.presence, dtype=np.uint8).tobytes())
    if ds.labels is not None:
        h.update(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    missing_rate: float = 0.0
    seed: int = 0
    solver: dict = field(default_factory=dict)
    knn_k: int = 10
    sigma: float = 1.0
    clusters: int | None = None
    restarts: int = 10
    output_dir: str | None = None
    zscore: bool = False

    def __post_init__(self):
        if not 0 <= self.missing_rate <= 100:
            raise ConfigError(f"missing_rate {self.missing_rate} outside [0, 100]")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be positive")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.restarts < 1:
            raise ConfigError("restarts must be positive")
        if self.clusters is not None and self.clusters < 1:
            raise ConfigError("clusters must be positive")
        unknown = set(self.solver) - {f.name for f in dataclasses.fields(SolverConfig)}
        if unknown:
            raise ConfigError(f"unknown solver options: {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["solver"] = {k: _jsonable(v) for k, v in sorted(self.solver.items())}
        return d


@dataclass
class ExperimentReport:
    config: dict
    solver_config: dict
    input_hash: str
    n: int
    m: int
    n_present: list
    converged: bool
    n_iter: int
    history: list
    clustering: ClusteringReport | None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        """JSON payload; wall-clock timings are excluded so reruns are byte-identical."""
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config,
            "solver_config": self.solver_config,
            "input_hash": self.input_hash,
            "dataset": {"n": self.n, "m": self.m, "n_present": self.n_present},
            "protocol": {"deletion": "uniform nonempty proper subset of views per selected sample"},
            "converged": self.converged,
            "n_iter": self.n_iter,
            "clustering": None if self.clustering is None else self.clustering.to_dict(),
            "history": [list(r) for r in self.history],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _solver_config_dict(cfg: SolverConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "transform":
            v = None if v is None else {"kind": v.kind, "r": v.r}
        out[f.name] = _jsonable(v)
    return out


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_convergence_csv(history, path) -> Path:
    """Write one row per outer iteration with columns :data:`CSV_COLUMNS`."""
    if isinstance(history, (ExperimentReport, SolverResult)):
        history = history.history
    if not history:
        raise ValueError("residual history is empty")
    lines = [",".join(CSV_COLUMNS)]
    for rec in history:
        rec = IterRecord(*rec)
        lines.append(",".join([str(int(rec.iter))] + [format(float(x), ".17g") for x in rec[1:]]))
    path = Path(path)
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_convergence_csv(path) -> list[IterRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            IterRecord(int(row["iter"]), *(float(row[c]) for c in CSV_COLUMNS[1:]))
            for row in reader
        ]


def write_report(report: ExperimentReport, output_dir) -> dict:
    """Write ``report.json``, ``convergence.csv`` and ``timings.json`` atomically."""
    output_dir = Path(output_dir)
    paths = {
        "report": output_dir / "report.json",
        "convergence": output_dir / "convergence.csv",
        "timings": output_dir / "timings.json",
    }
    _atomic_write(paths["report"], report.to_json())
    emit_convergence_csv(report.history, paths["convergence"])
    _atomic_write(paths["timings"], json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    return paths


def run_experiment(cfg: ExperimentConfig, dataset: MultiViewDataset | None = None,
                   write: bool = True) -> ExperimentReport:
    """Load, corrupt, solve, cluster and report.

    ``dataset`` bypasses ``cfg.dataset``. With a positive missing rate the
    dataset must be complete; views are then deleted with
    :func:`make_incomplete` using ``cfg.seed``.
    """
    timings = {}
    t0 = time.perf_counter()
    if dataset is None:
        if cfg.dataset is None:
            raise ConfigError("no dataset given")
        dataset = load_dataset(cfg.dataset)
    ds = dataset
    if cfg.missing_rate > 0:
        ds = make_incomplete(ds, cfg.missing_rate, cfg.seed)
    if cfg.zscore:
        ds = zscore_views(ds)
    timings["prepare"] = time.perf_counter() - t0

    c = cfg.clusters
    if c is None:
        if ds.labels is None:
            raise ConfigError("clusters must be given when the dataset has no labels")
        c = int(np.unique(ds.labels).size)
    solver_opts = dict(cfg.solver)
    solver_opts.setdefault("embed_dim", c)
    try:
        solver_cfg = SolverConfig(**solver_opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.knn_k >= int(ds.n_present.min()):
        raise ConfigError(f"knn_k={cfg.knn_k} needs more present samples per view "
                          f"(smallest view has {int(ds.n_present.min())})")

    t0 = time.perf_counter()
    graphs, observed = build_graph_tensor(ds, cfg.knn_k, cfg.sigma)
    timings["graphs"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result = run(ds, solver_cfg, cfg.seed, graphs=graphs, observed=observed)
    timings["solve"] = time.perf_counter() - t0
    timings.update({f"solve.{k}": v for k, v in result.timings.items()})

    clustering = None
    if ds.labels is not None:
        t0 = time.perf_counter()
        clustering = evaluate_embedding(result.A, ds.labels, c, cfg.restarts, cfg.seed)
        timings["cluster"] = time.perf_counter() - t0

    resolved_solver = _solver_config_dict(solver_cfg)
    resolved_solver["transform"] = {"kind": result.transform.kind, "r": result.transform.r}
    report = ExperimentReport(
        config=cfg.to_dict(),
        solver_config=resolved_solver,
        input_hash=dataset_hash(dataset),
        n=ds.n,
        m=ds.m,
        n_present=[int(x) for x in ds.n_present],
        converged=result.converged,
        n_iter=result.n_iter,
        history=list(result.history),
        clustering=clustering,
        timings=timings,
    )
    if write and cfg.output_dir is not None:
        write_report(report, cfg.output_dir)
    return report


def sweep_configs(base: ExperimentConfig, param: str, values=None) -> list[tuple[str, ExperimentConfig]]:
    """One config per grid point; ``param`` is a solver option or ``missing_rate``.

    Each point writes to ``<output_dir>/<param>=<value>`` when an output
    directory is set.
    """
    if values is None:
        if param not in SWEEP_GRIDS:
            raise ConfigError(f"no default grid for {param!r}; choose from {sorted(SWEEP_GRIDS)}")
        values = SWEEP_GRIDS[param]
    out = []
    for value in values:
        tag = f"{param}={value:g}"
        sub = None if base.output_dir is None else str(Path(base.output_dir) / tag)
        if param == "missing_rate":
            cfg = dataclasses.replace(base, missing_rate=float(value), output_dir=sub)
        else:
            if param not in {f.name for f in dataclasses.fields(SolverConfig)}:
                raise ConfigError(f"cannot sweep unknown parameter {param!r}")
            solver = dict(base.solver)
            solver[param] = value
            cfg = dataclasses.replace(base, solver=solver, output_dir=sub)
        out.append((tag, cfg))
    return out
