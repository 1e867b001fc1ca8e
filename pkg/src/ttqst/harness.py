"""Config-driven experiment runner with deterministic, crash-safe outputs.

A run writes into ``output_dir``:

* ``results.csv``: one row per (grid point, trial), appended and fsynced row
  by row in a fixed schedule order;
* a per-experiment summary CSV and per-run JSON files under ``runs/``;
* ``manifest.json``: config echo, package version, seeds and a SHA-256 hash
  of every other output file.

Numbers are written with ``repr`` so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from ttqst import __version__
from ttqst.diagnostics import (
    EMBEDDING_MAX_DIM,
    closed_form_suite,
    embedding_trial,
)
from ttqst.measurement import build_record, record_to_dict
from ttqst.recovery import DivergenceError, IHTConfig, initialize_near, iht_run
from ttqst.seeding import sub_seed
from ttqst.tt import CapacityError, random_unit_mps

EXPERIMENTS = ("embedding_sweep", "recovery_sweep", "diagnostics")
RECOVERY_MAX_DIM = 1 << 12
_SOLVER_KEYS = {f.name for f in dataclasses.fields(IHTConfig)} - {"max_rank", "local_dim", "seed"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class PlotDataError(ValueError):
    """A result table cannot produce the requested plot data."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int = 2
    n_range: tuple[int, ...] = (4,)
    r: tuple[int, ...] = (2,)
    M_values: tuple[int, ...] = (1000,)
    Q: int = 1
    trials: int = 10
    master_seed: int = 0
    solver: dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    samples: int = 200
    field: str = "real"
    mpo_kind: str = "lifted_mps"
    # frozen pass thresholds, echoed into the manifest with the config
    thresholds: dict[str, float] = dataclasses.field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("n_range", "r", "M_values"):
            val = getattr(self, name)
            vals = (val,) if isinstance(val, int) else tuple(val)
            if not vals or any(not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in vals):
                raise ConfigError(f"{name} must be a nonempty list of positive integers")
            object.__setattr__(self, name, vals)
        for name in ("d", "Q", "trials", "samples"):
            val = getattr(self, name)
            if not isinstance(val, int) or isinstance(val, bool) or val < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.d < 2:
            raise ConfigError("d must be >= 2")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        if self.field not in ("real", "complex"):
            raise ConfigError("field must be 'real' or 'complex'")
        if self.mpo_kind not in ("generic", "lifted_mps"):
            raise ConfigError("mpo_kind must be 'generic' or 'lifted_mps'")
        unknown = set(self.solver) - _SOLVER_KEYS
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        try:
            IHTConfig(**self.solver)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid solver settings: {exc}") from exc
        if not isinstance(self.thresholds, dict) or any(
            not isinstance(v, (int, float)) or isinstance(v, bool) for v in self.thresholds.values()
        ):
            raise ConfigError("thresholds must map names to numbers")
        if self.experiment == "recovery_sweep" and self.field != "real":
            raise ConfigError("recovery runs in the real field")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config must name an experiment")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        for k in ("n_range", "r", "M_values"):
            out[k] = list(out[k])
        return out


@dataclass
class ResultTable:
    """Rows of one experiment run plus optional per-row curves.

    ``curves`` maps a row key ``(n, r, M, trial)`` to a dict with
    ``loss`` and ``distance`` lists.
    """

    experiment: str
    columns: list[str]
    rows: list[dict[str, Any]]
    curves: dict[tuple, dict[str, list[float]]] = field(default_factory=dict)

    @classmethod
    def load(cls, run_dir: str | os.PathLike) -> ResultTable:
        run_dir = Path(run_dir)
        manifest = json.loads((run_dir / "manifest.json").read_text())
        with open(run_dir / "results.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            columns = list(reader.fieldnames or [])
            rows = [_parse_row(r) for r in reader]
        curves = {}
        for path in sorted((run_dir / "runs").glob("recovery_*.json")):
            data = json.loads(path.read_text())
            key = tuple(data["key"])
            curves[key] = {"loss": data["result"]["loss_curve"], "distance": data["result"]["distance_curve"]}
        return cls(manifest["experiment"], columns, rows, curves)


@dataclass
class RunOutcome:
    table: ResultTable
    output_dir: Path
    failures: list[dict[str, Any]]
    total_points: int

    @property
    def exit_code(self) -> int:
        if not self.failures:
            return 0
        if all(f["error"] == "capacity" for f in self.failures) and len(self.failures) == self.total_points:
            return 3
        return 4


def _parse_row(row: dict[str, str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in row.items():
        for conv in (int, float):
            try:
                out[k] = conv(v)
                break
            except (TypeError, ValueError):
                continue
        else:
            out[k] = v
    return out


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _RowWriter:
    """Appends CSV rows, fsyncing after each one."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._emit(self.columns)

    def _emit(self, values: Iterable[Any]) -> None:
        self._writer.writerow([_fmt(v) for v in values])
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def write(self, row: dict[str, Any]) -> None:
        self._emit(row.get(c, "") for c in self.columns)

    def close(self) -> None:
        self._fh.close()


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


def _write_json(path: Path, data: Any) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict[str, Any]]) -> None:
    w = _RowWriter(path, columns)
    try:
        for row in rows:
            w.write(row)
    finally:
        w.close()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _ordered_results(fn: Callable, tasks: list, jobs: int) -> Iterable[tuple[Any, Any]]:
    """Yield ``(task, result)`` in task order, computing in parallel if ``jobs > 1``."""
    if jobs <= 1:
        for t in tasks:
            yield t, fn(t)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, t) for t in tasks]
        for t, fut in zip(tasks, futures):
            yield t, fut.result()


# ---------------------------------------------------------------- recovery


RECOVERY_COLUMNS = [
    "experiment",
    "n",
    "r",
    "M",
    "trial",
    "seed",
    "shot_seed",
    "status",
    "initial_distance",
    "final_distance",
    "initial_loss",
    "final_loss",
    "iterations",
    "converged",
]

RECOVERY_SUMMARY_COLUMNS = [
    "n",
    "r",
    "M",
    "trials_ok",
    "mean_initial_distance",
    "mean_final_distance",
    "stderr_final_distance",
    "improvement",
]


def recovery_trial_seed(master_seed: int, n: int, r: int, trial: int) -> int:
    """Seed fixing truth, ensembles and initialization of one trial (shared across ``M``)."""
    return sub_seed(master_seed, f"recovery/n={n}/r={r}", trial)


def _recovery_task(task: dict[str, Any]) -> dict[str, Any]:
    n, r, M, d = task["n"], task["r"], task["M"], task["d"]
    seed, shot_seed = task["seed"], task["shot_seed"]
    cfg = IHTConfig(max_rank=r, local_dim=d, seed=seed, **task["solver"])
    u_star = random_unit_mps(n, d, r, sub_seed(seed, "truth")).to_dense()
    record = build_record(u_star, task["Q"], M, "real", sub_seed(seed, "record"), shot_seed=shot_seed)
    init = initialize_near(u_star, cfg.init_lambda, sub_seed(seed, "init"))
    row = {"status": "ok"}
    try:
        res = iht_run(record, cfg, init, truth=u_star)
    except DivergenceError as exc:
        row.update(status=f"diverged@{exc.iteration}", iterations=exc.iteration, converged=False)
        return {"row": row, "run": {"divergence": {"iteration": exc.iteration, "loss": exc.loss}}}
    row.update(
        initial_distance=res.distance_curve[0],
        final_distance=res.distance_curve[-1],
        initial_loss=res.loss_curve[0],
        final_loss=res.loss_curve[-1],
        iterations=res.iterations_run,
        converged=res.converged,
    )
    run = {"result": res.to_dict(), "record": record_to_dict(record, task["embed_vectors"])}
    return {"row": row, "run": run}


def _run_recovery(cfg: ExperimentConfig, out: Path, jobs: int, embed_vectors: bool) -> RunOutcome:
    # longest-first: largest n first, then larger r; M and trial ascending
    points = sorted(
        ((n, r, M) for n in cfg.n_range for r in cfg.r for M in cfg.M_values),
        key=lambda p: (-p[0], -p[1], p[2]),
    )
    failures, tasks = [], []
    for n, r, M in points:
        if cfg.d**n > RECOVERY_MAX_DIM:
            failures.append({"n": n, "r": r, "M": M, "error": "capacity", "message": f"d^n = {cfg.d**n} > {RECOVERY_MAX_DIM}"})
            continue
        for t in range(cfg.trials):
            seed = recovery_trial_seed(cfg.master_seed, n, r, t)
            tasks.append(
                {
                    "n": n, "r": r, "M": M, "trial": t, "d": cfg.d, "Q": cfg.Q,
                    "seed": seed, "shot_seed": sub_seed(seed, "shots", M),
                    "solver": dict(cfg.solver), "embed_vectors": embed_vectors,
                }
            )  # fmt: skip
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    writer = _RowWriter(out / "results.csv", RECOVERY_COLUMNS)
    rows: list[dict[str, Any]] = []
    curves: dict[tuple, dict[str, list[float]]] = {}
    try:
        for task, res in _ordered_results(_Guarded(_recovery_task), tasks, jobs):
            key = (task["n"], task["r"], task["M"], task["trial"])
            row = {"experiment": "recovery_sweep", **{k: task[k] for k in ("n", "r", "M", "trial", "seed", "shot_seed")}}
            if "error" in res:
                failures.append({"n": task["n"], "r": task["r"], "M": task["M"], "trial": task["trial"], **res})
                row["status"] = "error"
            else:
                row.update(res["row"])
                run = {"key": list(key), **res["run"]}
                _write_json(runs_dir / "recovery_n{}_r{}_M{}_t{}.json".format(*key), run)
                if "result" in run:
                    curves[key] = {"loss": run["result"]["loss_curve"], "distance": run["result"]["distance_curve"]}
            writer.write(row)
            rows.append(row)
    finally:
        writer.close()
    table = ResultTable("recovery_sweep", RECOVERY_COLUMNS, rows, curves)
    _write_csv(out / "recovery_summary.csv", RECOVERY_SUMMARY_COLUMNS, recovery_summary(table))
    return RunOutcome(table, out, failures, len(points))


def recovery_summary(table: ResultTable) -> list[dict[str, Any]]:
    """Per ``(n, r, M)`` means over trials with status ``ok``."""
    groups: dict[tuple, list[dict[str, Any]]] = {}
    for row in table.rows:
        if row.get("status") == "ok":
            groups.setdefault((row["n"], row["r"], row["M"]), []).append(row)
    out = []
    for (n, r, M), rows in sorted(groups.items()):
        init = np.array([float(x["initial_distance"]) for x in rows])
        fin = np.array([float(x["final_distance"]) for x in rows])
        se = float(fin.std(ddof=1) / math.sqrt(fin.size)) if fin.size > 1 else 0.0
        out.append(
            {
                "n": n,
                "r": r,
                "M": M,
                "trials_ok": fin.size,
                "mean_initial_distance": float(init.mean()),
                "mean_final_distance": float(fin.mean()),
                "stderr_final_distance": se,
                "improvement": float(init.mean() / fin.mean()) if fin.mean() > 0 else math.inf,
            }
        )
    return out


class _Guarded:
    # picklable wrapper turning exceptions into error records
    def __init__(self, fn: Callable):
        self.fn = fn

    def __call__(self, task: Any) -> dict[str, Any]:
        try:
            return self.fn(task)
        except CapacityError as exc:
            return {"error": "capacity", "message": str(exc)}
        except Exception as exc:  # noqa: BLE001 - isolate one grid point
            return {"error": type(exc).__name__, "message": str(exc)}


# ---------------------------------------------------------------- embedding


EMBEDDING_COLUMNS = ["experiment", "n", "r", "trial", "seed", "status", "min_norm", "reference", "ratio"]
EMBEDDING_SUMMARY_COLUMNS = ["n", "r", "trials_ok", "mean_min_norm", "reference", "ratio", "stderr"]


def _embedding_task(task: dict[str, Any]) -> dict[str, Any]:
    args = (task["d"], task["n"], task["r"], task["Q"], None, task["samples"], task["field"], task["mpo_kind"], task["seed"])
    return {"min_norm": embedding_trial(args)}


def _run_embedding(cfg: ExperimentConfig, out: Path, jobs: int) -> RunOutcome:
    points = sorted(((n, r) for n in cfg.n_range for r in cfg.r), key=lambda p: (-p[0], -p[1]))
    failures, tasks = [], []
    for n, r in points:
        if cfg.d**n > EMBEDDING_MAX_DIM:
            failures.append({"n": n, "r": r, "error": "capacity", "message": f"d^n = {cfg.d**n} > {EMBEDDING_MAX_DIM}"})
            continue
        for t in range(cfg.trials):
            tasks.append(
                {
                    "n": n, "r": r, "trial": t, "d": cfg.d, "Q": cfg.Q, "samples": cfg.samples,
                    "field": cfg.field, "mpo_kind": cfg.mpo_kind,
                    "seed": sub_seed(cfg.master_seed, f"embedding/n={n}/r={r}", t),
                }
            )  # fmt: skip
    writer = _RowWriter(out / "results.csv", EMBEDDING_COLUMNS)
    rows = []
    try:
        for task, res in _ordered_results(_Guarded(_embedding_task), tasks, jobs):
            ref = math.sqrt(cfg.Q) / math.sqrt(cfg.d ** task["n"])
            row = {"experiment": "embedding_sweep", **{k: task[k] for k in ("n", "r", "trial", "seed")}}
            if "error" in res:
                failures.append({"n": task["n"], "r": task["r"], "trial": task["trial"], **res})
                row["status"] = "error"
            else:
                row.update(status="ok", min_norm=res["min_norm"], reference=ref, ratio=res["min_norm"] / ref)
            writer.write(row)
            rows.append(row)
    finally:
        writer.close()
    table = ResultTable("embedding_sweep", EMBEDDING_COLUMNS, rows)
    summary = embedding_summary(table)
    _write_csv(out / "embedding_summary.csv", EMBEDDING_SUMMARY_COLUMNS, summary)
    _write_json(out / "runs" / "embedding.json", {"summary": summary})
    return RunOutcome(table, out, failures, len(points))


def embedding_summary(table: ResultTable) -> list[dict[str, Any]]:
    groups: dict[tuple, list[dict[str, Any]]] = {}
    for row in table.rows:
        if row.get("status") == "ok":
            groups.setdefault((row["n"], row["r"]), []).append(row)
    out = []
    for (n, r), rows in sorted(groups.items()):
        mins = np.array([float(x["min_norm"]) for x in rows])
        ref = float(rows[0]["reference"])
        se = float(mins.std(ddof=1) / math.sqrt(mins.size)) if mins.size > 1 else 0.0
        out.append(
            {
                "n": n,
                "r": r,
                "trials_ok": mins.size,
                "mean_min_norm": float(mins.mean()),
                "reference": ref,
                "ratio": float(mins.mean() / ref),
                "stderr": se,
            }
        )
    return out


# ---------------------------------------------------------------- diagnostics


DIAGNOSTIC_COLUMNS = ["experiment", "name", "params", "estimate", "closed_form", "se", "rule", "passed"]


def _run_diagnostics(cfg: ExperimentConfig, out: Path) -> RunOutcome:
    report = closed_form_suite(samples=cfg.samples, seed=cfg.master_seed)
    rows = [
        {
            "experiment": "diagnostics",
            "name": c.name,
            "params": json.dumps(c.params, sort_keys=True),
            "estimate": c.estimate,
            "closed_form": c.closed_form,
            "se": c.se,
            "rule": c.rule,
            "passed": c.passed,
        }
        for c in report.checks
    ]
    _write_csv(out / "results.csv", DIAGNOSTIC_COLUMNS, rows)
    _write_json(out / "runs" / "diagnostics.json", report.to_dict())
    failures = [{"name": r["name"], "error": "check_failed", "params": r["params"]} for r in rows if not r["passed"]]
    return RunOutcome(ResultTable("diagnostics", DIAGNOSTIC_COLUMNS, rows), out, failures, len(rows))


# ---------------------------------------------------------------- entry point


def run(
    config: ExperimentConfig,
    jobs: int = 1,
    embed_vectors: bool = False,
    output_dir: str | os.PathLike | None = None,
) -> RunOutcome:
    """Execute ``config`` and persist its outputs; see the module docstring.

    Grid points that hit a capacity guard or raise are recorded as failures
    and the rest of the grid still runs; the manifest's ``partial`` flag is
    then set.
    """
    out = Path(output_dir if output_dir is not None else config.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    if config.experiment == "recovery_sweep":
        outcome = _run_recovery(config, out, jobs, embed_vectors)
    elif config.experiment == "embedding_sweep":
        outcome = _run_embedding(config, out, jobs)
    else:
        outcome = _run_diagnostics(config, out)
    _write_manifest(config, outcome)
    return outcome


def _write_manifest(config: ExperimentConfig, outcome: RunOutcome) -> None:
    out = outcome.output_dir
    files = {
        str(p.relative_to(out)): _sha256(p)
        for p in sorted(out.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    manifest = {
        "package": "ttqst",
        "version": __version__,
        "experiment": config.experiment,
        "config": config.to_dict(),
        "master_seed": config.master_seed,
        "solver_defaults": dataclasses.asdict(IHTConfig()),
        "rows": len(outcome.table.rows),
        "partial": bool(outcome.failures),
        "failures": outcome.failures,
        "files": files,
    }
    _write_json(out / "manifest.json", manifest)


# ---------------------------------------------------------------- plot data

_PLOT_NEEDS = {
    "fig2": ["n", "min_norm", "reference", "status"],
    "fig3": ["n", "r", "M", "trial", "status"],
    "fig4": ["n", "r", "M", "final_distance", "status"],
}


def _write_columns(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    lines = ["# " + "\t".join(header)]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")


def _mean_stderr(x: Sequence[float]) -> tuple[float, float]:
    a = np.asarray(x, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0


def _padded_mean(curves: list[list[float]]) -> np.ndarray:
    # runs stop at different iterations; hold each curve at its final value
    length = max(len(c) for c in curves)
    return np.mean([np.pad(np.asarray(c, float), (0, length - len(c)), mode="edge") for c in curves], axis=0)


def emit_plot_data(table: ResultTable, plot: str, out_dir: str | os.PathLike) -> list[Path]:
    """Write tab-separated plot data for ``fig2``, ``fig3`` or ``fig4``.

    Every file starts with a ``#`` header naming its columns and units.

    Raises:
        PlotDataError: the table is empty or lacks the columns the plot needs.
            Nothing is written in that case.
    """
    if plot not in _PLOT_NEEDS:
        raise PlotDataError(f"unknown plot {plot!r}; choose from {sorted(_PLOT_NEEDS)}")
    if not table.rows:
        raise PlotDataError("result table is empty")
    missing = [c for c in _PLOT_NEEDS[plot] if c not in table.columns]
    if missing:
        raise PlotDataError(f"table is missing columns needed for {plot}: {missing}")
    ok = [r for r in table.rows if r.get("status") == "ok"]
    if not ok:
        raise PlotDataError("result table has no successful rows")
    files: dict[str, tuple[list[str], list[list[Any]]]] = {}

    if plot == "fig2":
        by_n: dict[int, list[dict[str, Any]]] = {}
        for row in ok:
            by_n.setdefault(int(row["n"]), []).append(row)
        norm_rows, ref_rows = [], []
        for n in sorted(by_n):
            mean, se = _mean_stderr([float(x["min_norm"]) for x in by_n[n]])
            norm_rows.append([n, mean, se])
            ref_rows.append([n, float(by_n[n][0]["reference"])])
        files["fig2_min_norm.tsv"] = (["n [sites]", "mean_min_norm [Frobenius-normalized]", "stderr"], norm_rows)
        files["fig2_reference.tsv"] = (["n [sites]", "reference sqrt(Q K)/d^n"], ref_rows)

    elif plot == "fig3":
        if not table.curves:
            raise PlotDataError("table is missing columns needed for fig3: ['loss_curve', 'distance_curve']")
        groups: dict[tuple, list[tuple]] = {}
        for row in ok:
            key = (int(row["n"]), int(row["r"]), int(row["M"]), int(row["trial"]))
            if key in table.curves:
                groups.setdefault(key[:3], []).append(key)
        if not groups:
            raise PlotDataError("no curves match the successful rows")
        for (n, r, M), keys in sorted(groups.items()):
            loss = _padded_mean([table.curves[k]["loss"] for k in keys])
            dist = _padded_mean([table.curves[k]["distance"] for k in keys])
            tag = f"n{n}_r{r}_M{M}"
            files[f"fig3a_loss_{tag}.tsv"] = (["iteration [count]", "loss [mean over trials]"], list(enumerate(loss.tolist())))
            files[f"fig3b_distance_{tag}.tsv"] = (
                ["iteration [count]", "distance [squared, mean over trials]"],
                list(enumerate(dist.tolist())),
            )

    else:
        groups4: dict[tuple, dict[int, list[float]]] = {}
        for row in ok:
            groups4.setdefault((int(row["M"]), int(row["r"])), {}).setdefault(int(row["n"]), []).append(
                float(row["final_distance"])
            )
        for (M, r), by_n4 in sorted(groups4.items()):
            rows4 = [[n, *_mean_stderr(v)] for n, v in sorted(by_n4.items())]
            files[f"fig4_M{M}_r{r}.tsv"] = (["n [sites]", "mean_distance [squared]", "stderr"], rows4)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in files.items():
        _write_columns(out / name, header, rows)
        written.append(out / name)
    return written
