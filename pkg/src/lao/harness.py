"""Experiment harness: training runs, budget-matched comparisons, CV and CSV I/O.

Every command takes an :class:`ExperimentConfig`.  Trial ``i`` uses seed
``seed + i`` both for its train/test split and for the learner, so results
are reproducible and do not depend on the order trials are run in.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ConfigurationError, FitResult, LearnerConfig, TraceRecord
from .data import (
    CERT_L2,
    CERT_LINF,
    Dataset,
    digits_surrogate,
    kfold,
    load_csv,
    load_idx,
    make_binary_task,
    max_norm,
    normalize,
    split_indices,
)
from .learners import FITTERS, NORM_OF, cost_per_example, mse
from .smoothing import LossSpec
from .verify import SUITES, run_suites

ALGORITHMS = tuple(FITTERS)
FORMATS = ("csv", "idx")
TASKS = {"3vs5": (5, 3)}  # positive digit, negative digit
SURROGATE_SIZE = 2000
SURROGATE_SEED = 0

TRACE_HEADER = ["example_index", "cumulative_attributes", "test_mse", "train_loss_estimate"]
CURVE_HEADER = ["algorithm", "attributes", "mean_test_mse", "std_test_mse", "trials"]
FINAL_HEADER = ["algorithm", "trial", "examples", "attributes", "test_mse"]
CV_HEADER = ["eta", "B", "k", "resolved_eta", "mean_val_mse", "std_val_mse"]
PARAM_KEYS = ("k", "B", "eta", "delta", "epsilon", "loss")
GRID_KEYS = ("eta", "B", "k")


@dataclass
class ExperimentConfig:
    """Everything a harness command needs; round-trips through JSON.

    ``algorithms`` lists the learners compared by ``experiment``; ``params``
    maps an algorithm name to overrides of ``k``, ``B``, ``eta``, ``delta``,
    ``epsilon`` or (for ``ogd``) ``loss``.  ``passes > 1`` streams that many
    reshuffled copies of the training split.  ``B = None`` means
    ``max(1, max |y|)``.
    """

    algorithm: str = "aerr"
    algorithms: list = field(default_factory=list)
    k: int = 1
    B: float | None = None
    eta: float | str = "auto"
    delta: float = 0.0
    epsilon: float = 0.1
    seed: int = 0
    trials: int = 1
    data: str | None = None
    labels: str | None = None
    format: str = "csv"
    task: str | None = None
    budget: int | None = None
    out: str | None = None
    train_fraction: float = 0.8
    passes: int = 1
    folds: int = 10
    grid: dict | None = None
    params: dict = field(default_factory=dict)
    checkpoints: int = 50
    plot: str | None = None

    def __post_init__(self):
        for name in [self.algorithm, *self.algorithms, *self.params]:
            if name not in ALGORITHMS:
                raise ConfigurationError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
        for name, overrides in self.params.items():
            bad = set(overrides) - set(PARAM_KEYS)
            if bad:
                raise ConfigurationError(f"unknown parameter(s) {sorted(bad)} for {name}")
        if self.format not in FORMATS:
            raise ConfigurationError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.task is not None and self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}; known: {', '.join(TASKS)}")
        if not isinstance(self.trials, int) or not isinstance(self.passes, int):
            raise ConfigurationError("trials and passes must be integers")
        if self.trials < 1 or self.passes < 1 or self.checkpoints < 1:
            raise ConfigurationError("trials, passes and checkpoints must be >= 1")
        if not 0 < self.train_fraction <= 1:
            raise ConfigurationError("train_fraction must lie in (0, 1]")
        if self.budget is not None and self.budget < 1:
            raise ConfigurationError("budget must be a positive attribute count")
        if self.grid is not None:
            bad = set(self.grid) - set(GRID_KEYS)
            if bad:
                raise ConfigurationError(f"unknown grid key(s) {sorted(bad)}; allowed: {GRID_KEYS}")
            if not self.grid or any(len(v) == 0 for v in self.grid.values()):
                raise ConfigurationError("grid must be non-empty")
        for name in [self.algorithm, *self.algorithms]:
            try:
                self.learner_config(name, B=1.0)
            except ConfigurationError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad parameter type: {exc}") from None
        for key in ("seed", "trials", "passes", "folds", "checkpoints"):
            if not isinstance(getattr(self, key), int):
                raise ConfigurationError(f"{key} must be an integer")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**raw)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigurationError("config JSON must be an object")
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def setting(self, algorithm: str, key: str):
        return self.params.get(algorithm, {}).get(key, getattr(self, key, None))

    def learner_config(self, algorithm: str, B: float, budget=None, m=None) -> LearnerConfig:
        return LearnerConfig(
            k=self.setting(algorithm, "k"),
            eta=self.setting(algorithm, "eta"),
            B=B,
            m=m,
            delta=self.setting(algorithm, "delta"),
            epsilon=self.setting(algorithm, "epsilon"),
            budget=budget,
        )


# --------------------------------------------------------------------------- data


def load_dataset(config: ExperimentConfig) -> Dataset:
    """Read the configured data source and apply the task filter.

    With no ``data`` path and ``task = "3vs5"`` the generated digit surrogate
    (2000 instances, 28x28) stands in for MNIST.
    """
    if config.data is None:
        if config.task is None:
            raise ConfigurationError("no data source: pass --data (or --task 3vs5 for the digit surrogate)")
        ds = digits_surrogate(SURROGATE_SIZE, seed=SURROGATE_SEED)
    elif config.format == "idx":
        if config.labels is None:
            raise ConfigurationError("IDX input needs both --data (images) and --labels")
        ds = load_idx(config.data, config.labels)
    else:
        ds = load_csv(config.data)
    if config.task is not None:
        pos, neg = TASKS[config.task]
        ds = make_binary_task(ds, pos, neg)
    return ds


def prepare(ds: Dataset, algorithm: str) -> Dataset:
    """Give ``ds`` the norm certificate ``algorithm`` needs.

    Data already inside the unit ball is certified as-is; raw pixels and
    anything larger are rescaled with :func:`normalize`.
    """
    cert = NORM_OF[algorithm]
    if ds.norm_certificate == cert or (cert == CERT_LINF and ds.norm_certificate == CERT_L2):
        return ds
    if ds.pixel_scale is None and len(ds) and max_norm(ds.X, cert) <= 1.0:
        return dataclasses.replace(ds, norm_certificate=cert)
    return normalize(ds, cert)


def resolve_B(config: ExperimentConfig, algorithm: str, ds: Dataset) -> float:
    B = config.setting(algorithm, "B")
    return max(1.0, ds.label_bound) if B is None else float(B)


def training_stream(train: Dataset, passes: int, seed: int) -> Dataset:
    """``passes`` reshuffled copies of ``train`` back to back (one pass keeps the order)."""
    if passes == 1:
        return train
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(len(train)) for _ in range(passes)])
    return train.subset(order)


def run_learner(algorithm: str, train: Dataset, lcfg: LearnerConfig, test: Dataset | None,
                loss: str | None = None) -> FitResult:
    if algorithm == "ogd" and loss is not None:
        return FITTERS["ogd"](train, lcfg, test, LossSpec(loss, delta=lcfg.delta))
    return FITTERS[algorithm](train, lcfg, test)


def _trial_split(ds: Dataset, config: ExperimentConfig, seed: int):
    if config.train_fraction >= 1:
        return np.arange(len(ds)), None
    return split_indices(len(ds), config.train_fraction, seed)


# --------------------------------------------------------------------------- CSV


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_rows(path, header) -> list[dict]:
    """Parse a harness CSV, checking its header; numeric cells become int or float."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        found = next(reader, None)
        if found != list(header):
            raise ConfigurationError(f"{path}: expected header {','.join(header)}, got {found}")
        rows = []
        for raw in reader:
            row = {}
            for key, cell in zip(header, raw):
                try:
                    row[key] = int(cell)
                except ValueError:
                    try:
                        row[key] = float(cell)
                    except ValueError:
                        row[key] = cell
            rows.append(row)
    return rows


def write_trace_csv(path, trace) -> None:
    write_rows(path, TRACE_HEADER, [
        (r.example_index, r.cumulative_attributes, r.test_error, r.train_loss_estimate) for r in trace
    ])


def read_trace_csv(path) -> list[TraceRecord]:
    return [
        TraceRecord(r["example_index"], r["cumulative_attributes"], float(r["test_mse"]),
                    float(r["train_loss_estimate"]))
        for r in read_rows(path, TRACE_HEADER)
    ]


def trial_path(out, trial: int, trials: int, tag: str = "") -> Path:
    out = Path(out)
    if trials == 1 and not tag:
        return out
    suffix = f"_{tag}" if tag else ""
    if trials > 1:
        suffix += f"_trial{trial}"
    return out.with_name(out.stem + suffix + out.suffix)


# --------------------------------------------------------------------------- train


@dataclass
class TrainOutcome:
    results: list
    paths: list


def cmd_train(config: ExperimentConfig, dataset: Dataset | None = None) -> TrainOutcome:
    """Fit ``config.algorithm`` once per trial and write each trace as CSV."""
    algo = config.algorithm
    ds = prepare(dataset if dataset is not None else load_dataset(config), algo)
    B = resolve_B(config, algo, ds)
    results, paths = [], []
    for trial in range(config.trials):
        seed = config.seed + trial
        train_idx, test_idx = _trial_split(ds, config, seed)
        train = training_stream(ds.subset(train_idx), config.passes, seed)
        test = None if test_idx is None else ds.subset(test_idx)
        lcfg = dataclasses.replace(config.learner_config(algo, B, budget=config.budget), seed=seed)
        res = run_learner(algo, train, lcfg, test, config.setting(algo, "loss"))
        results.append(res)
        if config.out:
            path = trial_path(config.out, trial, config.trials)
            write_trace_csv(path, res.trace)
            paths.append(path)
    return TrainOutcome(results, paths)


# --------------------------------------------------------------------------- experiment


@dataclass
class ExperimentOutcome:
    checkpoints: np.ndarray
    curves: dict  # algorithm -> (trials, checkpoints) array of test MSE
    finals: dict  # algorithm -> list of FitResult-derived dicts per trial
    paths: list

    def mean_curve(self, algorithm: str) -> np.ndarray:
        return self.curves[algorithm].mean(axis=0)

    def final_mse(self, algorithm: str) -> np.ndarray:
        return np.array([f["test_mse"] for f in self.finals[algorithm]])


def align_trace(trace, checkpoints) -> np.ndarray:
    """Test MSE at each attribute checkpoint by linear interpolation.

    Before the first trace row the value is undefined (NaN); after a run
    stops, its last value carries forward.
    """
    attrs = np.array([r.cumulative_attributes for r in trace], dtype=float)
    errs = np.array([r.test_error for r in trace], dtype=float)
    return np.interp(checkpoints, attrs, errs, left=np.nan, right=errs[-1])


def cmd_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> ExperimentOutcome:
    """Run every algorithm in ``config.algorithms`` under one shared attribute budget.

    Per trial all learners see the same split and example order; curves are
    averaged over trials at evenly spaced budget checkpoints.
    """
    if len(config.algorithms) < 2:
        raise ConfigurationError("experiment compares algorithms: list at least 2 in 'algorithms'")
    if config.budget is None:
        raise ConfigurationError("experiment needs a shared attribute budget (--budget)")
    if config.train_fraction >= 1:
        raise ConfigurationError("experiment needs a held-out test split (train_fraction < 1)")
    raw = dataset if dataset is not None else load_dataset(config)
    views = {algo: prepare(raw, algo) for algo in config.algorithms}
    checkpoints = np.linspace(config.budget / config.checkpoints, config.budget, config.checkpoints)

    curves = {algo: np.zeros((config.trials, checkpoints.size)) for algo in config.algorithms}
    finals = {algo: [] for algo in config.algorithms}
    for trial in range(config.trials):
        seed = config.seed + trial
        train_idx, test_idx = split_indices(len(raw), config.train_fraction, seed)
        for algo in config.algorithms:
            ds = views[algo]
            train = training_stream(ds.subset(train_idx), config.passes, seed)
            test = ds.subset(test_idx)
            lcfg = dataclasses.replace(
                config.learner_config(algo, resolve_B(config, algo, ds), budget=config.budget), seed=seed
            )
            res = run_learner(algo, train, lcfg, test, config.setting(algo, "loss"))
            curves[algo][trial] = align_trace(res.trace, checkpoints)
            finals[algo].append({
                "trial": trial,
                "examples": res.n_examples,
                "attributes": res.ledger_total,
                "test_mse": mse(res.w_bar, test),
                "eta": res.eta,
                "max_iterate_norm": res.max_iterate_norm,
                "norm_violations": res.norm_violations,
                "B": lcfg.B,
            })

    outcome = ExperimentOutcome(checkpoints, curves, finals, [])
    if config.out:
        rows = []
        for algo in config.algorithms:
            mean = curves[algo].mean(axis=0)
            std = curves[algo].std(axis=0)
            rows.extend((algo, int(round(c)), mu, sd, config.trials) for c, mu, sd in zip(checkpoints, mean, std))
        write_rows(config.out, CURVE_HEADER, rows)
        final_path = trial_path(config.out, 0, 1, tag="final")
        write_rows(final_path, FINAL_HEADER, [
            (algo, f["trial"], f["examples"], f["attributes"], f["test_mse"])
            for algo in config.algorithms for f in finals[algo]
        ])
        outcome.paths = [Path(config.out), final_path]
        if config.plot:
            Path(config.plot).write_text(gnuplot_script(config.out, config.algorithms), encoding="utf-8")
            outcome.paths.append(Path(config.plot))
    return outcome


def gnuplot_script(csv_path, algorithms) -> str:
    lines = [
        "set datafile separator ','",
        "set key top right",
        "set xlabel 'attributes observed'",
        "set ylabel 'test MSE'",
        "set logscale y",
    ]
    plots = [
        f"'{csv_path}' using (strcol(1) eq '{algo}' ? $2 : 1/0):4 skip 1 with lines title '{algo}'"
        for algo in algorithms
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- cross-validation


@dataclass
class CVOutcome:
    best: dict
    table: list
    path: Path | None = None


def grid_points(grid: dict) -> list[dict]:
    keys = [key for key in GRID_KEYS if key in grid]
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def cross_validate(ds: Dataset, config: ExperimentConfig, algorithm: str, points, *,
                   budget=None, passes: int = 1) -> CVOutcome:
    """Mean validation MSE of every grid point over ``config.folds`` folds.

    The winner has the lowest mean; exact ties go to the smaller resolved
    step size, then the smaller B, then the earlier grid point.  A run whose
    iterate blows up scores ``inf``.
    """
    if not points:
        raise ConfigurationError("grid must be non-empty")
    ds = prepare(ds, algorithm)
    plan = kfold(ds, config.folds, config.seed)
    table = []
    for index, point in enumerate(points):
        params = {**config.params.get(algorithm, {}), **point}
        local = dataclasses.replace(config, params={algorithm: params})
        B = resolve_B(local, algorithm, ds)
        errors, etas = [], []
        for f in range(plan.fold_count):
            train_idx, val_idx = plan.fold(f)
            train = training_stream(ds.subset(train_idx), passes, config.seed + f)
            lcfg = dataclasses.replace(local.learner_config(algorithm, B, budget=budget), seed=config.seed + f)
            try:
                res = run_learner(algorithm, train, lcfg, None, local.setting(algorithm, "loss"))
                errors.append(mse(res.w_bar, ds.subset(val_idx)))
                etas.append(res.eta)
            except FloatingPointError:
                errors.append(math.inf)
        errors = np.array(errors)
        finite = np.isfinite(errors).all()
        table.append({
            "index": index,
            "eta": point.get("eta", local.setting(algorithm, "eta")),
            "B": B,
            "k": local.setting(algorithm, "k"),
            "resolved_eta": float(np.mean(etas)) if etas else math.nan,
            "mean_val_mse": float(errors.mean()) if finite else math.inf,
            "std_val_mse": float(errors.std()) if finite else math.inf,
        })
    best = min(table, key=lambda r: (r["mean_val_mse"], r["resolved_eta"], r["B"], r["index"]))
    return CVOutcome(best, table)


def cmd_cv(config: ExperimentConfig, grid: dict | None = None, dataset: Dataset | None = None) -> CVOutcome:
    grid = grid if grid is not None else (config.grid or {"eta": [config.eta]})
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigurationError("grid must be non-empty")
    ds = dataset if dataset is not None else load_dataset(config)
    outcome = cross_validate(ds, config, config.algorithm, grid_points(grid),
                             budget=config.budget, passes=config.passes)
    if config.out:
        write_rows(config.out, CV_HEADER, [
            (str(r["eta"]), r["B"], r["k"], r["resolved_eta"], r["mean_val_mse"], r["std_val_mse"])
            for r in outcome.table
        ])
        outcome.path = Path(config.out)
    return outcome


# --------------------------------------------------------------------------- verify


def cmd_verify(suites) -> tuple[bool, list]:
    names = list(SUITES) if suites in (None, "all") or list(suites) == ["all"] else list(suites)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suite(s) {unknown}; choose from {', '.join(SUITES)} or all")
    checks = run_suites(names)
    return all(c.passed for c in checks), checks


def budget_examples(algorithm: str, k: int, d: int, budget: int) -> int:
    """How many examples a budget buys at the nominal per-example cost."""
    return int(budget // cost_per_example(algorithm, k, d))

