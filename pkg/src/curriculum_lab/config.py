"""Experiment configuration: a JSON tree with a closed key schema.

Unknown keys anywhere in the tree are hard errors (listed by dotted path), so
a typo cannot silently fall back to a default and taint an experiment.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import ConfigError
from .pacing import PacingSpec, extend_boundaries
from .trainer import LRSchedule, ModelSpec

CONDITIONS = ("curriculum", "anti", "random", "vanilla", "self_paced")
SCORING_KINDS = ("oracle", "self_taught", "transfer", "file")
CRITERIA = ("final_accuracy", "auc")

# allowed keys: None marks a leaf, a dict marks a nested section
_SCHEMA = {
    "dataset": {
        "synthetic": {"classes": None, "dim": None, "n_per_class": None,
                      "spread": None, "seed": None},
        "train_csv": None,
        "test_csv": None,
        "bayes_json": None,
        "embeddings_csv": None,
        "train_fraction": None,
        "split_seed": None,
    },
    "condition": None,
    "scoring": {"kind": None, "path": None, "folds": None},
    "pacing": {"variant": None, "starting_percent": None, "increase": None,
               "step_length": None, "boundaries": None},
    "lr": {"variant": None, "lr0": None, "decrease_factor": None,
           "lr_step_length": None, "lr_min": None, "lr_max": None,
           "cycle_length": None},
    "model": {"architecture": None, "hidden": None},
    "batch_size": None,
    "iterations": None,
    "repetitions": None,
    "seed": None,
    "seeds": None,
    "record_every": None,
    "selection": {"criterion": None, "window": None},
    "grid": {
        "pacing": {"starting_percent": None, "increase": None, "step_length": None,
                   "boundaries": None},
        "lr": {"lr0": None, "decrease_factor": None, "lr_step_length": None},
        "validation_fraction": None,
        "split_seed": None,
    },
    "bootstrap": {"generations": None},
    "gradient_analysis": {"subset_fraction": None},
    "theory": {"instances": None, "constant_variance_families": None},
}


def _collect_unknown(tree: dict, schema: dict, prefix: str = "") -> list[str]:
    unknown = []
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if key not in schema:
            unknown.append(path)
            continue
        sub = schema[key]
        if isinstance(value, dict):
            if not isinstance(sub, dict):
                unknown.append(f"{path} (expected a value, got a section)")
            else:
                unknown.extend(_collect_unknown(value, sub, prefix=f"{path}."))
        elif isinstance(sub, dict):
            unknown.append(f"{path} (expected a section, got a value)")
    return unknown


def validate_tree(tree: dict) -> None:
    if not isinstance(tree, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = _collect_unknown(tree, _SCHEMA)
    if unknown:
        raise ConfigError("unknown config key(s): " + ", ".join(sorted(unknown)))


def load_config_tree(path) -> dict:
    try:
        with open(path) as f:
            tree = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    validate_tree(tree)
    return tree


@dataclass(frozen=True)
class GridSpec:
    pacing: dict[str, list]
    lr: dict[str, list]
    validation_fraction: float = 0.8
    split_seed: int = 0

    def __post_init__(self):
        for name, axes in (("pacing", self.pacing), ("lr", self.lr)):
            for key, values in axes.items():
                if not isinstance(values, (list, tuple)) or len(values) == 0:
                    raise ConfigError(f"grid.{name}.{key} must be a non-empty list")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment settings; `tree` retains the exact resolved JSON."""

    tree: dict
    condition: str
    scoring_kind: str
    scoring_path: str | None
    scoring_folds: int
    pacing_variant: str
    starting_percent: float
    increase: float | None
    step_length: int | None
    boundaries: tuple[int, ...] | None
    schedule: LRSchedule
    model_spec: ModelSpec
    batch_size: int
    iterations: int
    seeds: tuple[int, ...]
    record_every: int
    criterion: str
    window: int
    grid: GridSpec | None
    generations: int
    subset_fraction: float
    theory_instances: int
    theory_families: int

    @property
    def repetitions(self) -> int:
        return len(self.seeds)


def _get(tree: dict, path: str, default=None):
    node = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


_FILE_KEYS = ("dataset.train_csv", "dataset.test_csv", "dataset.bayes_json",
              "dataset.embeddings_csv", "scoring.path")


def _check_referenced_files(tree: dict) -> None:
    missing = [f"{key} ({value})" for key in _FILE_KEYS
               if (value := _get(tree, key)) is not None and not os.path.isfile(value)]
    if missing:
        raise ConfigError("referenced file(s) do not exist: " + ", ".join(missing))


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def resolve_config(tree: dict, seed_override: int | None = None) -> ExperimentConfig:
    """Validate a config tree and fill defaults; returns the resolved config.

    The resolved tree (with defaults and the seed override applied) is kept
    verbatim so manifests can reproduce the run byte-for-byte.
    """
    validate_tree(tree)
    tree = json.loads(json.dumps(tree))  # deep copy, JSON-clean

    if seed_override is not None:
        tree["seed"] = int(seed_override)
        tree.pop("seeds", None)

    condition = tree.setdefault("condition", "vanilla")
    _require(condition in CONDITIONS, f"condition must be one of {CONDITIONS}, got {condition!r}")

    scoring = tree.setdefault("scoring", {})
    kind = scoring.setdefault("kind", "oracle")
    _require(kind in SCORING_KINDS, f"scoring.kind must be one of {SCORING_KINDS}, got {kind!r}")
    folds = int(scoring.setdefault("folds", 4))
    _require(folds >= 2, "scoring.folds must be >= 2")
    if kind == "file":
        _require(scoring.get("path") is not None, "scoring.kind=file requires scoring.path")
    _check_referenced_files(tree)

    pacing = tree.setdefault("pacing", {})
    variant = pacing.setdefault("variant", "vanilla" if condition == "vanilla" else "fixed_exp")
    if condition == "vanilla":
        variant = "vanilla"
        pacing["variant"] = "vanilla"
    starting_percent = float(pacing.setdefault("starting_percent", 0.1))
    increase = pacing.get("increase")
    step_length = pacing.get("step_length")
    boundaries = pacing.get("boundaries")
    if variant in ("fixed_exp", "varied_exp"):
        increase = float(pacing.setdefault("increase", 1.9))
    if variant in ("fixed_exp", "single_step"):
        step_length = int(pacing.setdefault("step_length", 100))
    if variant == "varied_exp":
        _require(boundaries is not None and len(boundaries) >= 1,
                 "varied_exp requires pacing.boundaries (at least the first two step ends)")
        boundaries = list(extend_boundaries(boundaries, starting_percent, increase))
        pacing["boundaries"] = boundaries

    lr = tree.setdefault("lr", {})
    lr_variant = lr.setdefault("variant", "exponential")
    if lr_variant == "exponential":
        schedule = LRSchedule(variant="exponential",
                              lr0=float(lr.setdefault("lr0", 0.1)),
                              decrease_factor=float(lr.setdefault("decrease_factor", 1.5)),
                              lr_step_length=int(lr.setdefault("lr_step_length", 500)))
    elif lr_variant == "cyclical":
        schedule = LRSchedule(variant="cyclical",
                              lr_min=float(lr.setdefault("lr_min", 0.01)),
                              lr_max=float(lr.setdefault("lr_max", 0.1)),
                              cycle_length=int(lr.setdefault("cycle_length", 500)))
    else:
        raise ConfigError(f"lr.variant must be exponential or cyclical, got {lr_variant!r}")

    model = tree.setdefault("model", {})
    model_spec = ModelSpec(architecture=model.setdefault("architecture", "linear_softmax"),
                           hidden=int(model.setdefault("hidden", 0)))

    batch_size = int(tree.setdefault("batch_size", 100))
    iterations = int(tree.setdefault("iterations", 3000))
    record_every = int(tree.setdefault("record_every", 50))
    _require(batch_size >= 1, "batch_size must be >= 1")
    _require(iterations >= 1, "iterations must be >= 1")
    _require(record_every >= 1, "record_every must be >= 1")

    if "seeds" in tree:
        seeds = tuple(int(s) for s in tree["seeds"])
        _require(len(seeds) >= 1, "seeds must be non-empty")
        if "repetitions" in tree:
            _require(int(tree["repetitions"]) == len(seeds),
                     "repetitions does not match the length of seeds")
        tree["repetitions"] = len(seeds)
    else:
        reps = int(tree.setdefault("repetitions", 1))
        _require(reps >= 1, "repetitions must be >= 1")
        base = int(tree.setdefault("seed", 0))
        seeds = tuple(base + r for r in range(reps))
        tree["seeds"] = list(seeds)

    selection = tree.setdefault("selection", {})
    criterion = selection.setdefault("criterion", "final_accuracy")
    _require(criterion in CRITERIA, f"selection.criterion must be one of {CRITERIA}")
    window = int(selection.setdefault("window", 5))
    _require(window >= 1, "selection.window must be >= 1")

    grid = None
    if "grid" in tree:
        g = tree["grid"]
        grid = GridSpec(pacing={k: list(v) for k, v in g.get("pacing", {}).items()},
                        lr={k: list(v) for k, v in g.get("lr", {}).items()},
                        validation_fraction=float(g.setdefault("validation_fraction", 0.8)),
                        split_seed=int(g.setdefault("split_seed", 0)))

    generations = int(_get(tree, "bootstrap.generations", 1))
    subset_fraction = float(_get(tree, "gradient_analysis.subset_fraction", 0.1))
    theory_instances = int(_get(tree, "theory.instances", 1000))
    theory_families = int(_get(tree, "theory.constant_variance_families", 200))

    return ExperimentConfig(
        tree=tree, condition=condition, scoring_kind=kind,
        scoring_path=scoring.get("path"), scoring_folds=folds,
        pacing_variant=variant, starting_percent=starting_percent,
        increase=increase, step_length=step_length,
        boundaries=tuple(boundaries) if boundaries else None,
        schedule=schedule, model_spec=model_spec, batch_size=batch_size,
        iterations=iterations, seeds=seeds, record_every=record_every,
        criterion=criterion, window=window, grid=grid, generations=generations,
        subset_fraction=subset_fraction, theory_instances=theory_instances,
        theory_families=theory_families)


def pacing_spec_for(config: ExperimentConfig, N: int,
                    condition: str | None = None) -> PacingSpec:
    """Instantiate the config's pacing for a concrete dataset size."""
    cond = condition or config.condition
    if cond == "vanilla":
        return PacingSpec(variant="vanilla", N=N, M=config.iterations)
    kwargs = dict(variant=config.pacing_variant, N=N, M=config.iterations,
                  starting_percent=config.starting_percent)
    if config.pacing_variant in ("fixed_exp", "varied_exp"):
        kwargs["increase"] = config.increase
    if config.pacing_variant in ("fixed_exp", "single_step"):
        kwargs["step_length"] = config.step_length
    if config.pacing_variant == "varied_exp":
        kwargs["boundaries"] = config.boundaries
    return PacingSpec(**kwargs)
