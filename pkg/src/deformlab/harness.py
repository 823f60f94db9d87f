"""Seeded multi-run experiment orchestration.

An experiment is described by an ``ExperimentConfig`` (mirrored one-to-one
by a JSON document), executed once per seed, and leaves behind:

  <outdir>/<group>-seed<seed>.csv   per-seed profile rows
  <outdir>/aggregate-<group>.csv    per-layer mean / std / band = 2 std
  <outdir>/manifest.json            config snapshot, file index, extras

Groups name the strands of an experiment: one per downsampling variant for
sensitivity runs, one per sigma for smoothed-init sweeps, one per strength
for synthetic-task sweeps, with ``-init`` / ``-trained`` phases where both
are measured.  Per-seed CSVs are byte-identical across reruns of the same
config; that is the harness's reproducibility contract.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    find_cifar10,
    find_mnist,
    load_cifar10,
    load_mnist,
    make_template_task,
    normalize_channels,
    randomize_labels,
    subset,
)
from .deform import DeformationSpec
from .metrics import (
    DISTANCE_KINDS,
    baseline_init_ntv,
    sensitivity_profile,
    smoothness_profile,
)
from .nn import (
    ArchitectureError,
    TrainConfig,
    check_downsample_kind,
    evaluate,
    init_network,
    parse_architecture,
    save_checkpoint,
    smooth_filters,
    train_sgd,
)
from .seeding import MAX_SEED, child_seed, rng_from
from .synthetic import glyph_templates, smooth_noise_images

KINDS = (
    "init-sensitivity",
    "train-then-probe",
    "smooth-init-sweep",
    "synthetic-sweep",
    "random-labels",
)

DATASET_SOURCES = ("cifar10", "mnist-templates", "glyph-templates", "smooth-noise")

CSV_HEADER = ("run_id", "seed", "layer_index", "layer_label", "value")
AGGREGATE_HEADER = ("layer_index", "layer_label", "mean", "std", "band")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


class RunError(RuntimeError):
    """Experiment could not produce any result (CLI exit code 2)."""


# ---- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class DeformParams:
    grid_size: int = 3
    max_displacement: float = 2.0

    def spec(self, seed) -> DeformationSpec:
        return DeformationSpec(self.grid_size, self.max_displacement, seed)


@dataclass(frozen=True)
class HyperParams:
    lr: float = 0.05
    momentum: float = 0.9
    batch_size: int = 128
    epochs: int = 4


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    outdir: str
    arch: str = "2x32,2x64,2x128,2x256"
    downsample: tuple = ("subsample",)
    classes: int = 10
    in_channels: int = 3
    deformation: DeformParams = field(default_factory=DeformParams)
    dataset: dict = field(default_factory=lambda: {"source": "smooth-noise"})
    hyper: HyperParams = field(default_factory=HyperParams)
    seeds: tuple = (0, 1, 2, 3, 4)
    sigmas: tuple = ()
    strengths: tuple = ()
    distance: str = "cosine"
    probe_count: int = 128
    probe_seed: int = 1234
    save_checkpoints: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["downsample"] = list(self.downsample)
        d["seeds"] = list(self.seeds)
        d["sigmas"] = list(self.sigmas)
        d["strengths"] = list(self.strengths)
        return d


_DATASET_KEYS = {
    "cifar10": {"source", "train_count", "normalize"},
    "mnist-templates": {"source", "n_per_class", "test_per_class", "grid", "strength"},
    "glyph-templates": {
        "source", "n_per_class", "test_per_class", "grid", "strength",
        "glyph_classes", "size", "channels", "template_seed",
    },
    "smooth-noise": {"source", "size", "channels"},
}


def _check_seed_list(name, values):
    out = []
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= MAX_SEED:
            raise ConfigError(f"{name} must hold integers in [0, 2^64), got {v!r}")
        out.append(v)
    if not out:
        raise ConfigError(f"{name} must not be empty")
    return tuple(out)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validates a JSON-shaped dict and builds the config; mirrors to_dict."""
    if not isinstance(raw, dict):
        raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for required in ("kind", "outdir"):
        if required not in raw:
            raise ConfigError(f"config key {required!r} is required")
    if raw["kind"] not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {raw['kind']!r}")

    work = dict(raw)
    try:
        if "deformation" in work:
            dp = work["deformation"]
            extra = set(dp) - {"grid_size", "max_displacement"}
            if extra:
                raise ConfigError(f"unknown deformation keys: {sorted(extra)}")
            work["deformation"] = DeformParams(**dp)
        if "hyper" in work:
            hp = work["hyper"]
            extra = set(hp) - {f.name for f in fields(HyperParams)}
            if extra:
                raise ConfigError(f"unknown hyper keys: {sorted(extra)}")
            work["hyper"] = HyperParams(**hp)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

    if "downsample" in work:
        kinds = work["downsample"]
        if isinstance(kinds, str):
            kinds = [kinds]
        if not kinds:
            raise ConfigError("downsample must name at least one kind")
        try:
            work["downsample"] = tuple(check_downsample_kind(k) for k in kinds)
        except ArchitectureError as exc:
            raise ConfigError(str(exc)) from None
    if "seeds" in work:
        work["seeds"] = _check_seed_list("seeds", work["seeds"])
    work["sigmas"] = tuple(float(s) for s in work.get("sigmas", ()))
    work["strengths"] = tuple(float(c) for c in work.get("strengths", ()))

    cfg = ExperimentConfig(**work)

    try:
        parse_architecture(cfg.arch)
    except ArchitectureError as exc:
        raise ConfigError(str(exc)) from None
    spec_err = _validate_numbers(cfg)
    if spec_err:
        raise ConfigError(spec_err)
    src = cfg.dataset.get("source")
    if src not in DATASET_SOURCES:
        raise ConfigError(f"dataset.source must be one of {DATASET_SOURCES}, got {src!r}")
    extra = set(cfg.dataset) - _DATASET_KEYS[src]
    if extra:
        raise ConfigError(f"unknown dataset keys for source {src!r}: {sorted(extra)}")
    if cfg.kind == "smooth-init-sweep":
        if not cfg.sigmas:
            raise ConfigError("smooth-init-sweep needs a non-empty sigmas list")
        if any(s < 0 for s in cfg.sigmas):
            raise ConfigError("sigmas must be nonnegative")
    if cfg.kind == "synthetic-sweep":
        if not cfg.strengths:
            raise ConfigError("synthetic-sweep needs a non-empty strengths list")
        if any(c < 0 for c in cfg.strengths):
            raise ConfigError("strengths must be nonnegative")
        if src not in ("mnist-templates", "glyph-templates"):
            raise ConfigError("synthetic-sweep needs a template dataset source")
    needs_training = cfg.kind in ("train-then-probe", "synthetic-sweep", "random-labels")
    if needs_training and src == "smooth-noise":
        raise ConfigError(f"{cfg.kind} needs a trainable dataset, not smooth-noise")
    return cfg


def _validate_numbers(cfg: ExperimentConfig):
    if cfg.classes < 2:
        return f"classes must be >= 2, got {cfg.classes}"
    if cfg.in_channels < 1:
        return f"in_channels must be >= 1, got {cfg.in_channels}"
    if cfg.deformation.grid_size < 2:
        return f"deformation.grid_size must be >= 2, got {cfg.deformation.grid_size}"
    if cfg.deformation.max_displacement < 0:
        return "deformation.max_displacement must be >= 0"
    if cfg.distance not in DISTANCE_KINDS:
        return f"distance must be one of {DISTANCE_KINDS}, got {cfg.distance!r}"
    if cfg.probe_count < 2:
        return f"probe_count must be >= 2, got {cfg.probe_count}"
    if not 0 <= cfg.probe_seed <= MAX_SEED:
        return f"probe_seed outside [0, 2^64): {cfg.probe_seed}"
    hp = cfg.hyper
    if hp.lr < 0 or not 0 <= hp.momentum < 1 or hp.batch_size < 1 or hp.epochs < 0:
        return f"bad hyperparameters: {hp}"
    return None


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(raw)


# ---- dataset resolution ----------------------------------------------------


def _pick(images: np.ndarray, count: int, seed: int, *tags) -> np.ndarray:
    if count > len(images):
        raise RunError(f"need {count} images, dataset has {len(images)}")
    idx = rng_from(seed, "probe", *tags).choice(len(images), size=count, replace=False)
    return np.ascontiguousarray(images[idx])


def _glyph_set(cfg: ExperimentConfig):
    ds = cfg.dataset
    return glyph_templates(
        classes=ds.get("glyph_classes", cfg.classes),
        size=ds.get("size", 28),
        channels=ds.get("channels", cfg.in_channels),
        seed=ds.get("template_seed", 7),
    )


def _mnist_templates(cfg: ExperimentConfig):
    found = find_mnist(split="train")
    if found is None:
        raise RunError(
            "MNIST files not found; point the data-root env var at a directory "
            "holding train-images-idx3-ubyte / train-labels-idx1-ubyte"
        )
    full = load_mnist(*found)
    templates = []
    for digit in range(10):
        hits = np.nonzero(full.labels == digit)[0]
        if hits.size == 0:
            raise RunError(f"digit {digit} missing from MNIST train set")
        templates.append(full.images[hits[0]])
    return np.stack(templates)


def resolve_templates(cfg: ExperimentConfig) -> np.ndarray:
    src = cfg.dataset["source"]
    if src == "glyph-templates":
        return _glyph_set(cfg)
    if src == "mnist-templates":
        return _mnist_templates(cfg)
    raise RunError(f"dataset source {src!r} has no templates")


def template_tasks(cfg: ExperimentConfig, strength: float):
    """(train task, test task) at one deformation strength, disjoint streams."""
    templates = resolve_templates(cfg)
    ds = cfg.dataset
    task_seed = child_seed(cfg.probe_seed, "task", f"C{strength:g}")
    kwargs = dict(grid=ds.get("grid", 3), seed=task_seed)
    train = make_template_task(templates, strength, ds.get("n_per_class", 500),
                               split="train", **kwargs)
    test = make_template_task(templates, strength, ds.get("test_per_class", 100),
                              split="test", **kwargs)
    return train, test


def cifar_sets(cfg: ExperimentConfig):
    """(train subset, test set), channel-normalized with train-split stats."""
    train_paths = find_cifar10(split="train")
    test_paths = find_cifar10(split="test")
    if train_paths is None or test_paths is None:
        raise RunError(
            "CIFAR-10 binary batches not found; point the data-root env var at "
            "a directory holding cifar-10-batches-bin/"
        )
    full_train = load_cifar10(train_paths)
    test = load_cifar10(test_paths)
    train = subset(full_train, cfg.dataset.get("train_count", 10000), cfg.probe_seed)
    if cfg.dataset.get("normalize", True):
        stats = full_train.provenance["channel_stats"]
        mean, std = np.array(stats["mean"]), np.array(stats["std"])
        train = normalize_channels(train, mean, std)
        test = normalize_channels(test, mean, std)
    return train, test


def resolve_probe(cfg: ExperimentConfig, strength=None) -> np.ndarray:
    """The experiment's fixed held-out probe batch."""
    src = cfg.dataset["source"]
    if src == "smooth-noise":
        return smooth_noise_images(
            cfg.probe_count,
            size=cfg.dataset.get("size", 32),
            channels=cfg.dataset.get("channels", cfg.in_channels),
            seed=cfg.probe_seed,
        )
    if src == "cifar10":
        _, test = cifar_sets(cfg)
        return _pick(test.images, cfg.probe_count, cfg.probe_seed)
    # template sources probe with held-out test examples of the task
    c = strength if strength is not None else cfg.dataset.get("strength", 2.0)
    _, test_task = template_tasks(cfg, c)
    return _pick(test_task.images, cfg.probe_count, cfg.probe_seed, f"C{c:g}")


def resolve_training(cfg: ExperimentConfig):
    """(train dataset, eval dataset) for kinds that train."""
    src = cfg.dataset["source"]
    if src == "cifar10":
        return cifar_sets(cfg)
    if src in ("mnist-templates", "glyph-templates"):
        return template_tasks(cfg, cfg.dataset.get("strength", 2.0))
    raise RunError(f"dataset source {src!r} cannot provide training data")


# ---- CSV / aggregation -----------------------------------------------------


def write_profile_csv(path, run_id, seed, labels, values):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, (label, value) in enumerate(zip(labels, values)):
            writer.writerow([run_id, seed, i, label, f"{float(value):.17g}"])


def read_profile_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise RunError(f"{path}: unexpected CSV header {header}")
        labels, values = [], []
        for row in reader:
            labels.append(row[3])
            values.append(float(row[4]))
    return labels, np.array(values)


def aggregate(per_seed_profiles):
    """Per-layer mean, sample std and band = 2 std over seed profiles."""
    if len(per_seed_profiles) < 2:
        raise RunError(f"aggregation needs >= 2 profiles, got {len(per_seed_profiles)}")
    labels0 = list(per_seed_profiles[0][0])
    for labels, _ in per_seed_profiles[1:]:
        if list(labels) != labels0:
            raise RunError(f"layer label mismatch: {labels0} vs {list(labels)}")
    stack = np.stack([np.asarray(vals, dtype=np.float64) for _, vals in per_seed_profiles])
    means = stack.mean(axis=0)
    stds = stack.std(axis=0, ddof=1)
    return labels0, means, stds, 2.0 * stds


def write_aggregate_csv(path, labels, means, stds, bands):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_HEADER)
        for i, label in enumerate(labels):
            writer.writerow(
                [i, label, f"{means[i]:.17g}", f"{stds[i]:.17g}", f"{bands[i]:.17g}"]
            )


# ---- experiment execution --------------------------------------------------


def _first_conv_shape(cfg: ExperimentConfig):
    first_width = parse_architecture(cfg.arch)[0][1]
    return (3, 3, cfg.in_channels, first_width)


class _Collector:
    """Accumulates per-seed profiles and failures, then writes everything."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.outdir = Path(cfg.outdir)
        self.groups: dict = {}
        self.failures: dict = {}
        self.extras: dict = {}
        self.checkpoints: dict = {}

    def add(self, group, seed, labels, values):
        self.groups.setdefault(group, {})[seed] = (list(labels), np.asarray(values, float))

    def fail(self, seed, exc):
        self.failures[str(seed)] = f"{type(exc).__name__}: {exc}"

    def finish(self, started):
        cfg = self.cfg
        if len(self.failures) == len(cfg.seeds):
            details = "; ".join(f"seed {s}: {m}" for s, m in self.failures.items())
            raise RunError(f"all {len(cfg.seeds)} seeds failed: {details}")
        self.outdir.mkdir(parents=True, exist_ok=True)
        results = {}
        for group in sorted(self.groups):
            per_seed = self.groups[group]
            paths = {}
            for seed in sorted(per_seed):
                labels, values = per_seed[seed]
                path = self.outdir / f"{group}-seed{seed}.csv"
                write_profile_csv(path, group, seed, labels, values)
                paths[str(seed)] = path.name
            entry = {"per_seed": paths}
            if len(per_seed) >= 2:
                labels, means, stds, bands = aggregate(list(per_seed.values()))
                agg_path = self.outdir / f"aggregate-{group}.csv"
                write_aggregate_csv(agg_path, labels, means, stds, bands)
                entry["aggregate"] = agg_path.name
                entry["aggregate_rows"] = [
                    {"layer_index": i, "layer_label": lab, "mean": float(means[i]),
                     "std": float(stds[i]), "band": float(bands[i])}
                    for i, lab in enumerate(labels)
                ]
            results[group] = entry
        manifest = {
            "config": cfg.to_dict(),
            "results": results,
            "failures": self.failures,
            "extras": self.extras,
            "checkpoints": self.checkpoints,
            "wallclock_s": round(time.monotonic() - started, 3),
            "version": __version__,
        }
        path = self.outdir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest["manifest_path"] = str(path)
        return manifest


def _measure_baseline(col: _Collector):
    mean, std = baseline_init_ntv(_first_conv_shape(col.cfg), resamples=300,
                                  seed=col.cfg.probe_seed)
    col.extras["baseline_ntv"] = {
        "shape": list(_first_conv_shape(col.cfg)),
        "resamples": 300,
        "mean": mean,
        "std": std,
    }


def _init_net(cfg, variant, seed, *tags):
    return init_network(cfg.arch, cfg.classes, variant,
                        child_seed(seed, "init", variant, *tags),
                        in_channels=cfg.in_channels)


def _train(cfg, net, train_ds, seed, *tags):
    tc = TrainConfig(cfg.hyper.lr, cfg.hyper.momentum, cfg.hyper.batch_size,
                     cfg.hyper.epochs, seed=child_seed(seed, "train", *tags))
    _, history = train_sgd(net, train_ds, tc)
    return history


def _maybe_checkpoint(col, net, name):
    if col.cfg.save_checkpoints:
        path = col.outdir / f"{name}.ckpt"
        col.outdir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(net, path)
        col.checkpoints[name] = path.name


def _run_init_sensitivity(cfg: ExperimentConfig, col: _Collector):
    probe = resolve_probe(cfg)
    for seed in cfg.seeds:
        try:
            pspec = cfg.deformation.spec(child_seed(seed, "profile"))
            for variant in cfg.downsample:
                net = _init_net(cfg, variant, seed)
                prof = sensitivity_profile(net, probe, pspec, cfg.distance)
                col.add(variant, seed, prof.labels, prof.scores)
        except Exception as exc:  # noqa: BLE001 - per-seed isolation is the contract
            col.fail(seed, exc)


def _run_train_then_probe(cfg: ExperimentConfig, col: _Collector):
    probe = resolve_probe(cfg)
    train_ds, eval_ds = resolve_training(cfg)
    _measure_baseline(col)
    accs = col.extras.setdefault("test_accuracy", {})
    for seed in cfg.seeds:
        try:
            pspec = cfg.deformation.spec(child_seed(seed, "profile"))
            for variant in cfg.downsample:
                net = _init_net(cfg, variant, seed)
                prof = sensitivity_profile(net, probe, pspec, cfg.distance)
                ntv = smoothness_profile(net)
                col.add(f"{variant}-init", seed, prof.labels, prof.scores)
                col.add(f"{variant}-ntv-init", seed, ntv.labels, ntv.values)
                # shared data-order stream: every variant sees the same batches
                _train(cfg, net, train_ds, seed)
                acc = evaluate(net, eval_ds)
                accs.setdefault(variant, {})[str(seed)] = acc
                prof = sensitivity_profile(net, probe, pspec, cfg.distance)
                ntv = smoothness_profile(net)
                col.add(f"{variant}-trained", seed, prof.labels, prof.scores)
                col.add(f"{variant}-ntv-trained", seed, ntv.labels, ntv.values)
                _maybe_checkpoint(col, net, f"{variant}-seed{seed}")
        except Exception as exc:  # noqa: BLE001
            col.fail(seed, exc)


def _run_smooth_init_sweep(cfg: ExperimentConfig, col: _Collector, sigmas):
    probe = resolve_probe(cfg)
    variant = cfg.downsample[0]
    for seed in cfg.seeds:
        try:
            pspec = cfg.deformation.spec(child_seed(seed, "profile"))
            base = _init_net(cfg, variant, seed)
            for sigma in sigmas:
                net = smooth_filters(base, sigma)
                prof = sensitivity_profile(net, probe, pspec, cfg.distance)
                col.add(f"sigma{sigma:g}", seed, prof.labels, prof.scores)
        except Exception as exc:  # noqa: BLE001
            col.fail(seed, exc)


def _run_synthetic_sweep(cfg: ExperimentConfig, col: _Collector):
    variant = cfg.downsample[0]
    _measure_baseline(col)
    accs = col.extras.setdefault("test_accuracy", {})
    tasks = {}
    probes = {}
    for c in cfg.strengths:
        tasks[c] = template_tasks(cfg, c)
        probes[c] = _pick(tasks[c][1].images, cfg.probe_count, cfg.probe_seed, f"C{c:g}")
    for seed in cfg.seeds:
        try:
            pspec = cfg.deformation.spec(child_seed(seed, "profile"))
            init_recorded = False
            for c in cfg.strengths:
                train_task, test_task = tasks[c]
                net = _init_net(cfg, variant, seed)
                if not init_recorded:
                    ntv = smoothness_profile(net)
                    col.add("ntv-init", seed, ntv.labels, ntv.values)
                    init_recorded = True
                _train(cfg, net, train_task, seed, f"C{c:g}")
                accs.setdefault(f"C{c:g}", {})[str(seed)] = evaluate(net, test_task)
                ntv = smoothness_profile(net)
                col.add(f"C{c:g}-ntv-trained", seed, ntv.labels, ntv.values)
                prof = sensitivity_profile(net, probes[c], pspec, cfg.distance)
                col.add(f"C{c:g}-trained", seed, prof.labels, prof.scores)
        except Exception as exc:  # noqa: BLE001
            col.fail(seed, exc)


def _run_random_labels(cfg: ExperimentConfig, col: _Collector):
    probe = resolve_probe(cfg)
    train_true, eval_ds = resolve_training(cfg)
    train_rand = randomize_labels(train_true, child_seed(cfg.probe_seed, "labels"))
    _measure_baseline(col)
    accs = col.extras.setdefault("accuracy", {})
    for seed in cfg.seeds:
        try:
            pspec = cfg.deformation.spec(child_seed(seed, "profile"))
            variant = cfg.downsample[0]
            net0 = _init_net(cfg, variant, seed)
            prof = sensitivity_profile(net0, probe, pspec, cfg.distance)
            ntv = smoothness_profile(net0)
            col.add("init", seed, prof.labels, prof.scores)
            col.add("ntv-init", seed, ntv.labels, ntv.values)
            for arm, train_ds in (("true", train_true), ("random", train_rand)):
                # both arms share the init and the data order; only labels differ
                net = net0.copy()
                _train(cfg, net, train_ds, seed)
                accs.setdefault(arm, {})[str(seed)] = {
                    "train": evaluate(net, train_ds),
                    "test": evaluate(net, eval_ds),
                }
                prof = sensitivity_profile(net, probe, pspec, cfg.distance)
                ntv = smoothness_profile(net)
                col.add(f"{arm}-trained", seed, prof.labels, prof.scores)
                col.add(f"{arm}-ntv-trained", seed, ntv.labels, ntv.values)
        except Exception as exc:  # noqa: BLE001
            col.fail(seed, exc)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Executes every seed, writes CSVs and manifest, returns the manifest."""
    started = time.monotonic()
    col = _Collector(cfg)
    if cfg.kind == "init-sensitivity":
        _run_init_sensitivity(cfg, col)
    elif cfg.kind == "train-then-probe":
        _run_train_then_probe(cfg, col)
    elif cfg.kind == "smooth-init-sweep":
        _run_smooth_init_sweep(cfg, col, cfg.sigmas)
    elif cfg.kind == "synthetic-sweep":
        _run_synthetic_sweep(cfg, col)
    elif cfg.kind == "random-labels":
        _run_random_labels(cfg, col)
    else:  # config_from_dict rejects this earlier
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}")
    return col.finish(started)


def sweep_smooth_init(cfg: ExperimentConfig, sigmas=None) -> dict:
    """Smoothed-initialization sweep; ``sigmas`` overrides the config list."""
    sig = tuple(float(s) for s in sigmas) if sigmas is not None else cfg.sigmas
    if not sig:
        raise ConfigError("sweep_smooth_init needs a non-empty sigmas list")
    if any(s < 0 for s in sig):
        raise ConfigError("sigmas must be nonnegative")
    if sigmas is not None:
        cfg = replace(cfg, sigmas=sig, kind="smooth-init-sweep")
    started = time.monotonic()
    col = _Collector(cfg)
    _run_smooth_init_sweep(cfg, col, sig)
    return col.finish(started)


def load_manifest(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest {path} is not valid JSON: {exc}") from None
    manifest["manifest_path"] = str(path)
    return manifest
