"""Experiment harness: seeded training runs, repetition aggregation, the two
network-scaling sweeps, and deterministic CSV output.

Reported training metrics follow the running-average convention: the loss and
accuracies of a "train" record are averaged over the epoch's weight updates
(pixel-weighted), while "test" records come from a full forward pass over the
test split after the epoch. Set ``train_eval="full"`` to evaluate the train
split the same way instead.
"""

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import datagen, nn
from .errors import (
    DataError,
    DimensionError,
    ExperimentError,
    NumericError,
    ParameterError,
)
from .metrics import ConfusionMatrix, MetricRecord, RunningLoss
from .optim import OPTIMIZER_NAMES, OptimConfig, make_optimizer

# A run whose update loss exceeds this (or goes non-finite) is aborted and
# recorded as diverged rather than crashing the experiment.
DIVERGENCE_LIMIT = 1e6

CSV_HEADER = "run_id,optimizer,epoch,phase,loss,overall_acc,mean_class_acc"


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "toy"  # toy | facade | external
    seed: int = 1234
    width: int = 64
    height: int = 64
    count: int = 8  # facade: number of generated images
    train_fraction: float = 0.5  # facade: share of images used for training
    train_dir: str | None = None  # external
    test_dir: str | None = None
    palette: str | None = None  # external: palette JSON path (default: facade palette)

    def __post_init__(self):
        if self.kind not in ("toy", "facade", "external"):
            raise ParameterError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "external" and not self.train_dir:
            raise ParameterError("external dataset needs train_dir")


@dataclass(frozen=True)
class ArchConfig:
    kind: str = "toy"  # toy | facade
    k: int = 2
    l: int = 0

    def __post_init__(self):
        if self.kind not in ("toy", "facade"):
            raise ParameterError(f"unknown architecture kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    arch: ArchConfig = field(default_factory=ArchConfig)
    optimizer: str = "gd"
    optim: OptimConfig = field(default_factory=OptimConfig)
    epochs: int = 10
    iterations_per_epoch: int = 2000
    batch_size: int = 1  # 1 = one update per sampled patch; N > 1 accumulates
    repetitions: int = 20
    base_seed: int = 0
    out: str = "results.csv"
    train_eval: str = "running"  # "running" | "full"

    def __post_init__(self):
        if self.epochs < 1 or self.repetitions < 1 or self.iterations_per_epoch < 1:
            raise ParameterError("epochs, repetitions and iterations_per_epoch must be >= 1")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer not in OPTIMIZER_NAMES:
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.train_eval not in ("running", "full"):
            raise ParameterError(f"train_eval must be 'running' or 'full', got {self.train_eval!r}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    ds, arch, opt = cfg.dataset, cfg.arch, cfg.optim
    return {
        "dataset": {k: v for k, v in vars(ds).items() if v is not None},
        "arch": dict(vars(arch)),
        "optimizer": cfg.optimizer,
        "optim": dict(vars(opt)),
        "epochs": cfg.epochs,
        "iterations_per_epoch": cfg.iterations_per_epoch,
        "batch_mode": "per_sample" if cfg.batch_size == 1 else {"accumulate": cfg.batch_size},
        "repetitions": cfg.repetitions,
        "base_seed": cfg.base_seed,
        "out": cfg.out,
        "train_eval": cfg.train_eval,
    }


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    batch_mode = data.pop("batch_mode", "per_sample")
    if batch_mode == "per_sample":
        batch_size = 1
    elif isinstance(batch_mode, dict) and "accumulate" in batch_mode:
        batch_size = int(batch_mode["accumulate"])
    else:
        raise ParameterError(f"batch_mode must be 'per_sample' or {{'accumulate': N}}")
    kwargs = {
        "dataset": DatasetConfig(**data.pop("dataset", {})),
        "arch": ArchConfig(**data.pop("arch", {})),
        "optim": OptimConfig(**data.pop("optim", {})),
        "batch_size": batch_size,
    }
    kwargs.update(data)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


@dataclass
class DatasetBundle:
    train: list
    test: list
    num_classes: int
    input_channels: int
    background: int | None


def build_dataset(ds: DatasetConfig) -> DatasetBundle:
    if ds.kind == "toy":
        img = datagen.gen_toy(ds.seed, ds.width, ds.height)
        return DatasetBundle([img], [img], datagen.TOY_CLASSES, 1, None)
    if ds.kind == "facade":
        imgs = datagen.gen_facade_like(ds.seed, ds.width, ds.height, ds.count)
        if ds.count == 1:
            train, test = imgs, imgs
        else:
            n_train = min(ds.count - 1, max(1, round(ds.count * ds.train_fraction)))
            train, test = imgs[:n_train], imgs[n_train:]
        return DatasetBundle(train, test, datagen.FACADE_CLASSES, 3, 0)
    palette = (
        datagen.ClassPalette.load(ds.palette) if ds.palette else datagen.FACADE_PALETTE
    )
    train, _ = datagen.load_labeled_dir(ds.train_dir, palette)
    if not train:
        raise DataError(f"no labeled images in {ds.train_dir}")
    test = train
    if ds.test_dir:
        test, _ = datagen.load_labeled_dir(ds.test_dir, palette)
        if not test:
            raise DataError(f"no labeled images in {ds.test_dir}")
    return DatasetBundle(
        train, test, palette.num_classes, train[0].image.shape[0], palette.background
    )


def build_spec(arch: ArchConfig) -> nn.NetworkSpec:
    if arch.kind == "toy":
        return nn.build_toy_net()
    return nn.build_facade_net(arch.k, arch.l)


def one_hot_target(labels: np.ndarray, num_classes: int) -> np.ndarray:
    return (labels[None, :, :] == np.arange(num_classes)[:, None, None]).astype(np.float64)


def center_crop(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    my = (labels.shape[0] - out_h) // 2
    mx = (labels.shape[1] - out_w) // 2
    return labels[my : my + out_h, mx : mx + out_w]


def evaluate(net: nn.Network, images, background: int | None):
    """Full-image evaluation. Returns (per-pixel loss, confusion matrix);
    labels are center-cropped to the network's output size."""
    num_classes = net.spec.num_classes
    cm = ConfusionMatrix(num_classes, background)
    running = RunningLoss()
    for img in images:
        scores, _ = nn.forward(net, img.image)
        out_h, out_w = scores.shape[1], scores.shape[2]
        cropped = center_crop(img.labels, out_h, out_w)
        loss = nn.quadratic_loss(scores, one_hot_target(cropped, num_classes))
        running.add(loss, out_h * out_w)
        cm.accumulate(cropped, scores.argmax(axis=0))
    return running.mean(), cm


@dataclass
class RunResult:
    run_id: int
    seed: int
    records: list
    network: nn.Network
    wall_seconds: float
    diverged: bool
    completed_epochs: int


def run_training(cfg: ExperimentConfig, seed: int, run_id: int = 0) -> RunResult:
    """One seeded training run: per epoch, ``iterations_per_epoch`` updates on
    sampled patches, then a test-split evaluation. Fully deterministic given
    (cfg, seed); a diverging run is cut short and flagged, keeping the records
    of its completed epochs."""
    bundle = build_dataset(cfg.dataset)
    spec = build_spec(cfg.arch)
    if spec.input_channels != bundle.input_channels:
        raise DimensionError(
            f"architecture expects {spec.input_channels} input channels, "
            f"dataset has {bundle.input_channels}"
        )
    if spec.num_classes != bundle.num_classes:
        raise DimensionError(
            f"architecture predicts {spec.num_classes} classes, "
            f"dataset has {bundle.num_classes}"
        )
    patch = nn.min_input_size(spec)
    init_seq, sample_seq = np.random.SeedSequence(seed).spawn(2)
    net = nn.init_network(spec, np.random.default_rng(init_seq))
    optimizer = make_optimizer(cfg.optimizer, cfg.optim, net.num_parameters)
    sample_rng = np.random.default_rng(sample_seq)

    start = time.perf_counter()
    records = []
    diverged = False
    completed = 0
    for epoch in range(1, cfg.epochs + 1):
        train_loss = RunningLoss()
        train_cm = ConfusionMatrix(bundle.num_classes, bundle.background)
        for _ in range(cfg.iterations_per_epoch):
            grad = np.zeros(net.num_parameters)
            batch_bad = False
            for _ in range(cfg.batch_size):
                img = bundle.train[int(sample_rng.integers(len(bundle.train)))]
                x, label = datagen.sample_patch(img, patch, sample_rng)
                scores, cache = nn.forward(net, x)
                target = one_hot_target(
                    center_crop(
                        np.full((patch, patch), label, dtype=np.int64),
                        scores.shape[1],
                        scores.shape[2],
                    ),
                    bundle.num_classes,
                )
                loss = nn.quadratic_loss(scores, target)
                if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
                    batch_bad = True
                    break
                grad += nn.backward(net, cache, target)
                train_loss.add(loss, scores.shape[1] * scores.shape[2])
                train_cm.accumulate([label], [int(scores[:, 0, 0].argmax())])
            if batch_bad:
                diverged = True
                break
            try:
                net.weights = optimizer.update(net.weights, grad / cfg.batch_size)
            except NumericError:
                diverged = True
                break
        if diverged:
            break
        if cfg.train_eval == "running":
            records.append(
                MetricRecord(
                    run_id,
                    cfg.optimizer,
                    epoch,
                    "train",
                    train_loss.mean(),
                    train_cm.overall_accuracy(),
                    train_cm.mean_class_accuracy(),
                )
            )
        else:
            loss, cm = evaluate(net, bundle.train, bundle.background)
            records.append(
                MetricRecord(
                    run_id, cfg.optimizer, epoch, "train",
                    loss, cm.overall_accuracy(), cm.mean_class_accuracy(),
                )
            )
        loss, cm = evaluate(net, bundle.test, bundle.background)
        records.append(
            MetricRecord(
                run_id, cfg.optimizer, epoch, "test",
                loss, cm.overall_accuracy(), cm.mean_class_accuracy(),
            )
        )
        completed = epoch
    return RunResult(
        run_id=run_id,
        seed=seed,
        records=records,
        network=net,
        wall_seconds=time.perf_counter() - start,
        diverged=diverged,
        completed_epochs=completed,
    )


@dataclass
class AggregateRow:
    epoch: int
    phase: str
    loss_mean: float
    loss_std: float
    overall_acc_mean: float
    overall_acc_std: float
    mean_class_acc_mean: float
    mean_class_acc_std: float
    runs: int


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


@dataclass
class RepetitionSummary:
    config: ExperimentConfig
    runs: list
    aggregates: list
    diverged_runs: int

    def final_train_loss_mean(self) -> float:
        rows = [a for a in self.aggregates if a.phase == "train"]
        return rows[-1].loss_mean if rows else float("nan")

    def final_row(self, phase: str) -> AggregateRow:
        rows = [a for a in self.aggregates if a.phase == phase]
        if not rows:
            raise ExperimentError(f"no aggregated {phase} rows")
        return rows[-1]


def run_repetitions(cfg: ExperimentConfig) -> RepetitionSummary:
    """Run ``cfg.repetitions`` seeds (base_seed + r) and aggregate per epoch
    and phase. Diverged runs are excluded from the aggregates but kept in
    ``runs``; if every repetition diverges, an ExperimentError is raised."""
    runs = [run_training(cfg, cfg.base_seed + r, run_id=r) for r in range(cfg.repetitions)]
    survivors = [r for r in runs if not r.diverged]
    if not survivors:
        raise ExperimentError(f"all {cfg.repetitions} repetitions diverged")
    aggregates = []
    for epoch in range(1, cfg.epochs + 1):
        for phase in ("train", "test"):
            cell = [
                rec
                for run in survivors
                for rec in run.records
                if rec.epoch == epoch and rec.phase == phase
            ]
            if not cell:
                continue
            loss = _mean_std([r.loss for r in cell])
            oa = _mean_std([r.overall_acc for r in cell])
            mca = _mean_std([r.mean_class_acc for r in cell])
            aggregates.append(
                AggregateRow(epoch, phase, loss[0], loss[1], oa[0], oa[1], mca[0], mca[1], len(cell))
            )
    return RepetitionSummary(cfg, runs, aggregates, len(runs) - len(survivors))


@dataclass
class SweepCell:
    sweep: str  # "k" or "l"
    value: int
    param_count: int
    optimizer: str
    summary: RepetitionSummary | None
    error: str | None = None


def _run_sweep(base_cfg: ExperimentConfig, sweep: str, values) -> list:
    cells = []
    for value in values:
        if sweep == "k":
            arch = ArchConfig("facade", k=int(value), l=base_cfg.arch.l)
        else:
            arch = ArchConfig("facade", k=base_cfg.arch.k, l=int(value))
        param_count = nn.count_parameters(build_spec(arch))
        for name in ("gd", "quickprop"):
            cfg = replace(base_cfg, arch=arch, optimizer=name)
            try:
                cells.append(SweepCell(sweep, int(value), param_count, name, run_repetitions(cfg)))
            except ExperimentError as exc:
                cells.append(SweepCell(sweep, int(value), param_count, name, None, str(exc)))
    return cells


def experiment_scale_filters(base_cfg: ExperimentConfig, k_list) -> list:
    """Sweep the width scale k for both gd and quickprop. A cell whose runs
    all diverged is recorded with an error and the sweep continues."""
    for k in k_list:
        if k < 1:
            raise ParameterError(f"k values must be >= 1, got {k}")
    return _run_sweep(base_cfg, "k", k_list)


def experiment_scale_layers(base_cfg: ExperimentConfig, l_list) -> list:
    """Sweep the repeated-layer count l for both gd and quickprop."""
    for l in l_list:
        if l < 0:
            raise ParameterError(f"l values must be >= 0, got {l}")
    return _run_sweep(base_cfg, "l", l_list)


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="ascii")


def write_csv(records, path, metadata: dict | None = None) -> None:
    """Write MetricRecords sorted by (run_id, epoch, phase), floats at nine
    significant digits. ``metadata`` entries become '#'-prefixed comment
    lines above the header."""
    lines = []
    if metadata:
        lines.extend(f"# {key}={value}" for key, value in metadata.items())
    lines.append(CSV_HEADER)
    for r in sorted(records, key=lambda r: (r.run_id, r.epoch, r.phase)):
        lines.append(
            f"{r.run_id},{r.optimizer},{r.epoch},{r.phase},"
            f"{_fmt(r.loss)},{_fmt(r.overall_acc)},{_fmt(r.mean_class_acc)}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def read_csv(path) -> list:
    """Parse a file written by :func:`write_csv` back into MetricRecords."""
    records = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == CSV_HEADER:
                continue
            run_id, optimizer, epoch, phase, loss, oa, mca = line.split(",")
            records.append(
                MetricRecord(
                    int(run_id), optimizer, int(epoch), phase,
                    float(loss), float(oa), float(mca),
                )
            )
    return records


def run_metadata(cfg: ExperimentConfig) -> dict:
    """Deterministic run description for CSV comment headers."""
    return {
        "dataset": cfg.dataset.kind,
        "arch": cfg.arch.kind if cfg.arch.kind == "toy" else f"facade(k={cfg.arch.k},l={cfg.arch.l})",
        "optimizer": cfg.optimizer,
        "batch_mode": "per_sample" if cfg.batch_size == 1 else f"accumulate-{cfg.batch_size}",
        "learning_rate": _fmt(cfg.optim.learning_rate),
        "mu": _fmt(cfg.optim.mu),
        "epochs": cfg.epochs,
        "iterations_per_epoch": cfg.iterations_per_epoch,
        "repetitions": cfg.repetitions,
        "base_seed": cfg.base_seed,
        "train_eval": cfg.train_eval,
    }


def write_aggregate_csv(summary: RepetitionSummary, path) -> None:
    lines = [
        "optimizer,epoch,phase,loss_mean,loss_std,overall_acc_mean,overall_acc_std,"
        "mean_class_acc_mean,mean_class_acc_std,runs"
    ]
    name = summary.config.optimizer
    for a in summary.aggregates:
        lines.append(
            f"{name},{a.epoch},{a.phase},{_fmt(a.loss_mean)},{_fmt(a.loss_std)},"
            f"{_fmt(a.overall_acc_mean)},{_fmt(a.overall_acc_std)},"
            f"{_fmt(a.mean_class_acc_mean)},{_fmt(a.mean_class_acc_std)},{a.runs}"
        )
    _write_text(path, "\n".join(lines) + "\n")


SWEEP_HEADER = (
    "sweep,value,param_count,optimizer,epoch,phase,loss_mean,loss_std,"
    "overall_acc_mean,overall_acc_std,mean_class_acc_mean,mean_class_acc_std"
)


def write_sweep_csv(cells, path) -> None:
    """Detailed sweep rows: one per (value, optimizer, epoch, phase)."""
    lines = [SWEEP_HEADER]
    for cell in cells:
        if cell.summary is None:
            continue
        for a in cell.summary.aggregates:
            lines.append(
                f"{cell.sweep},{cell.value},{cell.param_count},{cell.optimizer},"
                f"{a.epoch},{a.phase},{_fmt(a.loss_mean)},{_fmt(a.loss_std)},"
                f"{_fmt(a.overall_acc_mean)},{_fmt(a.overall_acc_std)},"
                f"{_fmt(a.mean_class_acc_mean)},{_fmt(a.mean_class_acc_std)}"
            )
    _write_text(path, "\n".join(lines) + "\n")


def write_sweep_summary_csv(cells, path) -> None:
    """Per swept value: final-epoch train losses of both optimizers and the
    quickprop-minus-gd gap, plus diverged-run counts."""
    by_value: dict[int, dict] = {}
    sweep = cells[0].sweep if cells else "k"
    for cell in cells:
        slot = by_value.setdefault(cell.value, {"param_count": cell.param_count})
        if cell.summary is not None:
            slot[cell.optimizer] = cell.summary.final_train_loss_mean()
            slot[f"{cell.optimizer}_diverged"] = cell.summary.diverged_runs
        else:
            slot[cell.optimizer] = float("nan")
            slot[f"{cell.optimizer}_diverged"] = -1
    lines = [
        "sweep,value,param_count,gd_train_loss,quickprop_train_loss,gap,"
        "gd_diverged,quickprop_diverged"
    ]
    for value in sorted(by_value):
        slot = by_value[value]
        gd = slot.get("gd", float("nan"))
        qp = slot.get("quickprop", float("nan"))
        lines.append(
            f"{sweep},{value},{slot['param_count']},{_fmt(gd)},{_fmt(qp)},{_fmt(qp - gd)},"
            f"{slot.get('gd_diverged', -1)},{slot.get('quickprop_diverged', -1)}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def toy_protocol(optimizer: str = "gd", **overrides) -> ExperimentConfig:
    """Desk-scale version of the single-image protocol: 20 repetitions of 10
    epochs x 2000 iterations."""
    base = dict(
        dataset=DatasetConfig(kind="toy", seed=1234, width=64, height=64),
        arch=ArchConfig(kind="toy"),
        optimizer=optimizer,
        optim=OptimConfig(learning_rate=0.1),
        epochs=10,
        iterations_per_epoch=2000,
        repetitions=20,
        base_seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def facade_protocol(optimizer: str = "gd", **overrides) -> ExperimentConfig:
    """Desk-scale facade-like protocol: 5 repetitions of 10 epochs."""
    base = dict(
        dataset=DatasetConfig(kind="facade", seed=1234, width=48, height=48, count=8),
        arch=ArchConfig(kind="facade", k=2, l=0),
        optimizer=optimizer,
        optim=OptimConfig(learning_rate=0.05),
        epochs=10,
        iterations_per_epoch=500,
        repetitions=5,
        base_seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def sweep_protocol(**overrides) -> ExperimentConfig:
    """Desk-scale scaling-sweep protocol: 2 repetitions of 20 epochs."""
    base = dict(
        dataset=DatasetConfig(kind="facade", seed=1234, width=48, height=48, count=8),
        arch=ArchConfig(kind="facade", k=16, l=0),
        optim=OptimConfig(learning_rate=0.05),
        epochs=20,
        iterations_per_epoch=500,
        repetitions=2,
        base_seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)
