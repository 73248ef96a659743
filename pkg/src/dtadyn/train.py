"""Training loop, Adam, cross-validation, and the ablation/sweep harnesses.

Every run is seeded and bit-reproducible: parameter init, epoch shuffles,
and dropout all draw from one generator derived from TrainConfig.seed.
Normalization statistics are always fitted on the training records of the
fold at hand, never on held-out data.
"""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics
from .autodiff import Tape, Tensor, backward
from .data import AffinityRecord, FoldSplit, kfold_split
from .model import (
    ConfigError,
    ModelConfig,
    ModelParams,
    batch_loss,
    forward,
    init_params,
)
from .protein import (
    NormalizationStats,
    ProteinInput,
    encode_sequence,
    fit_normalization,
    normalize,
)
from .smiles import MolecularGraph, smiles_to_graph


class MissingGradient(ValueError):
    pass


class InvalidValue(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 512
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    patience: int | None = None  # early stop on validation rmse; off by default

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        # 0 is allowed as a diagnostic (frozen-parameter) setting
        if not 0 <= self.learning_rate < 1:
            raise ValueError("learning_rate must be in [0, 1)")


class AdamState:
    """First/second moments and step count for every parameter."""

    def __init__(self, params: ModelParams):
        self.m = {k: np.zeros_like(t.array) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.array) for k, t in params.items()}
        self.t = 0


def adam_step(params: ModelParams, state: AdamState, config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place; clears gradients after."""
    for name, tensor in params.items():
        if tensor.grad is None:
            raise MissingGradient(f"parameter {name!r} has no gradient")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, tensor in params.items():
        g = tensor.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        tensor.array -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        tensor.grad = None


# ---------------------------------------------------------------------------
# input assembly


def build_inputs(
    records: list[AffinityRecord],
    stats: NormalizationStats,
    config: ModelConfig,
    graph_cache: dict[str, MolecularGraph] | None = None,
) -> tuple[list[tuple[MolecularGraph, ProteinInput]], np.ndarray]:
    """Turn prepared records into model inputs plus the target vector.

    Graphs are memoized per SMILES string; descriptors are normalized with
    the supplied (training-fold) stats, clamping out-of-range values.
    """
    cache = graph_cache if graph_cache is not None else {}
    inputs = []
    targets = np.empty(len(records))
    for i, rec in enumerate(records):
        if rec.smiles not in cache:
            cache[rec.smiles] = smiles_to_graph(rec.smiles)
        ids = encode_sequence(rec.protein_sequence, max_len=config.max_seq_len)
        pin = ProteinInput(
            sequence_ids=ids,
            raw_length=len(rec.protein_sequence),
            descriptors=normalize(rec.descriptors, stats),
        )
        inputs.append((cache[rec.smiles], pin))
        targets[i] = rec.affinity
    return inputs, targets


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    params: ModelParams
    stats: NormalizationStats
    loss_curve: list[float]
    val_curve: list[float] = field(default_factory=list)


def train(
    train_records: list[AffinityRecord],
    model_config: ModelConfig,
    train_config: TrainConfig,
    val_records: list[AffinityRecord] | None = None,
    graph_cache: dict[str, MolecularGraph] | None = None,
) -> TrainResult:
    """Minibatch MSE training with Adam; deterministic for a fixed seed.

    Normalization stats come from train_records only.  The last incomplete
    minibatch is kept.  Early stopping (restoring the best-validation
    parameters) happens only when both val_records and patience are set;
    otherwise the final-epoch model is returned.
    """
    rng = np.random.default_rng(train_config.seed)
    stats = fit_normalization([r.descriptors for r in train_records])
    inputs, targets = build_inputs(train_records, stats, model_config, graph_cache)
    val_pack = None
    if val_records is not None:
        val_pack = build_inputs(val_records, stats, model_config, graph_cache)

    params = init_params(model_config, rng)
    state = AdamState(params)
    n = len(inputs)
    loss_curve: list[float] = []
    val_curve: list[float] = []
    best_val = float("inf")
    best_params: ModelParams | None = None
    since_best = 0

    for _ in range(train_config.epochs):
        order = rng.permutation(n)
        epoch_sse = 0.0
        for start in range(0, n, train_config.batch_size):
            chunk = order[start : start + train_config.batch_size]
            batch = [inputs[i] for i in chunk]
            with Tape():
                loss = batch_loss(batch, targets[chunk], params, model_config,
                                  mode="train", rng=rng)
                backward(loss)
            epoch_sse += loss.item() * len(chunk)
            adam_step(params, state, train_config)
        loss_curve.append(epoch_sse / n)

        if val_pack is not None:
            val_inputs, val_targets = val_pack
            preds = predict(val_inputs, params, model_config)
            val_rmse = metrics.rmse(val_targets, preds)
            val_curve.append(val_rmse)
            if train_config.patience is not None:
                if val_rmse < best_val:
                    best_val = val_rmse
                    best_params = {k: Tensor(t.array.copy(), requires_grad=True)
                                   for k, t in params.items()}
                    since_best = 0
                else:
                    since_best += 1
                    if since_best > train_config.patience:
                        break

    if best_params is not None:
        params = best_params
    return TrainResult(params=params, stats=stats, loss_curve=loss_curve,
                       val_curve=val_curve)


def predict(inputs, params: ModelParams, config: ModelConfig,
            chunk_size: int = 256) -> np.ndarray:
    """Evaluation-mode predictions, chunked to bound peak memory."""
    out = []
    for start in range(0, len(inputs), chunk_size):
        preds, _ = forward(inputs[start : start + chunk_size], params, config,
                           mode="eval")
        out.append(preds.array)
    return np.concatenate(out) if out else np.empty(0)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldResult:
    fold: int
    rmse: float
    pearson: float
    y: np.ndarray
    y_hat: np.ndarray
    stats: NormalizationStats


@dataclass
class EvalReport:
    folds: list[FoldResult]
    rmse_mean: float
    rmse_std: float
    r_mean: float
    r_std: float


def _summarize_folds(folds: list[FoldResult]) -> EvalReport:
    rmses = [f.rmse for f in folds]
    rs = [f.pearson for f in folds]
    if len(folds) > 1:
        rmse_std = statistics.stdev(rmses)  # sample std over folds
        r_std = statistics.stdev(rs)
    else:
        rmse_std = r_std = 0.0
    return EvalReport(
        folds=folds,
        rmse_mean=statistics.fmean(rmses),
        rmse_std=rmse_std,
        r_mean=statistics.fmean(rs),
        r_std=r_std,
    )


def _run_fold(args) -> tuple[FoldResult, ModelParams]:
    records, split, fold, model_config, train_config = args
    train_idx = np.flatnonzero(split.assignments != fold)
    test_idx = split.fold_indices(fold)
    fold_config = replace(train_config, seed=train_config.seed + fold + 1)
    result = train([records[i] for i in train_idx], model_config, fold_config)
    test_inputs, y = build_inputs(
        [records[i] for i in test_idx], result.stats, model_config
    )
    y_hat = predict(test_inputs, result.params, model_config)
    fold_result = FoldResult(
        fold=fold,
        rmse=metrics.rmse(y, y_hat),
        pearson=metrics.pearson(y, y_hat),
        y=y,
        y_hat=y_hat,
        stats=result.stats,
    )
    return fold_result, result.params


def cross_validate(
    records: list[AffinityRecord],
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int = 5,
    split: FoldSplit | None = None,
    workers: int = 1,
    on_fold=None,
) -> EvalReport:
    """Train k models, evaluate each on its held-out fold, report
    per-fold and mean(std) rmse and Pearson r.

    Per-fold normalization stats are fitted on that fold's training portion
    only.  on_fold(fold_result, params) fires after each fold, e.g. to
    write checkpoints.  workers > 1 trains folds in parallel processes;
    results are identical either way because each fold is independently
    seeded.
    """
    if split is None:
        split = kfold_split(len(records), k=k, seed=train_config.seed)
    jobs = [(records, split, fold, model_config, train_config)
            for fold in range(split.k)]
    folds: list[FoldResult] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for fold_result, params in pool.map(_run_fold, jobs):
                folds.append(fold_result)
                if on_fold is not None:
                    on_fold(fold_result, params)
    else:
        for job in jobs:
            fold_result, params = _run_fold(job)
            folds.append(fold_result)
            if on_fold is not None:
                on_fold(fold_result, params)
    folds.sort(key=lambda f: f.fold)
    return _summarize_folds(folds)


# ---------------------------------------------------------------------------
# ablation and sensitivity harnesses


@dataclass(frozen=True)
class AblationSpec:
    """One ablation row: conv variant, descriptor mask, fusion variant."""

    name: str
    conv: str = "dilated"  # "dilated" | "standard"
    descriptor_mask: tuple[bool, bool, bool, bool] = (True, True, True, True)
    fusion: str = "tfn"


def component_ablations() -> list[AblationSpec]:
    """The component-removal table: full model, standard conv, and the
    four descriptor-mask rows (mask order: RMSF, Gyr, SE, MM)."""
    return [
        AblationSpec("full"),
        AblationSpec("w/o Dilated", conv="standard"),
        AblationSpec("w/o RMSF+Gyr", descriptor_mask=(False, False, True, True)),
        AblationSpec("w/o SE+MM", descriptor_mask=(True, True, False, False)),
        AblationSpec("w/o RMSF+Gyr+SE", descriptor_mask=(False, False, False, True)),
        AblationSpec("w/o Gyr+SE+MM", descriptor_mask=(True, False, False, False)),
    ]


def fusion_ablations() -> list[AblationSpec]:
    return [AblationSpec(variant, fusion=variant)
            for variant in ("concat", "sum", "average", "hadamard", "tfn")]


def apply_ablation(config: ModelConfig, spec: AblationSpec) -> ModelConfig:
    if spec.conv not in ("dilated", "standard"):
        raise InvalidValue(f"conv variant {spec.conv!r}")
    return replace(
        config,
        dilation_rate=1 if spec.conv == "standard" else config.dilation_rate,
        descriptor_mask=spec.descriptor_mask,
        fusion_variant=spec.fusion,
    )


def ablate(
    records: list[AffinityRecord],
    model_config: ModelConfig,
    train_config: TrainConfig,
    specs: list[AblationSpec],
    k: int = 5,
    workers: int = 1,
) -> list[tuple[str, EvalReport]]:
    """Cross-validate once per ablation configuration; same folds throughout."""
    split = kfold_split(len(records), k=k, seed=train_config.seed)
    rows = []
    for spec in specs:
        config = apply_ablation(model_config, spec)
        report = cross_validate(records, config, train_config, k=k, split=split,
                                workers=workers)
        rows.append((spec.name, report))
    return rows


SWEEP_GRIDS = {
    "P": (0.1, 0.2, 0.3, 0.4),
    "D": (2, 4, 6, 8),
    "H": (2, 4, 8, 16),
    "L": (1, 3, 5, 7),
}


def sweep_config(config: ModelConfig, parameter: str, value) -> ModelConfig:
    try:
        if parameter == "P":
            return replace(config, dropout_p=float(value))
        if parameter == "D":
            return replace(config, dilation_rate=int(value))
        if parameter == "H":
            return replace(config, attention_heads=int(value))
        if parameter == "L":
            return replace(config, gcn_layers=int(value))
    except (ConfigError, ValueError) as exc:
        raise InvalidValue(f"{parameter}={value!r}: {exc}") from None
    raise InvalidValue(f"sweep parameter must be one of P/D/H/L, got {parameter!r}")


def sweep(
    records: list[AffinityRecord],
    parameter: str,
    values,
    model_config: ModelConfig,
    train_config: TrainConfig,
    k: int = 5,
    workers: int = 1,
) -> list[tuple[float, EvalReport]]:
    """One cross-validation run per value of a single hyperparameter."""
    if values is None:
        if parameter not in SWEEP_GRIDS:
            raise InvalidValue(f"sweep parameter must be one of P/D/H/L, "
                               f"got {parameter!r}")
        values = SWEEP_GRIDS[parameter]
    split = kfold_split(len(records), k=k, seed=train_config.seed)
    rows = []
    for value in values:
        config = sweep_config(model_config, parameter, value)
        report = cross_validate(records, config, train_config, k=k, split=split,
                                workers=workers)
        rows.append((value, report))
    return rows
