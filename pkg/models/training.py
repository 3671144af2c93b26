"""
Training loop: seeded mini-batches, AdamW, reduce-on-plateau, early stopping
with best-epoch restore.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from engine import ComputeGraph, OptState, PlateauState, adamw_step, backward, plateau_step
from models.hyperparams import HyperParams
from models.registry import build_model, validate_model_kind
from utils.data_processing import SplitSpec, class_weights
from utils.errors import ConfigError, DataError, NumericalError, SchemaMismatchError, ShapeError
from utils.reporting import HISTORY_COLUMNS
from utils.resampling import ResampleParams
from utils.seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

MIN_DELTA = 1e-8


@dataclass(frozen=True)
class RunSpec:
    model_kind: str
    hyperparams: HyperParams
    split: SplitSpec = field(default_factory=SplitSpec)
    resample: ResampleParams = field(default_factory=ResampleParams)
    patience: int = 10
    seed: int = 0
    use_class_weights: bool = True
    dtype: str = 'float64'

    def __post_init__(self):
        is_valid, error = validate_model_kind(self.model_kind)
        if not is_valid:
            raise ConfigError(error)
        if self.patience < 1:
            raise ConfigError(f"Early-stop patience must be positive, got {self.patience}")
        if self.hyperparams.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.hyperparams.epochs}")

    def with_hyperparams(self, **changes):
        return replace(self, hyperparams=self.hyperparams.with_updates(**changes))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainHistory:
    """Per-epoch curves plus where training stopped and which epoch was kept"""
    records: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @property
    def best_val_loss(self):
        return min(self.column('val_loss')) if self.records else float('inf')

    @property
    def best_record(self):
        for record in self.records:
            if record.epoch == self.best_epoch:
                return record
        return None

    def to_rows(self):
        return [[getattr(r, name) for name in HISTORY_COLUMNS] for r in self.records]

    def to_dict(self):
        return {
            'best_epoch': self.best_epoch,
            'stopped_early': self.stopped_early,
            'epochs_run': len(self.records),
            'records': [dict(zip(HISTORY_COLUMNS, row)) for row in self.to_rows()],
        }


def epoch_batches(n_rows, batch_size, rng):
    """Shuffled row indices cut into batches; the last partial batch is kept"""
    order = rng.permutation(n_rows)
    return [order[start:start + batch_size] for start in range(0, n_rows, batch_size)]


def _loss_graph(model, data, labels, weights, mode, rng=None):
    graph = ComputeGraph()
    logits = model.forward(graph, graph.constant(data), mode=mode, rng=rng)
    loss = graph.apply('weighted-cross-entropy', [logits], labels=labels, weights=weights)
    return graph, logits, loss


def evaluate_loss(model, matrix, weights=None):
    """Eval-mode (loss, accuracy) on an EncodedMatrix; accuracy is a fraction"""
    data = model.check_input(matrix.data)
    _, logits, loss = _loss_graph(model, data, matrix.labels, weights, mode='eval')
    accuracy = float(np.mean(np.argmax(logits.data, axis=1) == matrix.labels))
    return float(loss.data), accuracy


def _check_splits(train, val, hyperparams):
    if train.n_rows == 0 or val.n_rows == 0:
        raise DataError(f"Training needs non-empty splits, got {train.n_rows} train / {val.n_rows} val rows")
    if train.column_map != val.column_map:
        raise SchemaMismatchError("schema mismatch: train and validation column maps differ")
    if train.n_columns != hyperparams.input_dim:
        raise ShapeError(f"input_dim {hyperparams.input_dim} does not match {train.n_columns} encoded columns")


def train_model(spec, train, val, weights=None):
    """
    Train one model.
    Returns (model restored to its best validation epoch, TrainHistory)
    """
    hp = spec.hyperparams
    _check_splits(train, val, hp)
    if weights is None and spec.use_class_weights:
        weights = class_weights(train.labels)
    if weights is not None:
        weights = np.asarray(weights, dtype=spec.dtype)

    model = build_model(spec.model_kind, hp, train.column_map, seed=derive_seed(spec.seed, 'init'), dtype=spec.dtype)
    x_train = model.check_input(train.data)
    opt = OptState(lr=hp.lr, weight_decay=hp.weight_decay)
    plateau = PlateauState(patience=hp.plateau_patience, factor=hp.plateau_factor, min_lr=hp.min_lr)
    history = TrainHistory()
    best_loss = np.inf
    best_state = model.state_dict()
    since_improve = 0

    logger.info("Training %s: %d train / %d val rows, %d parameters, up to %d epochs",
                spec.model_kind, train.n_rows, val.n_rows, model.parameter_count(), hp.epochs)
    for epoch in range(1, hp.epochs + 1):
        rng = make_rng(spec.seed, 'epoch', epoch)
        loss_sum = 0.0
        correct = 0
        for batch in epoch_batches(train.n_rows, hp.batch_size, rng):
            labels = train.labels[batch]
            graph, logits, loss = _loss_graph(model, x_train[batch], labels, weights, mode='train', rng=rng)
            if not np.isfinite(loss.data):
                raise NumericalError(f"Non-finite training loss at epoch {epoch} ({spec.model_kind}, lr={opt.lr:g})")
            grads = backward(graph, loss)
            params = {name: p.data for name, p in model.params.items()}
            updated, opt = adamw_step(params, grads, opt)
            for name, value in updated.items():
                model.params[name].data = value
            loss_sum += float(loss.data) * batch.size
            correct += int(np.sum(np.argmax(logits.data, axis=1) == labels))

        val_loss, val_acc = evaluate_loss(model, val, weights)
        if not np.isfinite(val_loss):
            raise NumericalError(f"Non-finite validation loss at epoch {epoch} ({spec.model_kind})")
        history.records.append(EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / train.n_rows,
            train_acc=correct / train.n_rows,
            val_loss=val_loss,
            val_acc=val_acc,
            lr=opt.lr,
        ))
        logger.debug("%s epoch %d: train_loss=%.4f val_loss=%.4f val_acc=%.3f lr=%g",
                     spec.model_kind, epoch, loss_sum / train.n_rows, val_loss, val_acc, opt.lr)

        new_lr, plateau = plateau_step(plateau, val_loss, opt.lr)
        if new_lr != opt.lr:
            logger.info("%s epoch %d: plateau, lr %g -> %g", spec.model_kind, epoch, opt.lr, new_lr)
            opt = replace(opt, lr=new_lr)

        if val_loss < best_loss - MIN_DELTA:
            best_loss = val_loss
            best_state = model.state_dict()
            history.best_epoch = epoch
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= spec.patience:
                history.stopped_early = epoch < hp.epochs
                logger.info("%s: early stop at epoch %d (best epoch %d)", spec.model_kind, epoch, history.best_epoch)
                break

    model.load_state_dict(best_state)
    logger.info("Training %s done: %d epochs, best val loss %.4f at epoch %d",
                spec.model_kind, len(history), best_loss, history.best_epoch)
    return model, history


def history_from_dict(data):
    """Rebuild a TrainHistory from its to_dict form"""
    records = [EpochRecord(**{name: row[name] for name in HISTORY_COLUMNS}) for row in data.get('records', [])]
    return TrainHistory(records=records, best_epoch=data.get('best_epoch', 0),
                        stopped_early=data.get('stopped_early', False))
