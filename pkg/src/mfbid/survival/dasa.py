"""Attention-based hazard network for impression-level market-price estimation.

Each active feature id becomes one token (embedding + projection), a single
self-attention encoder stack mixes the tokens, mean pooling summarizes the
request and a dense head emits one sigmoid hazard per price bucket.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from mfbid.errors import ConfigurationError, DegenerateBatchError, TrainingError
from mfbid.nn import autodiff as ad
from mfbid.nn.autodiff import Tensor
from mfbid.nn.checkpoint import load_params, save_params
from mfbid.nn.layers import attention_block, dense, init_attention, init_dense
from mfbid.nn.optim import Adam, OptimizerConfig
from mfbid.nn.params import ParamSet
from mfbid.survival.distribution import (
    HAZARD_CEIL,
    HAZARD_FLOOR,
    MarketDistribution,
    pdf_from_hazards,
)
from mfbid.survival.samples import SurvivalSample, feature_matrix, validate

log = logging.getLogger(__name__)


@dataclass
class OpponentTrainConfig:
    b_max: int = 300
    num_features: int = 4096
    alpha: float = 0.25
    embedding_dim: int = 32
    model_width: int = 32
    ff_width: int = 64
    epochs: int = 10
    batch_size: int = 128
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(learning_rate=3e-3, decay_factor=0.95))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("b_max", "num_features", "embedding_dim", "model_width", "ff_width",
                     "batch_size"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if isinstance(self.optimizer, dict):
            self.optimizer = OptimizerConfig(**self.optimizer)


class DasaModel:
    def __init__(self, config: OpponentTrainConfig, params: ParamSet | None = None):
        self.config = config
        if params is None:
            params = ParamSet()
            rng = np.random.default_rng(config.seed)
            e, d = config.embedding_dim, config.model_width
            params.add("emb.E", rng.uniform(-0.1, 0.1, size=(config.num_features, e)))
            init_dense(params, "proj", e, d, rng)
            init_attention(params, "att", d, config.ff_width, rng)
            init_dense(params, "head.l0", d, d, rng)
            init_dense(params, "head.l1", d, config.b_max, rng)
        self.params = params
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    @property
    def b_max(self) -> int:
        return self.config.b_max

    def _ids(self, ids) -> np.ndarray:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        # hash trick: ids beyond the table share rows
        return ids % self.config.num_features

    def hazard_tensor(self, ids) -> Tensor:
        """Clipped hazards, shape (batch, b_max), recorded on the tape."""
        p = self.params
        tokens = dense(ad.take_rows(p["emb.E"], self._ids(ids)), p, "proj")
        encoded = attention_block(tokens, p, "att")
        pooled = ad.mean(encoded, axis=1)
        logits = dense(dense(pooled, p, "head.l0", "relu"), p, "head.l1")
        if not np.all(np.isfinite(logits.data)):
            raise TrainingError("non-finite hazard logits in head.l1")
        return ad.clip(ad.sigmoid(logits), HAZARD_FLOOR, HAZARD_CEIL)

    def predict_hazards(self, ids) -> np.ndarray:
        with ad.no_grad():
            return self.hazard_tensor(ids).data

    def predict(self, features: Sequence[int]) -> MarketDistribution:
        return MarketDistribution.from_hazards(self.predict_hazards([features])[0])

    def pdf(self, features: Sequence[int]) -> np.ndarray:
        """Memoized per-request pdf over buckets 1..b_max (the model is frozen once trained)."""
        key = tuple(features)
        out = self._cache.get(key)
        if out is None:
            out = pdf_from_hazards(self.predict_hazards([key])[0])[0]
            self._cache[key] = out
        return out

    def pdf_batch(self, feature_rows: Sequence[Sequence[int]], chunk: int = 2048) -> np.ndarray:
        missing = list({tuple(f) for f in feature_rows} - self._cache.keys())
        for start in range(0, len(missing), chunk):
            block = missing[start:start + chunk]
            pdfs, _ = pdf_from_hazards(self.predict_hazards(block))
            self._cache.update(zip(block, pdfs))
        return np.array([self._cache[tuple(f)] for f in feature_rows])

    def save(self, path) -> None:
        save_params(path, self.params, {"kind": "dasa", "config": _config_dict(self.config)})

    @classmethod
    def load(cls, path) -> "DasaModel":
        params, meta = load_params(path)
        if meta.get("kind") != "dasa":
            raise ConfigurationError(f"{path} is not a DASA checkpoint")
        return cls(OpponentTrainConfig(**meta["config"]), params)


def _config_dict(config: OpponentTrainConfig) -> dict:
    return asdict(config)


@dataclass
class SurvivalBatch:
    ids: np.ndarray
    prices: np.ndarray
    censored: np.ndarray
    win_bounds: np.ndarray  # 0 where no winning-bid term applies

    @classmethod
    def from_samples(cls, samples: Sequence[SurvivalSample], b_max: int) -> "SurvivalBatch":
        return cls(
            feature_matrix(samples),
            np.array([s.observed_price for s in samples], dtype=np.int64),
            np.array([s.censored for s in samples], dtype=bool),
            np.array([s.win_bound(b_max) or 0 for s in samples], dtype=np.int64),
        )

    def take(self, idx: np.ndarray) -> "SurvivalBatch":
        return SurvivalBatch(self.ids[idx], self.prices[idx], self.censored[idx],
                             self.win_bounds[idx])


def survival_loss(hazards: Tensor, batch: SurvivalBatch, alpha: float) -> Tensor:
    """alpha * mean L_z + (1 - alpha) * (mean L_censored + mean L_win), on the tape."""
    n = hazards.shape[0]
    uncens = ~batch.censored
    has_win = batch.win_bounds > 0
    n_u, n_c, n_w = int(uncens.sum()), int(batch.censored.sum()), int(has_win.sum())
    if alpha == 1.0 and n_u == 0:
        raise DegenerateBatchError("alpha = 1 with no uncensored samples in the batch")
    if n_u == 0 and n_c == 0:
        raise DegenerateBatchError("empty survival batch")

    log_surv = ad.cumsum(ad.log(1.0 - hazards), axis=-1)
    # column a-1 holds log S(a) = sum_{j<a} log(1 - h_j), a in 1..b_max+1
    log_s = ad.concat([np.zeros((n, 1)), log_surv], axis=-1)
    total = Tensor(0.0)

    if n_u and alpha > 0.0:
        z_idx = np.where(uncens, batch.prices - 1, 0)
        l_z = -(ad.gather_last(ad.log(hazards), z_idx) + ad.gather_last(log_s, z_idx))
        total = total + alpha * ad.sum(l_z * (uncens / n_u))
    if alpha < 1.0:
        if n_c:
            c_idx = np.where(batch.censored, batch.prices - 1, 0)
            l_c = -ad.gather_last(log_s, c_idx)
            total = total + (1.0 - alpha) * ad.sum(l_c * (batch.censored / n_c))
        if n_w:
            w_idx = np.where(has_win, batch.win_bounds - 1, 1)
            win = ad.clip(-ad.expm1(ad.gather_last(log_s, w_idx)), HAZARD_FLOOR, 1.0)
            l_w = -ad.log(win)
            total = total + (1.0 - alpha) * ad.sum(l_w * (has_win / n_w))
    return total


def loss_total(samples: Sequence[SurvivalSample], model: DasaModel,
               alpha: float | None = None) -> Tensor:
    if not samples:
        raise DegenerateBatchError("empty survival batch")
    batch = SurvivalBatch.from_samples(samples, model.b_max)
    a = model.config.alpha if alpha is None else alpha
    return survival_loss(model.hazard_tensor(batch.ids), batch, a)


def train_opponent(samples: Sequence[SurvivalSample], config: OpponentTrainConfig,
                   model: DasaModel | None = None) -> DasaModel:
    """Minibatch Adam on the composite survival loss; returns the trained model."""
    if not any(not s.censored for s in samples):
        raise ConfigurationError("training data needs at least one uncensored sample")
    validate(samples, config.b_max)
    model = model or DasaModel(config)
    data = SurvivalBatch.from_samples(samples, config.b_max)
    opt = Adam(model.params, config.optimizer)
    rng = np.random.default_rng([config.seed, 1])
    n = len(samples)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running, batches = 0.0, 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = data.take(order[start:start + config.batch_size])
            if config.alpha == 1.0 and batch.censored.all():
                continue
            loss = survival_loss(model.hazard_tensor(batch.ids), batch, config.alpha)
            if not np.isfinite(loss.item()):
                raise TrainingError(f"opponent model diverged at epoch {epoch} batch {b}")
            ad.backward(loss)
            opt.step()
            running += loss.item()
            batches += 1
        opt.decay()
        log.info("opponent epoch %d loss %.5f", epoch, running / max(batches, 1))
    model._cache.clear()
    return model
