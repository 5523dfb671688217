from mfbid.survival.dasa import (
    DasaModel,
    OpponentTrainConfig,
    SurvivalBatch,
    loss_total,
    survival_loss,
    train_opponent,
)
from mfbid.survival.distribution import (
    MarketDistribution,
    PriceSpace,
    loss_censored,
    loss_observed,
    loss_win,
    pdf_from_hazards,
    total_variation,
)
from mfbid.survival.km import kaplan_meier
from mfbid.survival.models import ConstantMarketModel, aggregate_pdf, anlp
from mfbid.survival.samples import SurvivalSample, read_samples, write_samples

__all__ = [
    "ConstantMarketModel",
    "DasaModel",
    "MarketDistribution",
    "OpponentTrainConfig",
    "PriceSpace",
    "SurvivalBatch",
    "SurvivalSample",
    "aggregate_pdf",
    "anlp",
    "kaplan_meier",
    "loss_censored",
    "loss_observed",
    "loss_total",
    "loss_win",
    "pdf_from_hazards",
    "read_samples",
    "survival_loss",
    "total_variation",
    "train_opponent",
    "write_samples",
]
