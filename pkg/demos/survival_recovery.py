"""Fit the hazard network on a censored two-segment market and compare it with
Kaplan-Meier and a uniform guess.

The market has two kinds of request. One always clears at 10, the other at 50,
and the first feature id tells them apart. A model that reads the features can
drive its loss towards zero. Kaplan-Meier ignores features, so the best it can
do is split its mass between the two prices.

    python demos/survival_recovery.py
"""
import numpy as np

from mfbid.data import Segment, SyntheticMarketSpec, censor_requests, generate_synthetic
from mfbid.survival import ConstantMarketModel, OpponentTrainConfig, PriceSpace, anlp, kaplan_meier, train_opponent

B_MAX = 300

spec = SyntheticMarketSpec(12_000, B_MAX, [Segment({10: 1.0}, 0.1), Segment({50: 1.0}, 0.1)], seed=0)
requests, _ = generate_synthetic(spec)
samples = censor_requests(requests, 0.3, B_MAX, np.random.default_rng(0))
train, held_out = samples[:10_000], [s for s in samples[10_000:] if not s.censored]

print(f"train {len(train)} samples, {sum(s.censored for s in train)} censored")
print(f"conditional entropy of the truth: {spec.conditional_entropy():.4f} nats")

model = train_opponent(train, OpponentTrainConfig(b_max=B_MAX, num_features=spec.num_features, epochs=4))
km = ConstantMarketModel(kaplan_meier(train, PriceSpace(B_MAX)))
for name, m in [("hazard network", model), ("kaplan-meier", km), ("uniform", ConstantMarketModel.uniform(B_MAX))]:
    print(f"{name:>15}: ANLP {anlp(m, held_out):.4f}")
