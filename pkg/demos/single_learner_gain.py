"""One learner against two noisy linear bidders, with and without an opponent model.

Runs the whole pipeline for a single seed. First a plain DDPG learner plays and
every bid is logged. Then the learner's view of that log trains a market-price
model. Finally two fresh learners replay the market, one plain and one that
uses the model inside its critic.

    python demos/single_learner_gain.py [seed] [epochs]
"""
import sys

import numpy as np

from mfbid.experiments import single_agent_gain

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 100

r = single_agent_gain(seed, epochs=epochs)
print(f"budget per epoch: {r.budget}")
print(f"clicks over {epochs} epochs: plain {r.plain_clicks}, with model {r.om_clicks}")
print(f"clicks on held-out requests: plain {r.plain_test_clicks}, with model {r.om_test_clicks}")

step = max(epochs // 10, 1)
for name, series in [("plain", r.plain_series), ("model", r.om_series)]:
    clicks = np.array([int(m.clicks[0]) for m in series])
    blocks = [int(clicks[i:i + step].sum()) for i in range(0, len(clicks), step)]
    print(f"{name:>6} clicks per {step} epochs: {blocks}")
