"""Three identical learners share one market: how quickly do impression shares settle?

Prints the epoch at which the shares stop moving, with and without opponent
models. It also prints how far the models' price distribution sits from the
observed clearing prices early and late in the run.

    python demos/three_learners.py [seed] [epochs]
"""
import sys

from mfbid.experiments import multi_agent_convergence

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
epochs = int(sys.argv[2]) if len(sys.argv) > 2 else 100

r = multi_agent_convergence(seed, epochs=epochs)
for name, rep in [("plain", r.plain), ("with models", r.om)]:
    shares = " ".join(f"{x:.3f}" for x in rep.final_shares())
    settled = f"settled at epoch {rep.convergence_epoch}" if rep.converged else "never settled"
    print(f"{name:>12}: {settled}, final shares {shares}")
print(f"model vs observed price distribution: first window {r.mfe_first.distance:.3f}, "
      f"last window {r.mfe_final.distance:.3f}")
