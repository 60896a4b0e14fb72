"""Small-gain design walkthrough on the GTM aircraft model.

The loop of a plant with finite L2 gain gamma_G and a controller whose
layer norms multiply to sigma_bar is stable whenever sigma_bar * gamma_G < 1.
This script computes gamma_G, derives the largest uniform per-layer norm that
passes the test for a 3-layer network, and shows the certificate flipping as
the norms cross the boundary.

Run: python demos/gtm_small_gain.py
"""

import numpy as np

from snctrl import (
    check_small_gain,
    l2_gain,
    make_gtm,
    max_uniform_delta,
    normalize,
    MlpPolicy,
)

env = make_gtm()

# 1) The plant's worst-case energy amplification.
gain = l2_gain(env.plant, tol=1e-4)
print(f"GTM L2 gain: {gain.gain:.4f} "
      f"(peak at {gain.peak_frequency:.4f} rad/sample)")

# 2) Invert the small-gain condition for a 2x32 tanh network (3 layers).
delta = max_uniform_delta(env.plant, n_layers=3, margin=0.01)
print(f"largest uniform per-layer norm with 1% margin: {delta:.5f}")

# 3) Build a random controller at that norm and certify it a priori.
rng = np.random.default_rng(0)
weights = [rng.normal(size=(32, 4)), rng.normal(size=(32, 32)),
           rng.normal(size=(1, 32))]


def policy_at(d):
    return normalize(MlpPolicy(weights=tuple(weights), deltas=(d,) * 3,
                               mode="pre"))


for d in (delta, 0.31, 0.33):
    report = check_small_gain(env.plant, policy_at(d))
    verdict = "certified" if report.certified else "NOT certified"
    print(f"delta = {d:.5f}: sigma_bar = {report.sigma_bar_pi:.6f}, "
          f"product = {report.product:.4f} -> {verdict}")

# 4) The pendulum has no finite gain, so this route is unavailable there.
from snctrl import make_pendulum

pend = make_pendulum()
print(f"\npendulum spectral radius: "
      f"{np.max(np.abs(np.linalg.eigvals(pend.plant.A))):.4f} "
      f"-> L2 gain {l2_gain(pend.plant).kind}")
print("the a-posteriori LMI certificate (demos/pendulum_post_run.py) "
      "covers that case")
