"""Place recognition PR curves, ATE alignment, shadow scores and mask collapse.

Run: python3 demos/evaluation_metrics.py
"""
import numpy as np

from featloss.masks import ClassScoreMap, collapse_dynamic
from featloss.metrics import Trajectory, ate_rmse, pr_curve, shadow_mask, shadow_scores

rng = np.random.default_rng(0)

# %% a loop: 200 frames around a 60 m circle, revisited once
t = np.linspace(0, 4 * np.pi, 200)
pos = np.column_stack([30 * np.cos(t), 30 * np.sin(t), np.zeros_like(t)])
dist = np.linalg.norm(pos[:, None] - pos[None], axis=2)
scores = np.exp(-dist / 15) + rng.normal(0, 0.05, dist.shape)
curve = pr_curve(scores, pos, radius=10.0, thresholds=[0.9, 0.7, 0.5, 0.3])
for thr, p, r in zip(curve.thresholds, curve.precision, curve.recall):
    print(f"threshold {thr:.1f}: precision {p:.3f} recall {r:.3f}")

# %% ATE: a monocular estimate at twice the scale
gt = Trajectory(np.arange(50) * 0.1, pos[:50])
est = Trajectory(gt.stamps + 0.004, 2.0 * pos[:50] + rng.normal(0, 0.05, (50, 3)))
print(f"\nATE rigid {ate_rmse(gt, est, 'rigid'):.3f} m, similarity {ate_rmse(gt, est, 'similarity'):.3f} m")

# %% shadows: difference between dynamic and static scene outside the object
stat = np.full((1, 32, 32), 0.6)
dyn = stat.copy()
obj = np.zeros((32, 32), bool)
obj[8:16, 8:16] = True
dyn[0][obj] = 0.1
dyn[0, 16:20, 8:16] = 0.45  # cast shadow
gt_mask = shadow_mask(dyn, stat, obj)
inpainted = stat.copy()
inpainted[0, 16:18, 8:16] = 0.45  # half the shadow left behind
print("\nshadow scores:", shadow_scores(shadow_mask(dyn, inpainted, obj), gt_mask).as_dict())

# %% mask collapse: 5 classes, the first two dynamic
scores = rng.normal(size=(5, 4, 6))
scores[0, :, :3] += 8.0
scores[3, :, 3:] += 8.0
soft, mask = collapse_dynamic(ClassScoreMap(scores, [True, True, False, False, False]))
print("\ncollapsed dynamic mask:\n", mask.values.astype(int))
