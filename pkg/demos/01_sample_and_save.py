"""Sample a synthetic dataset from the generative story and save it.

The hierarchy is sampled top down (style-prior mean -> styles -> brand
memberships -> brands -> users), then events draw uniform user/brand
pairs, Gaussian item features, and Bernoulli click labels through the
logistic link.
"""

import numpy as np

from hbayes import HyperParams, sample_dataset, save_events
from hbayes.io import save_ground_truth

hp = HyperParams(num_styles=3, feature_dim=10)
precisions = (4.0, 25.0, 2.0, 2.0)  # user, brand, style, w

data, truth = sample_dataset(hp, num_users=20, num_brands=15, num_events=2000,
                             true_precisions=precisions, seed=3)

print(f"events: {len(data)}, users: {data.num_users}, brands: {data.num_brands}, "
      f"dim: {data.feature_dim}")
print(f"overall click rate: {data.y.mean():.3f}")

counts = np.bincount(truth.style_assignments, minlength=hp.num_styles)
print(f"true style proportions: {np.round(truth.theta, 3)}")
print(f"brands per style:       {counts}")

per_brand = np.bincount(data.brands, weights=data.y) / np.bincount(data.brands)
print(f"per-brand click rates range from {per_brand.min():.2f} to {per_brand.max():.2f}")

save_events(data, "events.jsonl")
save_ground_truth(truth, precisions, 1.0, "truth.json")
print("wrote events.jsonl and truth.json")
