"""Encode categorical item properties into fixed-width feature vectors.

Signed hashing keeps the encoding stateless: no vocabulary to store, new
property values map to buckets on the fly, and the random signs make
collisions cancel in expectation.
"""

import numpy as np

from hbayes import hash_features

WIDTH = 50

item_a = [("color", "black"), ("size", "M"), ("material", "cotton")]
item_b = [("color", "red"), ("size", "M"), ("material", "linen")]

va = hash_features(item_a, WIDTH)
vb = hash_features(item_b, WIDTH)
print(f"vector width {WIDTH}, non-zeros: item_a={np.count_nonzero(va)}, "
      f"item_b={np.count_nonzero(vb)}")
print(f"shared 'size=M' token makes them overlap: dot = {va @ vb:.0f}")

# order of tokens does not matter
assert np.array_equal(hash_features(list(reversed(item_a)), WIDTH), va)

# bucket loads stay near-uniform over many distinct values
counts = np.zeros(WIDTH)
for i in range(10_000):
    counts[np.nonzero(hash_features([("sku", str(i))], WIDTH))[0][0]] += 1
print(f"bucket load over 10k distinct tokens: min {counts.min():.0f}, "
      f"max {counts.max():.0f} (uniform would be {10_000 / WIDTH:.0f})")
