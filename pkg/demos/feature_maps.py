"""Walk through the three ORB feature maps on a synthetic white square.

Run: python3 demos/feature_maps.py
"""
import numpy as np

from featloss.orb import OrbLossConfig, angle_map, descriptor_maps, detect_map, feature_maps

cfg = OrbLossConfig()

img = np.zeros((64, 64))
img[18:44, 18:44] = 1.0

# %% detection: one probability per stride-5 grid cell (margin 3 here, so cells
# sit on pixels 3, 8, ..., 58 and land exactly on the square's corners)
det = detect_map(img[None], cfg)[0]
print("detection map (# > 0.5):")
for row in det:
    print("  " + "".join("#" if v > 0.5 else "." for v in row))
# edges fire as well as corners: a straight edge still leaves 7 of the 12 arc
# pixels darker than the centre, and the squared response clears t easily

# %% orientation: intensity centroid of a radius-14 disc around each cell
maps = feature_maps(img[None], cfg)
theta = angle_map(maps.ori)[0]
print("\nshared grid for loss computation:", maps.det.shape[1:], "cells, margin", maps.margin)
print("centroid angles (degrees):")
print(np.round(np.degrees(theta)).astype(int))

# %% descriptor: 256 soft binary tests per cell on the box-smoothed image
desc = descriptor_maps(img[None], cfg)
bits = (desc[:, 1, 1] > 0.5).astype(int)
print("\nfirst 32 descriptor bits at cell (1, 1):", "".join(map(str, bits[:32])))
flat = np.full((1, 64, 64), 0.5)
print("constant image gives exactly 0.5 everywhere:", bool(np.all(descriptor_maps(flat, cfg) == 0.5)))
