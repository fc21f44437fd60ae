#!/usr/bin/env python3
"""From a raw land scan to a comparison-ready signature.

Walks the surface pipeline one stage at a time: crosscut selection near
the bullet base, band-averaged profile, groove shoulder detection,
LOWESS detrending. Saves a four-panel figure to demo_output/.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from leamatch import Config
from leamatch.pipeline import (detect_grooves, extract_profile, extract_signature,
                               lowess_fit, select_crosscut)
from leamatch.synth import FiringSpec, fire_bullet, make_barrel

cfg = Config()
barrel = make_barrel(seed=7, n_lands=6)
fired = fire_bullet(barrel, FiringSpec(), seed=3)
scan = fired.bullet.lands[0]

selection = select_crosscut(scan, cfg.crosscut)
print(f"crosscut: row {selection.row_index} "
      f"(stability {selection.stability:.3f}, "
      f"{len(selection.search_trace)} candidate rows examined)")

profile = extract_profile(scan, selection, band=cfg.crosscut.band)
grooves = detect_grooves(profile, cfg.grooves)
print(f"grooves: left {grooves.left_index} (found={grooves.left_found}), "
      f"right {grooves.right_index} (found={grooves.right_found}); "
      f"ground truth {fired.truth.lands[0].shoulder_left}/"
      f"{fired.truth.lands[0].shoulder_right}")

signature = extract_signature(profile, grooves, cfg)
print(f"signature: {len(signature)} samples, mean "
      f"{np.nanmean(signature.residuals):+.2e} um (centered)")

lo, hi = grooves.interior_range()
interior = profile.values[lo:hi + 1]
trend = lowess_fit(interior, profile.mask[lo:hi + 1],
                   cfg.lowess.span_fraction, cfg.lowess.degree)

out = Path(__file__).parent / "demo_output"
out.mkdir(exist_ok=True)
fig, axes = plt.subplots(4, 1, figsize=(9, 10))
axes[0].imshow(np.where(scan.mask, np.nan, scan.heights), origin="lower",
               aspect="auto", cmap="viridis")
axes[0].axhline(selection.row_index, color="silver", lw=2)
axes[0].set_title(f"LEA scan {scan.land_id} with crosscut row")
axes[1].plot(profile.values, lw=0.8)
axes[1].axvline(grooves.left_index, color="tab:blue")
axes[1].axvline(grooves.right_index, color="tab:blue")
axes[1].set_title("profile with detected groove shoulders")
axes[2].plot(np.arange(lo, hi + 1), interior, lw=0.8, label="interior")
axes[2].plot(np.arange(lo, hi + 1), trend, lw=1.5, label="LOWESS trend")
axes[2].legend()
axes[2].set_title("groove-trimmed interior and trend")
axes[3].plot(signature.residuals, lw=0.8, color="tab:green")
axes[3].set_title("signature (detrended residuals, um)")
fig.tight_layout()
fig.savefig(out / "surface_to_signature.png", dpi=110)
print(f"wrote {out / 'surface_to_signature.png'}")
