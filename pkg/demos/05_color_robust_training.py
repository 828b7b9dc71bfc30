"""Adversarial color training of the toy classifier, plain vs robust.

Trains logistic regression over the fixed color/luminance features twice:
plainly on clean data, and with the minimax loop that colorizes each
minibatch with its worst-case grid color.  Reports cAUC / ccAUC / dMR for
both and shows where the robust model moved its weights.
"""

import time

from chromafool.defense import (ColorAtConfig, FEATURE_NAMES, defense_metrics,
                                make_synthetic_dataset, train_colorat,
                                train_plain)

data = make_synthetic_dataset(120, seed=7, size=20)
print(f"benchmark: {len(data)} images "
      f"({sum(1 for _, y in data if y)} bonafide, "
      f"{sum(1 for _, y in data if not y)} spoof)")

plain = train_plain(data, epochs=300, learning_rate=0.5, seed=0)
m_plain = defense_metrics(plain, data, n_colors=5, seed=11)
print(f"\nplain     : cAUC {m_plain.cauc:.3f}  ccAUC {m_plain.ccauc:.3f}  "
      f"dMR {m_plain.dmr:.3f}")

t0 = time.time()
robust = train_colorat(data, ColorAtConfig(
    epochs=300, learning_rate=0.7, seed=0, grid_resolution=5, minibatch=8,
    weight_decay=0.02, noise_scale=2.0))
m_robust = defense_metrics(robust, data, n_colors=5, seed=11)
print(f"color-AT  : cAUC {m_robust.cauc:.3f}  ccAUC {m_robust.ccauc:.3f}  "
      f"dMR {m_robust.dmr:.3f}   (trained in {time.time() - t0:.0f}s)")

print(f"\ncolorized-spoof acceptance dropped "
      f"{m_plain.dmr:.3f} -> {m_robust.dmr:.3f}")
print("\nweight comparison (plain vs robust):")
for name, wp, wr in zip(FEATURE_NAMES, plain.weights, robust.weights):
    print(f"  {name:20s} {wp:+7.2f}   {wr:+7.2f}")
print("the robust model leans on the zero-pixel fraction and texture —"
      "\nthe statistics a color filter cannot wash out.")
