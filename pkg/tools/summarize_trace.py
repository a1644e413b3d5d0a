import sys

import numpy as np
import pandas as pd
from scipy import stats

"""
Prints the fitted exponential decay of a coupling trace written by
`run_hmc.py couple` (coupling_trace.csv) or of a replica-averaged
contraction series (contraction.csv).

    python tools/summarize_trace.py output/coupling_trace.csv [tol]
"""

if len(sys.argv) > 1:
    data_path = sys.argv[1]
else:
    data_path = 'output/coupling_trace.csv'
tol = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-5
df = pd.read_csv(data_path, comment="#")


def decay_window(df):
    dist = df.mean_distance.values
    below = np.nonzero(dist < 0.5 * dist[0])[0]
    start = below[0] if below.size else 0
    keep = (df.index >= start) & (df.mean_distance > 0) & np.isfinite(df.mean_distance)
    return df[keep]


window = decay_window(df)
print(f'{data_path}: {len(df)} steps, initial mean distance {df.mean_distance.iloc[0]:.4g}, '
      f'final {df.mean_distance.iloc[-1]:.4g}')
if len(window) >= 2:
    fit = stats.linregress(window.step, np.log(window.mean_distance))
    print(f'decay rate: {-fit.slope:.4f} +- {fit.stderr:.4f} per step over steps {window.step.iloc[0]}-{window.step.iloc[-1]}')
else:
    print('decay rate: window too short')
hit = df[df.mean_distance < tol]
print(f'first step below {tol:g}: {hit.step.iloc[0] if len(hit) else "not reached"}')
if 'n_shift' in df.columns:
    total = df[['n_sync', 'n_shift', 'n_reflect']].sum()
    print(f"branches: sync {total.n_sync}; shift {total.n_shift}; reflect {total.n_reflect}")
