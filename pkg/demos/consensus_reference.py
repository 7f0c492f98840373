#!/usr/bin/env python3
"""Discrete consensus reference model on the mesh storage cluster.

The packet network's voltage dynamics are a switched version of plain
weighted-graph consensus. This demo runs the discrete update
x(k+1) = (I - eps * C^-1 * L) x(k) on the six-storage cluster of the mesh
topology for several step factors, showing convergence to the
capacitance-weighted average and divergence beyond the stability bound.

Usage: python3 demos/consensus_reference.py [outdir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ppnsim import (
    ConsensusParams,
    discrete_consensus_step,
    stability_epsilon_bound,
    trimesh9_topology,
)

out_dir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out_dir.mkdir(parents=True, exist_ok=True)

# Laplacian of the storage-storage cluster (all paths conducting)
topo = trimesh9_topology()
storages = list(range(1, 7))
pos = {n: i for i, n in enumerate(storages)}
L = np.zeros((6, 6))
for a, b, _ in topo.edges:
    if a in pos and b in pos:
        ia, ib = pos[a], pos[b]
        L[ia, ia] += 0.5
        L[ib, ib] += 0.5
        L[ia, ib] -= 0.5
        L[ib, ia] -= 0.5

caps = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]) * 1e-3
bound = stability_epsilon_bound(L, caps)
eigs = np.sort(np.linalg.eigvalsh(L))
print(f"stability bound eps < {bound:.3e}, algebraic connectivity "
      f"lambda2 = {eigs[1]:.3f}")

rng = np.random.Generator(np.random.Philox(key=np.array([21, 0], dtype=np.uint64)))
x0 = rng.uniform(0, 10, size=6)
target = float(caps @ x0 / caps.sum())
print(f"initial states {np.round(x0, 2)}, weighted average {target:.4f}")

fig, ax = plt.subplots(figsize=(7, 4.5))
for frac in (0.1, 0.5, 0.9):
    params = ConsensusParams(epsilon=frac * bound)
    x = x0.copy()
    errs = []
    for _ in range(400):
        x = discrete_consensus_step(L, caps, x, params)
        errs.append(np.abs(x - target).max())
    ax.semilogy(errs, label=f"eps = {frac:.1f} x bound")
    print(f"  eps = {frac:.1f} x bound: error {errs[-1]:.2e} after 400 steps")

ax.set_xlabel("iteration")
ax.set_ylabel("max |x - weighted average|")
ax.set_title("consensus on the six-storage cluster")
ax.legend()
fig.tight_layout()
target_path = out_dir / "consensus_convergence.png"
fig.savefig(target_path, dpi=150)
print(f"wrote {target_path}")
