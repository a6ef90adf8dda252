"""The imaging model: phase-encoding designs, the forward operator and the
sparsifying transform.

Run:  python demos/02_designs_and_operators.py
"""

import numpy as np

from sdobs.harness import generate_sparse_phantom, wavelet_sparsity
from sdobs.linops import (DESIGN_KINDS, HaarTransform, MRIOperator, adjoint_mismatch, design_counts,
                          make_design)
from sdobs.recon import zero_fill

n = 32
half, low = design_counts(n)
print(f"grid {n}x{n}: half-scan designs keep {half} of {n} lines, "
      f"UH and RH share a centred block of {low}\n")

# Each row of the picture is one phase-encoding line of centred k-space;
# the DC line is row n // 2.
masks = {k: make_design(k, n, seed=0) for k in DESIGN_KINDS}
print("line  " + "  ".join(DESIGN_KINDS))
for row in range(n):
    marks = "   ".join("#" if masks[k].line_flags[row] else "." for k in DESIGN_KINDS)
    dc = "  <- DC" if row == n // 2 else ""
    print(f"{row:4d}  {marks}{dc}")

# The operator is a unitary FFT followed by row selection, with the complex
# samples stacked as real numbers. Its adjoint keeps the real part, which is
# also what zero-filled reconstruction does.
f = generate_sparse_phantom(n, seed=1)
print("\ndesign  measurements  adjoint defect  zero-fill rel. error")
for kind, mask in masks.items():
    H = MRIOperator(mask, n)
    err = np.linalg.norm(zero_fill(H.apply(f), mask, n) - f) / np.linalg.norm(f)
    print(f"{kind:6s}  {H.range_dim:12d}  {adjoint_mismatch(H, 0):14.1e}  {err:20.4f}")

# The object prior acts on orthonormal Haar coefficients.
B = HaarTransform(n, 4)
w = B.apply(f)
print(f"\nHaar: |f| = {np.linalg.norm(f):.6f}, |Bf| = {np.linalg.norm(w):.6f} (orthonormal)")
print(f"fraction of coefficients below 1% of the largest: {wavelet_sparsity(f):.3f}")
order = np.sort(np.abs(w))[::-1]
for k in (10, 50, 100, 200):
    print(f"  energy in the top {k:3d} coefficients: {np.sum(order[:k] ** 2) / np.sum(order ** 2):.4f}")
