"""Sparsity-driven observer for ranking k-space acquisition designs.

Modules
-------
linops     measurement operators, sampling designs, Haar transform, CG
priors     Laplacian prior and its Gaussian lower bound
varinf     double-loop fit of the bound widths
observers  SDO, Hotelling and a quadrature reference for tiny problems
recon      sparse, quadratic and zero-fill reconstructions, SSIM
rocstat    AUC, binormal fits, design ranking
onedim     the scalar problem with an exact posterior
harness    phantoms, studies, configuration and the command line
"""

__version__ = "0.1.0"
