# Spectral basis tour: Hermite functions, clusters, quadrature.
# Run as a plain script or cell by cell in an editor that understands "# %%".

# %%
import numpy as np

from lenscat.hermite import build_basis, gram_matrix, synthesize, analyze, SpectralField

b = build_basis(2, 16)
print("modes:", b.size, "nodes per axis:", b.M)
print("cluster sizes:", b.cluster_sizes())

# %%
# quadrature Gram matrix is the identity to rounding
G = gram_matrix(b)
print("max |G - I|:", np.max(np.abs(G - np.eye(b.size))))

# %%
# coefficients -> grid -> coefficients
rng = np.random.default_rng(0)
f = SpectralField(b, rng.standard_normal(b.size) + 1j * rng.standard_normal(b.size))
back = analyze(synthesize(f))
print("round trip:", np.linalg.norm(back.coeffs - f.coeffs) / np.linalg.norm(f.coeffs))

# %%
# cluster j collects |alpha| = j - 1 in two dimensions, so it has j members
for j in (1, 2, 3, 8):
    print(j, b.cluster_sizes()[j])
