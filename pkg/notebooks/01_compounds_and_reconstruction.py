# %% [markdown]
# # Compound matrices and how to undo them
#
# The k-th compound of a d×d matrix collects all k×k minors in lexicographic
# order. This notebook checks a few of its algebraic laws, then rebuilds a
# matrix from its minors and looks at where that fails.

# %%
import numpy as np

from minorforge import compound, reconstruct
from minorforge.compound import compound_array, sylvester_exponent
from minorforge.reconstruct import is_compound, nonproper_limit, nonproper_sequence

rng = np.random.default_rng(0)

# %% [markdown]
# ## Multiplicativity and the determinant exponent

# %%
A, B = rng.standard_normal((2, 5, 5))
k = 3
gap = np.abs(compound_array(A @ B, k) - compound_array(A, k) @ compound_array(B, k)).max()
print(f"C_3(AB) - C_3(A) C_3(B): {gap:.1e}")

det_c = np.linalg.det(compound_array(A, k))
print(f"det C_3(A) = {det_c:.6g}, det(A)^{sylvester_exponent(5, 3)} = {np.linalg.det(A) ** 6:.6g}")

# %% [markdown]
# ## Reconstruction
#
# Odd k pins the matrix down completely. For even k the minors of A and -A
# coincide; when d is odd a sign hint picks the branch, and when d is even
# there is nothing to pick with.

# %%
for d, k in [(5, 3), (5, 2), (4, 2)]:
    A = rng.standard_normal((d, d))
    res = reconstruct(compound(A, k), hint="positive" if np.linalg.det(A) > 0 else "negative")
    err = min(np.abs(res.matrix - A).max(), np.abs(res.matrix + A).max())
    print(f"(d, k) = ({d}, {k}): method {res.method:12s} branch {res.sign_branch!s:7s} "
          f"ambiguous {res.ambiguous!s:5s} error {err:.1e}")

# %% [markdown]
# ## The image is not closed
#
# Scaling one direction up by n and the other four down by n^(-1/2) keeps the
# third compound bounded, and its limit is not a compound of anything.

# %%
limit = nonproper_limit()
for n in (10, 100, 1000, 10_000):
    An = nonproper_sequence(n)
    dist = np.abs(compound_array(An, 3) - limit.entries).max()
    print(f"n={n:>6}: |A_n| = {np.linalg.norm(An, 2):8.1f}, distance to limit {dist:.1e}")

m = is_compound(limit.entries, d=5, k=3)
print("limit is a compound:", m.member, "|", m.reason)
