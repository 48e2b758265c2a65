"""
A tour of the Hierarchical Tucker format
========================================

Build a random HT tensor on a balanced dimension tree, look at its
parameters, check that gauge transformations leave the tensor alone, and
read the singular values of every matricization off the Gramians.

Run with ``python3 demos/01_ht_format_tour.py``.
"""

import numpy as np

import htmanifold as ht
from htmanifold.tensor_core import matricize

# %%
# A dimension tree splits the modes recursively. The complete tree on four
# modes pairs (1,2) and (3,4); tree strings use 1-based modes.
tree = ht.complete_tree(4)
print("tree:", tree.to_string())
ranks = ht.make_ranks(tree, leaf=3, internal=2)
print("ranks per node (root first):", ranks)

# %%
# Parameters: one frame U_t per leaf, one transfer tensor B_t per internal
# node. ``random_ht`` returns orthogonal parameters, so every frame and every
# reshaped transfer tensor has orthonormal columns.
shape = (6, 7, 6, 7)
x = ht.random_ht(tree, ranks, shape, seed=0)
for t, b in enumerate(x.blocks):
    kind = "leaf" if tree.is_leaf(t) else ("root" if t == tree.root else "transfer")
    print(f"node {t} ({kind}): block shape {b.shape}")
print("orthogonality residual:", ht.orthogonality_residual(x))
print("parameters:", x.num_params(), "vs dense entries:", np.prod(shape))

# %%
# Gauge freedom: inserting A_t A_t^{-1} between a node and its parent changes
# the blocks but not the tensor.
full = ht.expand(x)
y = ht.apply_gauge(x, ht.random_gauge(x, seed=1))
print("blocks changed:", not np.allclose(x.blocks[1], y.blocks[1]))
print("tensor change:", np.linalg.norm(ht.expand(y) - full) / np.linalg.norm(full))

# %%
# Gramians: for orthogonal parameters the eigenvalues of G_t are the squared
# singular values of the matricization X^(t). The recursion only touches the
# transfer tensors, never the dense tensor.
g = ht.gramians(x)
for t in tree.non_root():
    sv = np.linalg.svd(matricize(full, tree[t].modes), compute_uv=False)[: x.rank(t)]
    ev = np.sort(g.eig(t)[0])[::-1]
    print(f"node {t} modes {tuple(m + 1 for m in tree[t].modes)}: sqrt eig {np.sqrt(ev).round(6)} svd {sv.round(6)}")

# %%
# Truncation: a hierarchical SVD recovers an exact-rank tensor, and a lower
# target rank gives a quasi-optimal approximation.
z, err = ht.truncate(full, tree, ranks, return_error=True)
print("re-truncation error at the true ranks:", err)
_, err1 = ht.truncate(full, tree, ht.make_ranks(tree, 1), return_error=True)
print("relative error at rank 1:", err1 / np.linalg.norm(full))
