"""Grid graph with edge pseudo-coordinates for the geometric convolutions.

Nodes are the physical grid points in row-major order; edges connect the
8 neighbors (non-periodic).  Each directed edge (u, v) carries the
pseudo-coordinate e_uv = (coords_v - coords_u) / dx, so e_vu = -e_uv.  For
fast aggregation, edges are grouped by their (few) distinct pseudo-coordinate
values and each group is materialized as a sparse 0/1 matrix that gathers
neighbor features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .solver import GridSpec


@dataclass
class GridGraph:
    n_nodes: int
    coords: np.ndarray          # (n_nodes, 2) physical coordinates
    edge_index: np.ndarray      # (2, n_edges) directed (u, v) pairs
    pseudo: np.ndarray          # (n_edges, 2) offsets in units of dx
    offsets: np.ndarray         # (n_groups, 2) distinct pseudo values
    group_matrices: list        # CSR: group g gathers sum over v with e_uv=o_g
    degree: np.ndarray          # (n_nodes,) neighborhood sizes

    def aggregate(self, group: int, values: np.ndarray) -> np.ndarray:
        """Sum values over neighbors of each node for one offset group.

        values has shape (B, n_nodes, C); the sparse product runs over the
        node axis.
        """
        b, n, c = values.shape
        flat = values.transpose(1, 0, 2).reshape(n, b * c)
        out = self.group_matrices[group] @ flat
        return out.reshape(n, b, c).transpose(1, 0, 2)

    def aggregate_transpose(self, group: int, values: np.ndarray) -> np.ndarray:
        """Adjoint of aggregate (scatter back along reversed edges)."""
        b, n, c = values.shape
        flat = values.transpose(1, 0, 2).reshape(n, b * c)
        out = self.group_matrices[group].T @ flat
        return out.reshape(n, b, c).transpose(1, 0, 2)


def build_grid_graph(grid: GridSpec | int) -> GridGraph:
    """8-neighbor non-periodic graph over the n_g x n_g physical grid."""
    if isinstance(grid, GridSpec):
        n_g = grid.n_g
        dx = grid.spacing
    else:
        n_g = int(grid)
        dx = 1.0
    if n_g < 3:
        raise ValueError(f"grid graphs need n_g >= 3, got {n_g}")

    rows, cols = np.meshgrid(np.arange(n_g), np.arange(n_g), indexing="ij")
    coords = np.stack([cols.ravel() * dx, rows.ravel() * dx], axis=1)

    srcs, dsts, pseudos = [], [], []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            ri = rows + di
            cj = cols + dj
            ok = (ri >= 0) & (ri < n_g) & (cj >= 0) & (cj < n_g)
            u = (rows[ok] * n_g + cols[ok]).ravel()
            v = (ri[ok] * n_g + cj[ok]).ravel()
            dsts.append(u)
            srcs.append(v)
            pseudos.append(np.tile([dj, di], (u.size, 1)).astype(float))
    dst = np.concatenate(dsts)
    src = np.concatenate(srcs)
    pseudo = np.concatenate(pseudos)

    n_nodes = n_g * n_g
    offsets, group_of = np.unique(pseudo, axis=0, return_inverse=True)
    matrices = []
    for g in range(offsets.shape[0]):
        pick = group_of == g
        mat = sp.csr_matrix(
            (np.ones(pick.sum()), (dst[pick], src[pick])),
            shape=(n_nodes, n_nodes))
        matrices.append(mat)
    degree = np.asarray(
        sum(m.sum(axis=1) for m in matrices)).ravel().astype(float)

    return GridGraph(
        n_nodes=n_nodes,
        coords=coords,
        edge_index=np.stack([dst, src]),
        pseudo=pseudo,
        offsets=offsets,
        group_matrices=matrices,
        degree=degree,
    )
