"""
Moves species values between their own habitat meshes and one overlay grid
on which every characteristic function is constant, so reactions between
species on different meshes can be evaluated cell by cell.

Usage:

1) Build the overlay once per simulation

    overlay = OverlayGrid(model.domains, meshes)

2) Read the species onto it, react, and average the sources back

    u = overlay.gather(state.fields, model.species.sigma)
    sources = overlay.scatter_all(model.reaction.evaluate(u, overlay.inside, sigma), sigma)
"""
import logging
from typing import Dict, List, Sequence

import numpy as np

from habitat_rd.geometry import (
    DomainSet,
    MeshedDomain,
)

LOGGER = logging.getLogger(__name__)


class OverlayGrid:
    """
    Common refinement of the per-habitat meshes.

    The overlay is the tensor grid built from the union of every mesh's
    breakpoints, so each overlay cell sits inside exactly one cell of every
    mesh that covers it and every characteristic function is constant on it.
    Species values are read from their own mesh (`gather`) and reaction
    sources are averaged back onto it (`scatter`).
    """

    # Breakpoints closer than this fraction of the smallest cell width are
    # treated as the same breakpoint.
    MERGE_TOLERANCE = 1e-9

    def __init__(self, domains: DomainSet, meshes: Sequence[MeshedDomain]):
        self._domains = domains
        self._meshes = list(meshes)
        self._edges = [self._merged_edges(axis) for axis in range(domains.dim)]

        axis_centers = [0.5 * (e[1:] + e[:-1]) for e in self._edges]
        axis_widths = [np.diff(e) for e in self._edges]
        self._shape = tuple(len(c) for c in axis_centers)

        grids = np.meshgrid(*axis_centers, indexing='ij')
        self._centers = np.stack([g.ravel() for g in grids], axis=1)
        widths = np.meshgrid(*axis_widths, indexing='ij')
        self._volume = np.prod(np.stack([w.ravel() for w in widths]), axis=0)

        self._inside = domains.membership(self._centers)
        self._cell_index: Dict[int, np.ndarray] = {
            mesh.domain.id: self._locate(mesh) for mesh in self._meshes
        }
        LOGGER.debug(
            'Overlay grid %s built from %d meshes',
            self._shape,
            len(self._meshes),
        )

    def _merged_edges(self, axis: int) -> np.ndarray:
        edges = np.sort(np.concatenate(
            [mesh.axis_edges(axis) for mesh in self._meshes]
        ))
        smallest = min(mesh.h[axis] for mesh in self._meshes)
        keep = np.concatenate(
            [[True], np.diff(edges) > self.MERGE_TOLERANCE * smallest]
        )
        return edges[keep]

    def _locate(self, mesh: MeshedDomain) -> np.ndarray:
        # Flat index into `mesh` for every overlay cell inside its domain,
        # -1 elsewhere.
        inside = self._inside[mesh.domain.id - 1]
        index = np.full(self.n_cells, -1, dtype=np.int64)
        multi = []
        for axis in range(self._domains.dim):
            position = (
                (self._centers[inside, axis] - mesh.domain.lo[axis])
                / mesh.h[axis]
            )
            multi.append(np.clip(
                np.floor(position).astype(np.int64),
                0,
                mesh.cells_per_axis[axis] - 1,
            ))
        index[inside] = np.ravel_multi_index(tuple(multi), mesh.shape)
        return index

    @property
    def shape(self):
        return self._shape

    @property
    def n_cells(self) -> int:
        return int(np.prod(self._shape))

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def volume(self) -> np.ndarray:
        return self._volume

    @property
    def inside(self) -> np.ndarray:
        """(N, n_cells) membership of overlay cells in each habitat."""
        return self._inside

    @property
    def union_measure(self) -> float:
        """|Ω_1 ∪ ... ∪ Ω_N|."""
        return float(np.sum(self._volume[np.any(self._inside, axis=0)]))

    def is_aligned(self) -> bool:
        """True when every mesh cell coincides with exactly one overlay cell."""
        return all(
            np.count_nonzero(self._cell_index[mesh.domain.id] >= 0)
            == mesh.n_cells
            for mesh in self._meshes
        )

    def gather(self, fields: Sequence[np.ndarray],
               sigma: Sequence[int]) -> np.ndarray:
        """
        Reads every species onto the overlay: returns (m, n_cells) with zeros
        where the species' habitat does not reach.
        """
        values = np.zeros((len(fields), self.n_cells))
        for k, (field, domain_id) in enumerate(zip(fields, sigma)):
            index = self._cell_index[domain_id]
            inside = index >= 0
            values[k, inside] = np.ravel(field)[index[inside]]
        return values

    def scatter(self, values: np.ndarray, mesh: MeshedDomain) -> np.ndarray:
        """
        Volume-weighted average of overlay values over each cell of `mesh`.
        """
        index = self._cell_index[mesh.domain.id]
        inside = index >= 0
        total = np.bincount(
            index[inside],
            weights=values[inside] * self._volume[inside],
            minlength=mesh.n_cells,
        )
        return (total / mesh.cell_volume).reshape(mesh.shape)

    def scatter_all(self, values: np.ndarray,
                    sigma: Sequence[int]) -> List[np.ndarray]:
        by_id = {mesh.domain.id: mesh for mesh in self._meshes}
        return [
            self.scatter(values[k], by_id[domain_id])
            for k, domain_id in enumerate(sigma)
        ]
