"""
Dyadic partitions of the unit hypercube, grid sets and set-to-set metrics.

Sets are compared through the point clouds of their cell centers. Cell
coordinates and centers are dyadic rationals, so center differences, their
squares and their sums are exact in float64 up to resolution 24; every
distance below is computed from the two centers with the same expression,
which is what makes the accelerated and brute-force Hausdorff distances agree
exactly.
"""
import math
from dataclasses import dataclass
from typing import Callable, FrozenSet, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from hauslev.exceptions import DomainError, ResourceBudgetError
from hauslev.logging_config import get_logger

logger = get_logger(__name__)

CellIndex = Tuple[int, ...]

# Largest dense mask handed to the distance transform (its feature
# transform holds d int64 indices per cell).
DENSE_TRANSFORM_LIMIT = 1 << 22

# Flat indices are int64.
_MAX_FLAT_BITS = 62


@dataclass(frozen=True)
class DyadicGrid:
    """Regular partition of [0,1]^d into cubes of sidelength 2^-j"""

    d: int
    j: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise DomainError(f"dimension must be a positive integer, got {self.d}")
        if int(self.j) != self.j or self.j < 0:
            raise DomainError(f"resolution must be a non-negative integer, got {self.j}")
        if self.j * self.d > _MAX_FLAT_BITS:
            raise DomainError(f"resolution {self.j} is too fine for d={self.d}")

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.j

    @property
    def total_cells(self) -> int:
        return 1 << (self.j * self.d)

    @property
    def sidelength(self) -> float:
        return math.ldexp(1.0, -self.j)

    @property
    def cell_measure(self) -> float:
        """mu(A) = 2^(-jd)"""
        return math.ldexp(1.0, -self.j * self.d)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.cells_per_axis,) * self.d

    def locate(self, point: Sequence[float]) -> CellIndex:
        """Cell containing a point; coordinate 1.0 maps to the last cell"""
        cells = self.locate_many(np.asarray(point, dtype=float).reshape(1, -1))
        return tuple(int(k) for k in cells[0])

    def locate_many(self, points: np.ndarray) -> np.ndarray:
        """Cells (m x d int64) of a batch of points (m x d)"""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.d:
            raise DomainError(f"expected points of shape (m, {self.d}), got {points.shape}")
        if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
            raise DomainError("point coordinates must lie in [0, 1]")
        cells = np.floor(points * self.cells_per_axis).astype(np.int64)
        np.minimum(cells, self.cells_per_axis - 1, out=cells)
        return cells

    def center(self, cell: Sequence[int]) -> np.ndarray:
        return self.centers(np.asarray(cell, dtype=np.int64).reshape(1, -1))[0]

    def centers(self, cells: np.ndarray) -> np.ndarray:
        """((k_i + 0.5) 2^-j)_i for every row"""
        return (np.asarray(cells, dtype=float) + 0.5) * self.sidelength

    def is_valid(self, cell: Sequence[int]) -> bool:
        return len(cell) == self.d and all(0 <= int(k) < self.cells_per_axis for k in cell)

    def ravel(self, cells: np.ndarray) -> np.ndarray:
        """Flat C-order indices; their order is the lexicographic cell order"""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.d)
        if cells.shape[0] == 0:
            return np.zeros(0, dtype=np.int64)
        return np.ravel_multi_index(tuple(cells.T), self.shape).astype(np.int64)

    def unravel(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        if flat.size == 0:
            return np.zeros((0, self.d), dtype=np.int64)
        return np.stack(np.unravel_index(flat, self.shape), axis=1).astype(np.int64)

    def refined(self, levels: int) -> "DyadicGrid":
        return DyadicGrid(self.d, self.j + levels)


class GridSet:
    """
    A finite union of cells of one DyadicGrid.

    Cells are kept as a read-only (m x d) int64 array, unique and sorted
    lexicographically.
    """

    __slots__ = ("grid", "_cells")

    def __init__(self, grid: DyadicGrid, cells: Optional[np.ndarray] = None):
        self.grid = grid
        if cells is None:
            array = np.zeros((0, grid.d), dtype=np.int64)
        else:
            array = np.asarray(cells, dtype=np.int64)
            if array.size == 0:
                array = np.zeros((0, grid.d), dtype=np.int64)
            if array.ndim != 2 or array.shape[1] != grid.d:
                raise DomainError(f"cells must have shape (m, {grid.d}), got {array.shape}")
            if np.any(array < 0) or np.any(array >= grid.cells_per_axis):
                raise DomainError(f"cell coordinates must lie in [0, {grid.cells_per_axis})")
            array = grid.unravel(np.unique(grid.ravel(array)))
        array.setflags(write=False)
        self._cells = array

    @classmethod
    def from_flat(cls, grid: DyadicGrid, flat: np.ndarray) -> "GridSet":
        return cls(grid, grid.unravel(np.unique(np.asarray(flat, dtype=np.int64))))

    @classmethod
    def from_mask(cls, grid: DyadicGrid, mask: np.ndarray) -> "GridSet":
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != grid.shape:
            raise DomainError(f"mask shape {mask.shape} does not match grid {grid.shape}")
        return cls(grid, np.argwhere(mask))

    @classmethod
    def full(cls, grid: DyadicGrid) -> "GridSet":
        return cls.from_flat(grid, np.arange(grid.total_cells, dtype=np.int64))

    @classmethod
    def from_predicate(
        cls,
        grid: DyadicGrid,
        predicate: Callable[[np.ndarray], np.ndarray],
        chunk: int = 1 << 18
    ) -> "GridSet":
        """Cells whose center satisfies a vectorized predicate"""
        kept = []
        for start in range(0, grid.total_cells, chunk):
            flat = np.arange(start, min(start + chunk, grid.total_cells), dtype=np.int64)
            inside = np.asarray(predicate(grid.centers(grid.unravel(flat))), dtype=bool)
            kept.append(flat[inside])
        return cls.from_flat(grid, np.concatenate(kept) if kept else np.zeros(0, dtype=np.int64))

    @property
    def cells(self) -> np.ndarray:
        return self._cells

    @property
    def members(self) -> FrozenSet[CellIndex]:
        return frozenset(tuple(int(k) for k in row) for row in self._cells)

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def j(self) -> int:
        return self.grid.j

    @property
    def is_empty(self) -> bool:
        return self._cells.shape[0] == 0

    @property
    def measure(self) -> float:
        """|members| * 2^(-jd)"""
        return len(self) * self.grid.cell_measure

    def flat(self) -> np.ndarray:
        return self.grid.ravel(self._cells)

    def centers(self) -> np.ndarray:
        return self.grid.centers(self._cells)

    def to_mask(self) -> np.ndarray:
        if self.grid.total_cells > DENSE_TRANSFORM_LIMIT:
            raise ResourceBudgetError(self.grid.total_cells, DENSE_TRANSFORM_LIMIT, "dense mask")
        mask = np.zeros(self.grid.shape, dtype=bool)
        if not self.is_empty:
            mask[tuple(self._cells.T)] = True
        return mask

    def issubset(self, other: "GridSet") -> bool:
        if other.grid != self.grid:
            raise DomainError("subset test needs sets on the same grid")
        return bool(np.all(np.isin(self.flat(), other.flat())))

    def __len__(self) -> int:
        return int(self._cells.shape[0])

    def __iter__(self) -> Iterator[CellIndex]:
        for row in self._cells:
            yield tuple(int(k) for k in row)

    def __contains__(self, cell) -> bool:
        if not self.grid.is_valid(cell):
            return False
        key = self.grid.ravel(np.asarray(cell, dtype=np.int64).reshape(1, -1))[0]
        flat = self.flat()
        pos = np.searchsorted(flat, key)
        return bool(pos < flat.size and flat[pos] == key)

    def __eq__(self, other) -> bool:
        if not isinstance(other, GridSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self._cells, other._cells)

    def __hash__(self) -> int:
        return hash((self.grid, self._cells.tobytes()))

    def __repr__(self) -> str:
        return f"GridSet(d={self.d}, j={self.j}, cells={len(self)})"


def _check_dims(a: GridSet, b: GridSet) -> None:
    if a.d != b.d:
        raise DomainError(f"dimension mismatch: {a.d} vs {b.d}")


def _pair_distances(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Euclidean distances between matching rows (or a row against many)"""
    return np.sqrt(np.sum((p - q) ** 2, axis=-1))


def _nearest_by_transform(src: GridSet, target: GridSet) -> np.ndarray:
    """Nearest target cell of every source cell, from the exact Euclidean feature transform"""
    features = ndimage.distance_transform_edt(
        ~target.to_mask(), return_distances=False, return_indices=True
    )
    index = (slice(None),) + tuple(src.cells.T)
    return features[index].T


def _directed(src: GridSet, target: GridSet) -> float:
    """sup over src centers of the distance to the nearest target center"""
    if src.grid == target.grid and src.grid.total_cells <= DENSE_TRANSFORM_LIMIT:
        nearest = target.grid.centers(_nearest_by_transform(src, target))
    else:
        target_centers = target.centers()
        _, idx = cKDTree(target_centers).query(src.centers(), k=1)
        nearest = target_centers[np.asarray(idx, dtype=np.int64)]
    return float(np.max(_pair_distances(src.centers(), nearest)))


def hausdorff(a: GridSet, b: GridSet) -> float:
    """
    Hausdorff distance between the center clouds of two grid sets.

    Empty inputs (one or both) give the domain diameter sqrt(d).

    Raises:
        DomainError: dimension mismatch
    """
    _check_dims(a, b)
    if a.is_empty or b.is_empty:
        return math.sqrt(a.d)
    return max(_directed(b, a), _directed(a, b))


def _directed_bruteforce(src: np.ndarray, target: np.ndarray) -> float:
    worst = 0.0
    for p in src:
        best = float(np.min(_pair_distances(p, target)))
        if best > worst:
            worst = best
    return worst


def hausdorff_bruteforce(a: GridSet, b: GridSet) -> float:
    """Same contract as hausdorff, by the O(|A| |B|) double loop"""
    _check_dims(a, b)
    if a.is_empty or b.is_empty:
        return math.sqrt(a.d)
    pa, pb = a.centers(), b.centers()
    return max(_directed_bruteforce(pb, pa), _directed_bruteforce(pa, pb))


def symmetric_difference_measure(a: GridSet, b: GridSet) -> float:
    """
    Lebesgue measure of the symmetric difference of two cell unions.

    Sets at different resolutions are compared through the coarse ancestors
    of the finer set's cells, which is the same as subdividing the coarser set.
    """
    _check_dims(a, b)
    if a.j == b.j:
        return np.setxor1d(a.flat(), b.flat(), assume_unique=True).size * a.grid.cell_measure
    coarse, fine = (a, b) if a.j < b.j else (b, a)
    ancestors = coarse.grid.ravel(fine.cells >> (fine.j - coarse.j))
    shared = int(np.count_nonzero(np.isin(ancestors, coarse.flat())))
    return coarse.measure + fine.measure - 2.0 * shared * fine.grid.cell_measure


def intersection(a: GridSet, b: GridSet) -> GridSet:
    if a.grid != b.grid:
        raise DomainError("intersection needs sets on the same grid")
    return GridSet.from_flat(a.grid, np.intersect1d(a.flat(), b.flat(), assume_unique=True))


def _ball_footprint(d: int, radius_cells: float) -> np.ndarray:
    r = int(math.floor(radius_cells + 1e-9))
    offsets = np.indices((2 * r + 1,) * d) - r
    return np.sum(offsets ** 2, axis=0) <= radius_cells ** 2 + 1e-9


def inner_cover_distance(g: GridSet, epsilon: float) -> float:
    """
    Largest distance from a boundary cell of G to the discrete inner epsilon-cover.

    The cover holds the centers whose epsilon-ball of grid centers lies in G
    (centers outside [0,1]^d do not count). Boundary cells are members with a
    face-adjacent nonmember. Returns 0.0 without boundary cells and +inf when
    the cover is empty.

    Raises:
        DomainError: empty G or epsilon below two sidelengths
    """
    if g.is_empty:
        raise DomainError("inner cover of an empty set")
    h = g.grid.sidelength
    if not epsilon > 0 or epsilon < 2.0 * h * (1.0 - 1e-12):
        raise DomainError(f"epsilon {epsilon} is below two sidelengths ({2.0 * h})")

    mask = g.to_mask()
    covered = ndimage.binary_erosion(mask, structure=_ball_footprint(g.d, epsilon / h), border_value=1)
    cross = ndimage.generate_binary_structure(g.d, 1)
    boundary = mask & ~ndimage.binary_erosion(mask, structure=cross, border_value=1)

    if not boundary.any():
        return 0.0
    if not covered.any():
        logger.debug(f"inner cover empty at epsilon={epsilon} (j={g.j})")
        return math.inf
    return _directed(GridSet.from_mask(g.grid, boundary), GridSet.from_mask(g.grid, covered))
