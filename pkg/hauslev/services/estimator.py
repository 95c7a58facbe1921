"""
Histogram plug-in level set estimation with data-driven resolution selection.

The resolution j is chosen by minimizing vernier + penalty, where the vernier
at j looks at the histogram on the finer partition j' = floor(j + log2 s_n)
and the penalty is a high-probability bound on the deviation of the
histogram from the cell averages of the true density.
"""
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from hauslev.config import get_settings
from hauslev.exceptions import ContractError, ResourceBudgetError
from hauslev.logging_config import get_logger
from hauslev.models import EstimatorConfig, SelectionDiagnostics, SelectionRecord
from hauslev.services.grid import CellIndex, DyadicGrid, GridSet
from hauslev.services.synth import DensityModel, SampleSet

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class Histogram:
    """Sparse cell counts of n samples on one dyadic grid"""

    grid: DyadicGrid
    n: int
    cells: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if int(self.counts.sum()) != self.n:
            raise ContractError(f"counts sum to {int(self.counts.sum())}, expected n={self.n}")
        if np.any(self.counts <= 0):
            raise ContractError("a sparse histogram only stores occupied cells")
        self.cells.setflags(write=False)
        self.counts.setflags(write=False)

    @classmethod
    def from_counts(cls, grid: DyadicGrid, counts: Mapping[CellIndex, int], n: Optional[int] = None) -> "Histogram":
        occupied = {tuple(cell): int(c) for cell, c in counts.items() if c}
        if not occupied:
            cells = np.zeros((0, grid.d), dtype=np.int64)
            values = np.zeros(0, dtype=np.int64)
        else:
            keys = GridSet(grid, np.array(list(occupied), dtype=np.int64))
            cells = keys.cells.copy()
            values = np.array([occupied[c] for c in keys], dtype=np.int64)
        total = int(values.sum())
        return cls(grid=grid, n=total if n is None else n, cells=cells, counts=values)

    @property
    def j(self) -> int:
        return self.grid.j

    @property
    def d(self) -> int:
        return self.grid.d

    def flat(self) -> np.ndarray:
        return self.grid.ravel(self.cells)

    def densities(self) -> np.ndarray:
        """fhat(A) = count(A) / (n mu(A)) on the occupied cells"""
        return self.counts / (self.n * self.grid.cell_measure)

    @property
    def max_density(self) -> float:
        return float(self.densities().max()) if self.counts.size else 0.0

    def count(self, cell: CellIndex) -> int:
        if not self.grid.is_valid(cell):
            return 0
        key = self.grid.ravel(np.asarray(cell, dtype=np.int64).reshape(1, -1))[0]
        flat = self.flat()
        pos = np.searchsorted(flat, key)
        return int(self.counts[pos]) if pos < flat.size and flat[pos] == key else 0

    def density_at(self, cell: CellIndex) -> float:
        return self.count(cell) / (self.n * self.grid.cell_measure)

    def dense_densities(self) -> np.ndarray:
        """fhat on every cell, empty cells included, shaped like the grid"""
        values = np.zeros(self.grid.total_cells)
        values[self.flat()] = self.densities()
        return values.reshape(self.grid.shape)

    def as_dict(self) -> Dict[CellIndex, int]:
        return {tuple(int(k) for k in cell): int(c) for cell, c in zip(self.cells, self.counts)}

    def coarsen(self, levels: int) -> "Histogram":
        """Counts on the partition `levels` steps coarser, summed over children"""
        if levels < 0 or levels > self.j:
            raise ContractError(f"cannot coarsen a j={self.j} histogram by {levels}")
        if levels == 0:
            return self
        coarse = DyadicGrid(self.d, self.j - levels)
        parents, inverse = np.unique(coarse.ravel(self.cells >> levels), return_inverse=True)
        counts = np.bincount(inverse.ravel(), weights=self.counts).astype(np.int64)
        return Histogram(grid=coarse, n=self.n, cells=coarse.unravel(parents), counts=counts)


def build_histogram(samples: SampleSet, j: int, cell_budget: Optional[int] = None) -> Histogram:
    """
    Count samples per cell of resolution j.

    Raises:
        ResourceBudgetError: 2^(jd) exceeds the cell budget
    """
    grid = DyadicGrid(samples.d, j)
    budget = cell_budget or get_settings().cell_budget
    if grid.total_cells > budget:
        raise ResourceBudgetError(grid.total_cells, budget, f"a histogram at j={j}")
    flat, counts = np.unique(grid.ravel(grid.locate_many(samples.points)), return_counts=True)
    return Histogram(grid=grid, n=samples.n, cells=grid.unravel(flat), counts=counts.astype(np.int64))


def plug_in_level_set(h: Histogram, gamma: float) -> GridSet:
    """Cells with fhat(A) >= gamma"""
    if gamma <= 0:
        raise ContractError("plug-in estimation needs gamma > 0; use support_set_estimate for gamma = 0")
    return GridSet(h.grid, h.cells[h.densities() >= gamma])


def support_set_estimate(h: Histogram) -> GridSet:
    """Cells holding at least one sample"""
    return GridSet(h.grid, h.cells)


def _log_term(j_prime: int, d: int, delta: float) -> float:
    return math.log(2.0 ** (j_prime * (d + 1)) * 16.0 / delta)


def penalty(h: Histogram, delta: float) -> float:
    """
    Psi at the histogram's resolution.

    max over all cells A of sqrt(c * max(fhat(A), c)), c = 8 L / (n mu(A)),
    L = ln(2^(j(d+1)) 16 / delta). The expression grows with fhat, so the
    largest occupied density (or an empty cell) attains the maximum.
    """
    if not 0 < delta < 1:
        raise ContractError(f"delta must lie in (0, 1), got {delta}")
    c = 8.0 * _log_term(h.j, h.d, delta) / (h.n * h.grid.cell_measure)
    return math.sqrt(c * max(h.max_density, c))


def vernier_empirical(h_fine: Histogram, j: int, gamma: float) -> float:
    """
    min over cells A of resolution j of max over children A' of |gamma - fhat(A')|.

    Children without samples count with deviation gamma.
    """
    k = h_fine.j - j
    if k < 0:
        raise ContractError(f"vernier needs j' >= j, got j={j}, j'={h_fine.j}")
    if h_fine.counts.size == 0:
        return float(gamma)

    coarse = DyadicGrid(h_fine.d, j)
    parents = coarse.ravel(h_fine.cells >> k)
    order = np.argsort(parents, kind="stable")
    sorted_parents = parents[order]
    deviations = np.abs(gamma - h_fine.densities())[order]

    starts = np.flatnonzero(np.r_[True, sorted_parents[1:] != sorted_parents[:-1]])
    worst = np.maximum.reduceat(deviations, starts)
    children = np.diff(np.r_[starts, sorted_parents.size])
    worst = np.where(children == 1 << (k * h_fine.d), worst, np.maximum(worst, gamma))

    best = float(worst.min())
    if starts.size < coarse.total_cells:
        best = min(best, float(gamma))
    return best


def jump_scale(j_prime: int) -> float:
    """2^(-j'/2)"""
    return 2.0 ** (-0.5 * j_prime)


def vernier_modified(h_fine: Histogram, j: int, gamma: float) -> float:
    """Vernier scaled by 2^(-j'/2) for densities that jump across the level"""
    return jump_scale(h_fine.j) * vernier_empirical(h_fine, j, gamma)


def vernier_true(model: DensityModel, j: int, gamma: float, j_prime: int) -> float:
    """Population vernier from the model's cell averages at j'"""
    k = j_prime - j
    if k < 0:
        raise ContractError(f"vernier needs j' >= j, got j={j}, j'={j_prime}")
    deviations = np.abs(gamma - model.cell_averages(j_prime))
    d = model.d
    shape = []
    for _ in range(d):
        shape.extend([1 << j, 1 << k])
    worst = deviations.reshape(shape).max(axis=tuple(range(1, 2 * d, 2)))
    return float(worst.min())


def evaluate_s_n(rule: Union[float, str], n: int) -> float:
    """Value of the diverging sequence s_n; never below 2"""
    if rule == "loglog":
        return max(2.0, math.log2(math.log2(n)))
    if rule == "log":
        return max(2.0, math.log(n))
    value = float(rule)
    if value < 2:
        raise ContractError(f"s_n must be at least 2, got {value}")
    return value


def fine_resolution(j: int, s_n: float) -> int:
    """j' = floor(j + log2 s_n)"""
    return int(math.floor(j + math.log2(s_n)))


def search_ceiling(n: int, d: int, s_n: float) -> int:
    """J = max(0, floor(log2(s_n^-1 (n / ln n)^(1/d))))"""
    return max(0, int(math.floor(math.log2((n / math.log(n)) ** (1.0 / d) / s_n))))


def _rate_resolution(n: int, exponent: float, s_n: float) -> int:
    if n < 2:
        raise ContractError(f"resolution rules need n >= 2, got {n}")
    return max(0, int(math.floor(math.log2((n / math.log(n)) ** exponent / s_n) + 0.5)))


def oracle_resolution(n: int, d: int, alpha: float, s_n: float) -> int:
    """Resolution for known regularity: 2^-j ~ s_n (n / ln n)^(-1/(d + 2 alpha)), rounded"""
    if alpha < 0:
        raise ContractError(f"alpha must be non-negative, got {alpha}")
    return _rate_resolution(n, 1.0 / (d + 2.0 * alpha), s_n)


def support_resolution(n: int, d: int, alpha: Optional[float], s_n: float) -> int:
    """Support-set resolution: 2^-j ~ s_n (n / ln n)^(-1/(d + alpha)), alpha defaulting to 1"""
    return _rate_resolution(n, 1.0 / (d + (1.0 if alpha is None else alpha)), s_n)


def error_radius(psi: float, c1: float, alpha: float, d: int, j: int) -> Optional[float]:
    """(Psi_j / C1)^(1/alpha) + sqrt(d) 2^-j"""
    if alpha <= 0 or c1 <= 0:
        return None
    return (psi / c1) ** (1.0 / alpha) + math.sqrt(d) * 2.0 ** -j


def _resolve(samples: SampleSet, config: EstimatorConfig) -> Tuple[float, float, int]:
    n = samples.n
    if n < 2:
        raise ContractError(f"estimation needs at least 2 samples, got {n}")
    delta = config.delta if config.delta is not None else 1.0 / n
    budget = config.cell_budget or get_settings().cell_budget
    return delta, evaluate_s_n(config.s_n, n), budget


def select_resolution(
    samples: SampleSet,
    config: EstimatorConfig,
    model: Optional[DensityModel] = None
) -> Tuple[int, SelectionDiagnostics]:
    """
    Adaptive resolution: argmin over 0 <= j <= J of vernier(j) + Psi(j').

    Ties go to the smaller j. With a synthetic model the records also carry
    the error radius epsilon_j.

    Raises:
        ResourceBudgetError: the fine partitions of the search exceed the cell budget
    """
    delta, s_n, budget = _resolve(samples, config)
    n, d = samples.n, samples.d
    j_max = config.j_max if config.j_max is not None else search_ceiling(n, d, s_n)

    j_primes = [fine_resolution(j, s_n) for j in range(j_max + 1)]
    enumerated = sum(1 << (jp * d) for jp in j_primes)
    if enumerated > budget:
        raise ResourceBudgetError(enumerated, budget, f"resolution search up to J={j_max}")

    finest = build_histogram(samples, j_primes[-1], budget)
    records: List[SelectionRecord] = []
    best: Optional[SelectionRecord] = None
    for j, jp in enumerate(j_primes):
        h = finest.coarsen(finest.j - jp)
        if config.jump_mode:
            vernier = vernier_modified(h, j, config.gamma)
            psi = jump_scale(jp) * penalty(h, delta)
        else:
            vernier = vernier_empirical(h, j, config.gamma)
            psi = penalty(h, delta)

        epsilon = None
        if model is not None:
            epsilon = error_radius(
                penalty(finest.coarsen(finest.j - j), delta), model.constants.c1, model.alpha, d, j
            )
        record = SelectionRecord(
            j=j, j_prime=jp, vernier=vernier, penalty=psi, objective=vernier + psi, epsilon=epsilon
        )
        logger.debug(f"j={j} j'={jp}: vernier={vernier:.6g} penalty={psi:.6g} objective={record.objective:.6g}")
        records.append(record)
        if best is None or record.objective < best.objective:
            best = record

    diagnostics = SelectionDiagnostics(
        mode="adaptive", chosen_j=best.j, j_max=j_max, s_n=s_n, delta=delta, records=records
    )
    logger.info(f"Selected j={best.j} of J={j_max} (n={n}, s_n={s_n:.4g})")
    return best.j, diagnostics


def estimate(
    samples: SampleSet,
    config: EstimatorConfig,
    model: Optional[DensityModel] = None
) -> Tuple[GridSet, SelectionDiagnostics]:
    """
    Level set estimate at the configured, oracle, support or adaptive resolution.

    A fixed j wins; gamma = 0 routes to support estimation; a known alpha
    uses the oracle resolution; otherwise the resolution is selected from
    the data.
    """
    delta, s_n, budget = _resolve(samples, config)
    n, d = samples.n, samples.d

    if config.j_fixed is not None:
        mode, j = "fixed", config.j_fixed
    elif config.gamma == 0:
        mode, j = "support", support_resolution(n, d, config.alpha, s_n)
    elif config.alpha is not None:
        mode, j = "oracle", oracle_resolution(n, d, config.alpha, s_n)
    else:
        j, diagnostics = select_resolution(samples, config, model)
        h = build_histogram(samples, j, budget)
        return plug_in_level_set(h, config.gamma), diagnostics

    h = build_histogram(samples, j, budget)
    estimate_set = support_set_estimate(h) if config.gamma == 0 else plug_in_level_set(h, config.gamma)
    logger.info(f"Estimated at j={j} ({mode}, n={n}): {len(estimate_set)} cells")
    diagnostics = SelectionDiagnostics(mode=mode, chosen_j=j, s_n=s_n, delta=delta)
    return estimate_set, diagnostics
