"""
Synthetic densities on [0,1]^d with known level sets and tunable regularity.

Every shape model has the form

    f(x) = max(0, gamma + a * s(x) * min(rho(x), r_cap)^alpha)

where rho is the distance to the boundary of the shape region G, s is +1 on
the closed region and -1 outside, and the amplitude a is solved so that f
integrates to one. The level set {f >= gamma} is then G itself.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize

from hauslev.config import get_settings
from hauslev.exceptions import DomainError, ModelConstructionError, NumericError, ResourceBudgetError
from hauslev.logging_config import get_logger
from hauslev.models import ModelSpec
from hauslev.services.grid import DyadicGrid, GridSet

logger = get_logger(__name__)

# dimension -> (panel level, Gauss-Legendre points per panel axis)
QUADRATURE_RULES: Dict[int, Tuple[int, int]] = {1: (16, 4), 2: (9, 4), 3: (6, 3)}

_CHUNK_CELLS = 1 << 16
_GEOMETRY_TOL = 1e-12


@dataclass(frozen=True)
class BallComponent:
    """Closed ball; an interval when d = 1"""

    center: Tuple[float, ...]
    radius: float

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        offsets = points - np.asarray(self.center)
        return self.radius - np.sqrt(np.sum(offsets ** 2, axis=1))

    @property
    def inradius(self) -> float:
        return self.radius

    def boundary_point(self) -> Tuple[float, ...]:
        return (self.center[0] - self.radius,) + tuple(self.center[1:])


@dataclass(frozen=True)
class SlabComponent:
    """{x : |x_1 - center| <= width / 2}, spanning the other axes"""

    center: float
    width: float
    d: int

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        return 0.5 * self.width - np.abs(points[:, 0] - self.center)

    @property
    def inradius(self) -> float:
        return 0.5 * self.width

    def boundary_point(self) -> Tuple[float, ...]:
        return (self.center - 0.5 * self.width,) + (0.5,) * (self.d - 1)


Component = BallComponent | SlabComponent


@dataclass(frozen=True)
class SampleSet:
    """n i.i.d. draws in [0,1]^d and the seed that produced them"""

    d: int
    n: int
    points: np.ndarray
    seed: int
    acceptance_rate: Optional[float] = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape != (self.n, self.d):
            raise DomainError(f"expected {self.n} points of dimension {self.d}, got shape {points.shape}")
        if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
            raise DomainError("sample coordinates must lie in [0, 1]")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]], seed: int = 0) -> "SampleSet":
        array = np.asarray(points, dtype=float)
        if array.ndim != 2:
            raise DomainError("points must be a two-dimensional array")
        return cls(d=array.shape[1], n=array.shape[0], points=array, seed=seed)


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the regularity assumptions achieved by a model"""

    c1: float
    c2: float
    delta1: float
    delta2: float
    x0: Tuple[float, ...]
    epsilon_o: float


@dataclass(frozen=True, eq=False)
class DensityModel:
    """A normalized synthetic density; build through make_model"""

    spec: ModelSpec
    components: Tuple[Component, ...]
    r_cap: float
    amplitude: float
    f_max: float
    constants: ModelConstants
    normalization_residual: float
    quadrature_error: float
    _mass_cache: Dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def gamma(self) -> float:
        return self.spec.gamma

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def shape(self) -> str:
        return self.spec.shape

    @property
    def baseline(self) -> float:
        """Density value on the level set boundary"""
        return self.gamma

    @property
    def is_uniform(self) -> bool:
        return self.shape == "uniform"

    def __getstate__(self):
        state = dict(self.__dict__)
        state["_mass_cache"] = {}
        return state

    def __setstate__(self, state):
        for key, value in state.items():
            object.__setattr__(self, key, value)

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance to the boundary, positive on the region and negative outside"""
        if self.is_uniform:
            inside = math.inf if self.gamma <= 1.0 else -math.inf
            return np.full(points.shape[0], 0.0 if self.gamma == 1.0 else inside)
        distances = np.stack([c.signed_distance(points) for c in self.components], axis=0)
        return np.max(distances, axis=0)

    def density(self, points: np.ndarray) -> np.ndarray:
        """Vectorized f on an (m x d) array of points in the domain"""
        points = _check_points(points, self.d)
        return _density_from_profile(self, self._profile(points))

    def _profile(self, points: np.ndarray) -> np.ndarray:
        """s(x) * min(rho(x), r_cap)^alpha"""
        if self.is_uniform:
            return np.zeros(points.shape[0])
        sd = self.signed_distance(points)
        sign = np.where(sd >= 0.0, 1.0, -1.0)
        return sign * np.minimum(np.abs(sd), self.r_cap) ** self.alpha

    def level_mask(self, points: np.ndarray) -> np.ndarray:
        """f(x) >= gamma, evaluated through the sign of the boundary distance"""
        if self.is_uniform:
            return np.full(points.shape[0], 1.0 >= self.gamma)
        return self.signed_distance(points) >= 0.0

    def cell_masses(self, j: int) -> np.ndarray:
        """
        P(A) for every cell of resolution j, as a dense array of the grid shape.

        Raises:
            NumericError: the two quadrature refinements disagree by more than
                quadrature_tol in total mass
            ResourceBudgetError: too many cells
        """
        if j in self._mass_cache:
            return self._mass_cache[j]
        grid = DyadicGrid(self.d, j)
        budget = get_settings().cell_budget
        if grid.total_cells > budget:
            raise ResourceBudgetError(grid.total_cells, budget, f"cell masses at j={j}")

        level, points_per_axis = QUADRATURE_RULES[self.d]
        if self.is_uniform:
            masses = np.full(grid.shape, grid.cell_measure)
        else:
            base = max(j, level)
            masses = _aggregate(_masses_at(self, base, points_per_axis), base - j, self.d)
            refined = _aggregate(_masses_at(self, base + 1, points_per_axis), base + 1 - j, self.d)
            residual = float(np.sum(np.abs(masses - refined)))
            logger.debug(f"cell masses at j={j}: refinement residual {residual:.3g}")
            if residual > get_settings().quadrature_tol:
                raise NumericError(f"cell mass quadrature did not converge at j={j}", residual)
        masses.setflags(write=False)
        self._mass_cache[j] = masses
        return masses

    def cell_averages(self, j: int) -> np.ndarray:
        """fbar(A) = P(A) / mu(A)"""
        return self.cell_masses(j) / DyadicGrid(self.d, j).cell_measure


def _check_points(points, d: int) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.shape[1] != d:
        raise DomainError(f"expected points of dimension {d}, got {points.shape[1]}")
    if not np.all(np.isfinite(points)) or np.any(points < 0.0) or np.any(points > 1.0):
        raise DomainError("point coordinates must lie in [0, 1]")
    return points


def _density_from_profile(model: DensityModel, profile: np.ndarray) -> np.ndarray:
    if model.is_uniform:
        return np.ones_like(profile)
    return np.maximum(0.0, model.gamma + model.amplitude * profile)


def _cell_rule(d: int, points_per_axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre offsets (in cell units) and weights on the unit cube"""
    nodes, weights = leggauss(points_per_axis)
    nodes = 0.5 * (nodes + 1.0)
    weights = 0.5 * weights
    mesh = np.meshgrid(*([nodes] * d), indexing="ij")
    offsets = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*([weights] * d), indexing="ij")
    return offsets, np.prod(np.stack([w.ravel() for w in wmesh], axis=1), axis=1)


def _profile_on_cells(model: DensityModel, level: int, points_per_axis: int) -> Tuple[np.ndarray, np.ndarray]:
    """Profile values at every quadrature node of level `level`, (cells x nodes), and node weights"""
    grid = DyadicGrid(model.d, level)
    offsets, weights = _cell_rule(model.d, points_per_axis)
    values = np.empty((grid.total_cells, offsets.shape[0]))
    for start in range(0, grid.total_cells, _CHUNK_CELLS):
        stop = min(start + _CHUNK_CELLS, grid.total_cells)
        cells = grid.unravel(np.arange(start, stop, dtype=np.int64)).astype(float)
        nodes = (cells[:, None, :] + offsets[None, :, :]) * grid.sidelength
        values[start:stop] = model._profile(nodes.reshape(-1, model.d)).reshape(stop - start, -1)
    return values, weights * grid.cell_measure


def _masses_at(model: DensityModel, level: int, points_per_axis: int) -> np.ndarray:
    grid = DyadicGrid(model.d, level)
    offsets, weights = _cell_rule(model.d, points_per_axis)
    weights = weights * grid.cell_measure
    masses = np.empty(grid.total_cells)
    for start in range(0, grid.total_cells, _CHUNK_CELLS):
        stop = min(start + _CHUNK_CELLS, grid.total_cells)
        cells = grid.unravel(np.arange(start, stop, dtype=np.int64)).astype(float)
        nodes = (cells[:, None, :] + offsets[None, :, :]) * grid.sidelength
        profile = model._profile(nodes.reshape(-1, model.d)).reshape(stop - start, -1)
        masses[start:stop] = _density_from_profile(model, profile) @ weights
    return masses.reshape(grid.shape)


def _aggregate(masses: np.ndarray, levels: int, d: int) -> np.ndarray:
    """Sum 2^(levels d) children into their ancestors"""
    if levels == 0:
        return masses
    side = masses.shape[0] >> levels
    factor = 1 << levels
    shape = []
    for _ in range(d):
        shape.extend([side, factor])
    return masses.reshape(shape).sum(axis=tuple(range(1, 2 * d, 2)))


def _build_components(spec: ModelSpec) -> Tuple[Component, ...]:
    d = spec.d
    if spec.shape == "uniform":
        return ()
    if spec.shape == "interval" and d != 1:
        raise ModelConstructionError("shape 'interval' needs d = 1; use 'ball' in higher dimensions")

    if spec.shape == "ribbon":
        width = spec.width if spec.width is not None else 1.0 / 64.0
        center = spec.center[0] if spec.center else 0.5
        if center - width / 2 < 0.0 or center + width / 2 > 1.0:
            raise ModelConstructionError(f"ribbon of width {width} at {center} leaves the domain")
        return (SlabComponent(center=center, width=width, d=d),)

    if spec.shape == "two-component":
        radius = spec.radius if spec.radius is not None else 0.1
        if spec.center:
            if len(spec.center) != 2 * d:
                raise ModelConstructionError(f"two-component center needs {2 * d} coordinates")
            centers = [tuple(spec.center[:d]), tuple(spec.center[d:])]
        else:
            centers = [(0.2,) * d, (0.8,) * d]
        components = tuple(BallComponent(center=c, radius=radius) for c in centers)
        gap = math.dist(centers[0], centers[1]) - 2 * radius
        if gap < 4 * radius - _GEOMETRY_TOL:
            raise ModelConstructionError(
                f"components are {gap:.4g} apart, need at least 4 * inradius = {4 * radius:.4g}"
            )
    else:
        radius = spec.radius if spec.radius is not None else 0.25
        center = tuple(spec.center) if spec.center else (0.5,) * d
        if len(center) != d:
            raise ModelConstructionError(f"center needs {d} coordinates, got {len(center)}")
        components = (BallComponent(center=center, radius=radius),)

    for component in components:
        for c in component.center:
            if c - component.radius < -_GEOMETRY_TOL or c + component.radius > 1.0 + _GEOMETRY_TOL:
                raise ModelConstructionError(
                    f"component at {component.center} with radius {component.radius} leaves [0,1]^{d}"
                )
    return components


def _solve_amplitude(profile: np.ndarray, weights: np.ndarray, gamma: float, scale: float) -> float:
    """Smallest a > 0 with Q[max(0, gamma + a u)] = 1 for the fixed rule (profile, weights)"""

    def excess(a: float) -> float:
        return float(np.maximum(0.0, gamma + a * profile) @ weights) - 1.0

    candidates = scale * np.power(2.0, np.arange(-16, 24))
    values = [excess(a) for a in candidates]
    tol = 1e-12

    previous_a, previous_v = candidates[0], values[0]
    if abs(gamma - 1.0) > tol:
        previous_a, previous_v = 0.0, excess(0.0)
    for a, v in zip(candidates, values):
        if abs(previous_v) > tol and abs(v) > tol and previous_v * v < 0:
            return optimize.brentq(excess, previous_a, a, xtol=1e-15, rtol=1e-14, maxiter=200)
        if abs(v) <= tol and abs(previous_v) > tol:
            return float(a)
        previous_a, previous_v = a, v

    if all(abs(v) <= tol for v in values[:8]):
        return 0.5 * scale
    bracket = ", ".join(f"Q({a:.3g})-1={v:.3g}" for a, v in zip(candidates[::8], values[::8]))
    raise ModelConstructionError(f"no amplitude a > 0 normalizes the density ({bracket})")


def _constants(spec: ModelSpec, components, amplitude: float, r_cap: float) -> ModelConstants:
    d, gamma, alpha = spec.d, spec.gamma, spec.alpha
    if spec.shape == "uniform":
        return ModelConstants(c1=0.0, c2=0.0, delta1=0.0, delta2=math.sqrt(d), x0=(0.0,) * d, epsilon_o=0.5)
    epsilon_o = min(c.inradius for c in components)
    x0 = components[0].boundary_point()
    if alpha == 0:
        inside = amplitude
        outside = gamma - max(0.0, gamma - amplitude)
        if gamma == 0:
            outside = inside
        c1, c2 = min(inside, outside), max(inside, outside)
        return ModelConstants(c1=c1, c2=c2, delta1=c1, delta2=math.sqrt(d), x0=x0, epsilon_o=epsilon_o)
    peak = amplitude * r_cap ** alpha
    delta1 = 0.5 * peak if gamma == 0 else 0.5 * min(gamma, peak)
    return ModelConstants(
        c1=amplitude, c2=amplitude, delta1=delta1, delta2=math.sqrt(d), x0=x0, epsilon_o=epsilon_o
    )


def model_from_spec(spec: ModelSpec) -> DensityModel:
    """
    Build and normalize the density described by a ModelSpec.

    With alpha = 0 the profile is a step: f is gamma + a inside the target set
    and max(0, gamma - a) outside, so the outer value is clipped to 0 when
    gamma < a.

    Raises:
        ModelConstructionError: inadmissible geometry or no normalizing amplitude
    """
    components = _build_components(spec)
    level, points_per_axis = QUADRATURE_RULES[spec.d]

    if spec.shape == "uniform":
        model = DensityModel(
            spec=spec, components=(), r_cap=0.0, amplitude=0.0, f_max=1.0,
            constants=_constants(spec, (), 0.0, 0.0), normalization_residual=0.0, quadrature_error=0.0,
        )
        logger.info(f"Built uniform model on [0,1]^{spec.d} (gamma={spec.gamma})")
        return model

    inradius = min(c.inradius for c in components)
    r_cap = spec.r_cap if spec.r_cap is not None else 0.5 * inradius
    draft = DensityModel(
        spec=spec, components=components, r_cap=r_cap, amplitude=0.0, f_max=1.0,
        constants=_constants(spec, components, 1.0, r_cap), normalization_residual=0.0, quadrature_error=0.0,
    )

    profile, weights = _profile_on_cells(draft, level, points_per_axis)
    profile, weights = profile.ravel(), np.tile(weights, profile.shape[0])
    scale = max(spec.gamma, 1.0) / r_cap ** spec.alpha
    amplitude = _solve_amplitude(profile, weights, spec.gamma, scale)
    residual = float(np.maximum(0.0, spec.gamma + amplitude * profile) @ weights) - 1.0

    coarse_profile, coarse_weights = _profile_on_cells(draft, level - 1, points_per_axis)
    coarse = float(np.maximum(0.0, spec.gamma + amplitude * coarse_profile).ravel()
                   @ np.tile(coarse_weights, coarse_profile.shape[0]))
    quadrature_error = abs(coarse - 1.0 - residual)

    reach = min(r_cap, max(c.inradius for c in components))
    f_max = spec.gamma + amplitude * reach ** spec.alpha

    model = DensityModel(
        spec=spec,
        components=components,
        r_cap=r_cap,
        amplitude=amplitude,
        f_max=f_max,
        constants=_constants(spec, components, amplitude, r_cap),
        normalization_residual=residual,
        quadrature_error=quadrature_error,
    )
    logger.info(
        f"Built {spec.shape} model d={spec.d} gamma={spec.gamma} alpha={spec.alpha}: "
        f"a={amplitude:.6g}, f_max={f_max:.6g}, residual={residual:.2e}"
    )
    return model


def make_model(
    d: int = 1,
    gamma: float = 0.8,
    alpha: float = 1.0,
    shape: str = "interval",
    **geometry
) -> DensityModel:
    """Convenience wrapper around model_from_spec"""
    return model_from_spec(ModelSpec(shape=shape, d=d, gamma=gamma, alpha=alpha, **geometry))


def density_at(model: DensityModel, point: Sequence[float]) -> float:
    """f at one point of [0,1]^d"""
    return float(model.density(np.asarray(point, dtype=float).reshape(1, -1))[0])


def boundary_distance(model: DensityModel, point: Sequence[float]) -> float:
    """rho(x, boundary of the level set)"""
    points = _check_points(np.asarray(point, dtype=float).reshape(1, -1), model.d)
    return float(abs(model.signed_distance(points)[0]))


def true_level_set(model: DensityModel, j: int) -> GridSet:
    """Cells of resolution j whose center lies in the level set"""
    grid = DyadicGrid(model.d, j)
    budget = get_settings().cell_budget
    if grid.total_cells > budget:
        raise ResourceBudgetError(grid.total_cells, budget, f"rasterizing the level set at j={j}")
    return GridSet.from_predicate(grid, model.level_mask)


def sample(model: DensityModel, n: int, seed: int) -> SampleSet:
    """
    n exact draws by rejection from uniform proposals on [0,1]^d.

    A proposal x is kept when u * f_max < f(x); batches are sized from the
    expected acceptance so the stream of draws depends only on the seed.
    """
    if n < 1:
        raise DomainError(f"sample size must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    batches: List[np.ndarray] = []
    accepted = 0
    proposed = 0
    expected_rate = 1.0 / model.f_max

    while accepted < n:
        needed = n - accepted
        size = max(1024, int(math.ceil(1.2 * needed / expected_rate)))
        proposals = rng.random((size, model.d))
        u = rng.random(size)
        keep = np.flatnonzero(u * model.f_max < model.density(proposals))
        if keep.size >= needed:
            keep = keep[:needed]
            proposed += int(keep[-1]) + 1
        else:
            proposed += size
        batches.append(proposals[keep])
        accepted += keep.size

    points = np.concatenate(batches, axis=0)
    return SampleSet(d=model.d, n=n, points=points, seed=seed, acceptance_rate=n / proposed)


def empirical_cell_masses(samples: SampleSet, j: int) -> np.ndarray:
    """Phat(A) for every cell at resolution j, dense"""
    grid = DyadicGrid(samples.d, j)
    counts = np.bincount(grid.ravel(grid.locate_many(samples.points)), minlength=grid.total_cells)
    return (counts / samples.n).reshape(grid.shape)


@dataclass
class AssumptionCheck:
    """Outcome of the grid-scale regularity checks"""

    level: int
    a1_points: int
    a1_passed: bool
    a1_worst_ratio: float
    a2_points: int
    a2_passed: bool
    a2_worst_ratio: float
    f_min: float
    f_max: float
    vacuous: bool


def check_assumptions(model: DensityModel, level: Optional[int] = None, rtol: float = 1e-9) -> AssumptionCheck:
    """
    Check f in [0, f_max] and the lower/upper regularity bounds on grid centers.

    The lower bound C1 rho^alpha <= |f - gamma| is checked where
    |f - gamma| <= delta1 (inside the region only when gamma = 0), the upper
    bound |f - gamma| <= C2 rho^alpha inside B(x0, delta2).
    """
    if level is None:
        level = {1: 14, 2: 9, 3: 6}[model.d]
    grid = DyadicGrid(model.d, level)
    points = grid.centers(grid.unravel(np.arange(grid.total_cells, dtype=np.int64)))
    f = model.density(points)
    deviation = np.abs(f - model.gamma)
    rho = np.abs(model.signed_distance(points))
    c = model.constants
    alpha = model.alpha

    power = np.where(np.isfinite(rho), rho, 0.0) ** alpha
    near = deviation <= c.delta1
    if model.gamma == 0:
        near &= model.level_mask(points)
    lower = c.c1 * power[near]
    a1_ok = np.all(lower <= deviation[near] * (1 + rtol) + rtol)
    a1_ratio = float(np.min(deviation[near] / np.maximum(lower, 1e-300))) if near.any() else math.inf

    ball = np.sqrt(np.sum((points - np.asarray(c.x0)) ** 2, axis=1)) <= c.delta2
    upper = c.c2 * power[ball]
    a2_ok = np.all(deviation[ball] <= upper * (1 + rtol) + rtol)
    a2_ratio = float(np.max(deviation[ball] / np.maximum(upper, 1e-300))) if ball.any() else 0.0

    return AssumptionCheck(
        level=level,
        a1_points=int(np.count_nonzero(near)),
        a1_passed=bool(a1_ok),
        a1_worst_ratio=a1_ratio,
        a2_points=int(np.count_nonzero(ball)),
        a2_passed=bool(a2_ok),
        a2_worst_ratio=a2_ratio,
        f_min=float(np.min(f)),
        f_max=float(np.max(f)),
        vacuous=model.is_uniform or c.c1 == 0.0,
    )
