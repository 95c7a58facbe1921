"""Service layer behind the HTTP routers"""
from functools import lru_cache
from typing import Dict

from hauslev.config import Settings, get_settings
from hauslev.formats import gridset_from_payload, gridset_to_payload
from hauslev.logging_config import get_logger
from hauslev.models import (
    EstimateRequest,
    EstimateResponse,
    HausdorffRequest,
    HausdorffResponse,
    ModelSpec,
    SampleRequest,
    SampleResponse,
)
from hauslev.services.estimator import estimate
from hauslev.services.grid import hausdorff
from hauslev.services.synth import DensityModel, SampleSet, model_from_spec, sample

logger = get_logger(__name__)


class LevelSetService:
    """
    Runs estimation, metric and sampling requests.

    Built models are cached per ModelSpec; normalizing a model is the
    expensive part of a sample request.
    """

    def __init__(self, settings: Settings):
        self.settings = settings
        self._models: Dict[str, DensityModel] = {}

    def model(self, spec: ModelSpec) -> DensityModel:
        key = spec.model_dump_json()
        if key not in self._models:
            self._models[key] = model_from_spec(spec)
        return self._models[key]

    def estimate(self, request: EstimateRequest) -> EstimateResponse:
        samples = SampleSet.from_points(request.points)
        budget = self.settings.cell_budget
        if request.config.cell_budget is not None:
            budget = min(budget, request.config.cell_budget)
        config = request.config.model_copy(update={"cell_budget": budget})
        logger.info(f"Estimate request: n={samples.n}, d={samples.d}, gamma={config.gamma}")
        estimate_set, diagnostics = estimate(samples, config)
        return EstimateResponse(estimate=gridset_to_payload(estimate_set), diagnostics=diagnostics)

    def hausdorff(self, request: HausdorffRequest) -> HausdorffResponse:
        a = gridset_from_payload(request.a)
        b = gridset_from_payload(request.b)
        return HausdorffResponse(distance=hausdorff(a, b))

    def sample(self, request: SampleRequest) -> SampleResponse:
        drawn = sample(self.model(request.model), request.n, request.seed)
        return SampleResponse(
            d=drawn.d,
            n=drawn.n,
            seed=drawn.seed,
            acceptance_rate=drawn.acceptance_rate,
            points=drawn.points.tolist(),
        )


@lru_cache()
def get_levelset_service() -> LevelSetService:
    """Get cached level set service instance"""
    return LevelSetService(get_settings())
