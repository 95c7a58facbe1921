"""Level set estimation endpoint router"""
from fastapi import APIRouter, Depends, status
from fastapi.concurrency import run_in_threadpool

from hauslev.logging_config import get_logger
from hauslev.models import (
    EstimateRequest,
    EstimateResponse,
    ErrorResponse,
    HausdorffRequest,
    HausdorffResponse,
    SampleRequest,
    SampleResponse,
)
from hauslev.services.levelset_service import LevelSetService, get_levelset_service

router = APIRouter(prefix="/api/v1", tags=["level sets"])
logger = get_logger(__name__)

_ERRORS = {
    413: {"description": "The request would enumerate more cells than the cell budget", "model": ErrorResponse},
    422: {"description": "Validation error - invalid input", "model": ErrorResponse},
    500: {"description": "Numeric failure or internal error", "model": ErrorResponse},
}


@router.post(
    "/estimate",
    response_model=EstimateResponse,
    status_code=status.HTTP_200_OK,
    summary="Estimate a density level set",
    description="Plug-in histogram estimate of {f >= gamma} from samples in [0,1]^d",
    responses=_ERRORS,
)
async def estimate_level_set(
    request: EstimateRequest,
    service: LevelSetService = Depends(get_levelset_service)
) -> EstimateResponse:
    """
    Estimate the gamma-level set of the density behind the posted samples.

    The resolution is fixed, oracle (alpha given), support (gamma = 0) or
    selected from the data, in that order of precedence.
    """
    return await run_in_threadpool(service.estimate, request)


@router.post(
    "/hausdorff",
    response_model=HausdorffResponse,
    summary="Hausdorff distance between two grid sets",
    responses=_ERRORS,
)
async def hausdorff_distance(
    request: HausdorffRequest,
    service: LevelSetService = Depends(get_levelset_service)
) -> HausdorffResponse:
    return await run_in_threadpool(service.hausdorff, request)


@router.post(
    "/sample",
    response_model=SampleResponse,
    summary="Draw samples from a synthetic density",
    responses=_ERRORS,
)
async def sample_model(
    request: SampleRequest,
    service: LevelSetService = Depends(get_levelset_service)
) -> SampleResponse:
    logger.info(f"Sample request: {request.model.shape} d={request.model.d} n={request.n} seed={request.seed}")
    return await run_in_threadpool(service.sample, request)
