"""FastAPI application entry point"""
from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware

from hauslev.config import get_settings
from hauslev.exceptions import (
    HauslevError,
    generic_exception_handler,
    hauslev_error_handler,
    validation_exception_handler,
)
from hauslev.logging_config import get_logger, setup_logging
from hauslev.routers import health, levelset

# Initialize settings
settings = get_settings()

# Setup logging
setup_logging(log_level="DEBUG" if settings.debug else settings.log_level, log_file=settings.log_file or None)
logger = get_logger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan manager.

    Handles startup and shutdown events.
    """
    logger.info(f"Starting {settings.app_name} v{settings.app_version}")
    logger.info(f"Cell budget: {settings.cell_budget}")

    yield

    logger.info(f"Shutting down {settings.app_name}")


app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="""
    Hausdorff-accurate density level set estimation.

    Histogram plug-in estimates of {x : f(x) >= gamma} on dyadic partitions
    of [0,1]^d, with the resolution chosen from the data.

    ## Endpoints

    - **Estimate**: level set (or support set, gamma = 0) from posted samples, with the selection trace
    - **Hausdorff**: distance between two grid sets
    - **Sample**: draws from a synthetic density with a known level set
    """,
    lifespan=lifespan,
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json"
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.cors_origins,
    allow_credentials=settings.cors_allow_credentials,
    allow_methods=settings.cors_allow_methods,
    allow_headers=settings.cors_allow_headers,
)

# Register exception handlers
app.add_exception_handler(HauslevError, hauslev_error_handler)
app.add_exception_handler(RequestValidationError, validation_exception_handler)
app.add_exception_handler(Exception, generic_exception_handler)

# Include routers
app.include_router(health.router)
app.include_router(levelset.router)


@app.get("/", include_in_schema=False)
async def root():
    """Root endpoint"""
    return {
        "message": f"Welcome to {settings.app_name}",
        "version": settings.app_version,
        "docs": "/docs",
        "health": "/health"
    }
