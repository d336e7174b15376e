"""
FastAPI main application entry point for the long-memory regression toolkit.
"""

import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api import analysis, health
from app.config import settings
from app.services.exceptions import LMRegressionError, PipelineStageError
from app.services.service_manager import service_manager

# Configure logging
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper()),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """
    Application lifespan manager for startup and shutdown tasks.
    """
    logger.info(f"Starting {settings.app_name}...")
    try:
        if await service_manager.initialize_services():
            logger.info("All services initialized successfully")
        else:
            logger.warning("Numerical self-check failed - results may be unreliable")
        logger.info("Application startup completed")
    except Exception as e:
        logger.error(f"Failed to initialize application: {str(e)}")

    yield

    logger.info(f"Shutting down {settings.app_name}...")
    try:
        await service_manager.shutdown_services()
        logger.info("Application shutdown completed")
    except Exception as e:
        logger.error(f"Error during application shutdown: {str(e)}")


app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Estimation and lack-of-fit testing for regression with long-memory design and errors",
    debug=settings.debug,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(LMRegressionError)
async def toolkit_error_handler(request: Request, exc: LMRegressionError) -> JSONResponse:
    """Map toolkit errors to 422 with the class name of the root cause."""
    cause = exc.cause if isinstance(exc, PipelineStageError) else exc
    logger.warning(f"{request.url.path}: {type(cause).__name__}: {exc}")
    return JSONResponse(status_code=422, content={"detail": str(exc), "error": type(cause).__name__})


app.include_router(health.router, prefix="/api", tags=["health"])
app.include_router(analysis.router, prefix="/api", tags=["analysis"])


@app.get("/api")
async def api_info():
    """API information endpoint."""
    return {
        "service": settings.app_name,
        "version": settings.app_version,
        "status": "running",
        "endpoints": {
            "health": "/api/health",
            "detailed_health": "/api/health/detailed",
            "system_stats": "/api/health/stats",
            "simulate": "/api/simulate",
            "fit": "/api/fit",
            "whittle": "/api/whittle",
            "goftest": "/api/goftest",
            "z2": "/api/z2",
            "kappa2": "/api/kappa2",
            "bandwidth_range": "/api/bandwidth-range"
        },
        "documentation": {
            "swagger_ui": "/docs",
            "redoc": "/redoc",
            "openapi_json": "/openapi.json"
        }
    }


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(
        "app.main:app",
        host="localhost",
        port=8000,
        reload=settings.debug,
        log_level=settings.log_level.lower()
    )
