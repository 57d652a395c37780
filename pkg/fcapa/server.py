from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from contextlib import asynccontextmanager
import os
from pathlib import Path
from dotenv import load_dotenv
import structlog

from .models.settings import Settings
from .services.config import load_settings
from .services.errors import FcapaError
from .services.logging_setup import configure_logging

# Import routes
from .routes.solve import router as solve_router
from .routes.sweeps import router as sweeps_router

ROOT_DIR = Path(__file__).parent
load_dotenv(ROOT_DIR / '.env')

configure_logging(os.environ.get("FCAPA_LOG_LEVEL", "INFO"), os.environ.get("FCAPA_LOG_JSON", "").lower() == "true")
logger = structlog.get_logger(__name__)

VERSION = "1.0.0"


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info("Starting up FCAPA optimization API")
    yield
    logger.info("Shutting down FCAPA optimization API")

# Create the main app
app = FastAPI(
    title="FCAPA Optimization API",
    description="Weighted-sum-rate optimization for flexible continuous aperture arrays and their baselines",
    version=VERSION,
    lifespan=lifespan
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include API routes with /api prefix
app.include_router(solve_router, prefix="/api")
app.include_router(sweeps_router, prefix="/api")


@app.get("/")
async def root():
    return {
        "message": f"FCAPA Optimization API v{VERSION}",
        "docs": "/docs",
        "status": "running"
    }


@app.get("/api")
async def api_root():
    return {
        "message": f"FCAPA Optimization API v{VERSION}",
        "version": VERSION,
        "endpoints": {
            "solve": "/api/solve/",
            "sweeps": "/api/sweeps/",
            "defaults": "/api/defaults",
            "health": "/api/health"
        }
    }


@app.get("/api/health")
async def health_check():
    return {"status": "healthy"}


@app.get("/api/defaults", response_model=Settings)
async def defaults():
    """Effective settings: built-in defaults with FCAPA_* environment overrides"""
    try:
        return load_settings()
    except FcapaError as e:
        logger.error("Invalid environment settings", error=str(e))
        return Settings()


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8001)
