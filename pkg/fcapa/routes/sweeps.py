from fastapi import APIRouter, HTTPException, status

from ..models.api import SweepPoint, SweepRequest, SweepResponse
from ..models.experiment import SweepConfig
from ..services.config import load_settings
from ..services.errors import FcapaError
from ..services.experiments import run_sweep, summary_rows

router = APIRouter(prefix="/sweeps", tags=["sweeps"])


@router.post("/", response_model=SweepResponse)
def create_sweep(request: SweepRequest):
    """Run a small synchronous sweep and return records with per-point means"""
    try:
        settings = load_settings(overrides=request.overrides)
        records = run_sweep(SweepConfig(
            schemes=list(request.schemes),
            parameter=request.parameter,
            values=request.values,
            realizations=request.realizations,
            seed=request.seed,
            settings=settings,
        ))
    except FcapaError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=str(e)
        )

    summary = [SweepPoint(**row) for row in summary_rows(records)]
    return SweepResponse(parameter=request.parameter, records=records, summary=summary)
