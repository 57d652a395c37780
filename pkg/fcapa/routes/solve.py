import time

from fastapi import APIRouter, HTTPException, status

from ..models.api import SolveRequest, SolveResponse
from ..services.config import load_settings
from ..services.errors import FcapaError
from ..services.experiments import build_scenario, run_scheme

router = APIRouter(prefix="/solve", tags=["solve"])


@router.post("/", response_model=SolveResponse)
def solve_scenario(request: SolveRequest):
    """Run one scheme on one scenario"""
    overrides = dict(request.overrides)
    if request.user_positions is not None:
        overrides["user_positions"] = request.user_positions

    started = time.perf_counter()
    try:
        settings = load_settings(overrides=overrides)
        scn = build_scenario(settings, request.realization)
        result = run_scheme(request.scheme, scn, settings)
    except FcapaError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=str(e)
        )

    return SolveResponse(
        scheme=result.scheme,
        arpu=result.arpu,
        rates=result.rates,
        iterations=result.iterations,
        power=result.power,
        wall_ms=1e3 * (time.perf_counter() - started),
        trace=result.trace,
    )
