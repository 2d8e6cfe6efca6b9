# routes/moment_routes.py

from typing import List, Literal, Optional, Tuple

from fastapi import APIRouter, Depends
from pydantic import BaseModel, ConfigDict, Field

from spde.cli import cmd_moments
from spde.config import ExperimentConfig
from spde.regularity import KolmogorovReport, MomentRow, MomentTable, fit_exponent
from storage import ArtifactStore, RunManifest, get_artifact_store


router = APIRouter(
    prefix="/moments",
    tags=["Moments"]
)

# --- Pydantic Schemas ---


class MomentRowSchema(BaseModel):
    h: float = Field(..., gt=0)
    moment: float
    stderr: float = Field(0.0, ge=0)
    n_paths: int = Field(1, ge=1)
    n_grid_points: int = Field(0, ge=0)
    model_config = ConfigDict(from_attributes=True)


class MomentTableSchema(BaseModel):
    direction: Literal["space", "time"]
    p: float = Field(..., ge=2)
    kind: str = ""
    H: Optional[float] = None
    rows: List[MomentRowSchema]
    model_config = ConfigDict(from_attributes=True)


class ExponentFitResponse(BaseModel):
    direction: str
    p: float
    slope: float
    intercept: float
    slope_stderr: float
    r_squared: float
    exponent: float
    ci95: Tuple[float, float]
    n_points: int
    model_config = ConfigDict(from_attributes=True)


class MomentsResponse(BaseModel):
    manifest: RunManifest
    tables: List[MomentTableSchema]
    fits: List[ExponentFitResponse]
    report: KolmogorovReport
    status: str

# --- API Endpoints ---


@router.post("/", response_model=MomentsResponse)
def estimate_moments(config: ExperimentConfig,
                     store: ArtifactStore = Depends(get_artifact_store)):
    run_store = store.child(f"moments-{config.config_hash()[:12]}")
    manifest, tables, fits, report = cmd_moments(config, run_store)
    return MomentsResponse(
        manifest=manifest,
        tables=[MomentTableSchema.model_validate(t) for t in tables],
        fits=[ExponentFitResponse.model_validate(f) for f in fits],
        report=report,
        status=report.status,
    )


@router.post("/fit", response_model=ExponentFitResponse)
def fit_moment_table(payload: MomentTableSchema):
    """Weighted log-log fit of a posted table (t interval only; no per-path values)."""
    table = MomentTable(
        direction=payload.direction, p=payload.p, kind=payload.kind,
        H=payload.H if payload.H is not None else float("nan"),
        rows=[MomentRow(r.h, r.moment, r.stderr, r.n_paths, r.n_grid_points)
              for r in payload.rows],
    )
    return ExponentFitResponse.model_validate(fit_exponent(table))
