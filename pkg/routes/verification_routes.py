# routes/verification_routes.py

from typing import Literal, Optional

from fastapi import APIRouter, Depends, Query
from pydantic import BaseModel, Field

from spde.cli import VerificationReport, cmd_verify
from spde.config import ExperimentConfig
from spde.kernels import kernel_energy, kernel_energy_closed_form, kernel_spec
from spde.noise import riesz_constant
from storage import ArtifactStore, RunManifest, get_artifact_store


router = APIRouter(
    prefix="/verifications",
    tags=["Verifications"]
)

oracle_router = APIRouter(tags=["Oracles"])

# --- Pydantic Schemas ---


class VerificationResponse(BaseModel):
    manifest: RunManifest
    report: VerificationReport
    status: str = Field(..., description="PASS or FAIL; a FAIL is still a 200 response.")


class KernelEnergyResponse(BaseModel):
    kind: str
    h: float
    H: float
    energy: float
    closed_form: float


class RieszConstantResponse(BaseModel):
    H: float
    c_H: float

# --- API Endpoints ---


@router.post("/{suite}", response_model=VerificationResponse)
def run_verification(suite: Literal["noise", "kernels", "picard", "property_p"],
                     config: ExperimentConfig,
                     recursion_ratio: Optional[float] = Query(None, ge=0),
                     store: ArtifactStore = Depends(get_artifact_store)):
    run_store = store.child(f"verify-{suite}-{config.config_hash()[:12]}")
    manifest, report = cmd_verify(config, suite, run_store, recursion_ratio=recursion_ratio)
    return VerificationResponse(manifest=manifest, report=report, status=report.status)


@oracle_router.get("/kernels/energy", response_model=KernelEnergyResponse)
def get_kernel_energy(kind: Literal["wave", "heat"] = Query(...),
                      h: float = Query(..., gt=0),
                      H: float = Query(..., gt=0.25, lt=0.5)):
    kernel = kernel_spec(kind, H)
    return KernelEnergyResponse(kind=kind, h=h, H=H, energy=kernel_energy(kernel, h, H),
                                closed_form=kernel_energy_closed_form(kind, h, H))


@oracle_router.get("/noise/riesz-constant", response_model=RieszConstantResponse)
def get_riesz_constant(H: float = Query(..., gt=0, lt=1)):
    return RieszConstantResponse(H=H, c_H=riesz_constant(H))
