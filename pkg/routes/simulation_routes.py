# routes/simulation_routes.py

from fastapi import APIRouter, Depends

from spde.cli import cmd_simulate
from spde.config import ExperimentConfig
from storage import ArtifactStore, RunManifest, get_artifact_store


router = APIRouter(
    prefix="/simulations",
    tags=["Simulations"]
)


@router.post("/", response_model=RunManifest)
def create_simulation(config: ExperimentConfig,
                      store: ArtifactStore = Depends(get_artifact_store)):
    """
    Solves one realisation (path 0) and writes the field, the noise slab and
    the homogeneous field next to a checksummed manifest.
    """
    run_store = store.child(f"simulate-{config.config_hash()[:12]}")
    return cmd_simulate(config, run_store)
