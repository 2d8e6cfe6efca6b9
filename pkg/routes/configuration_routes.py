# routes/configuration_routes.py

from fastapi import APIRouter
from pydantic import BaseModel, Field

from spde.config import ExperimentConfig


router = APIRouter(
    prefix="/configurations",
    tags=["Configurations"]
)

# --- Pydantic Schemas ---


class ConfigurationResponse(BaseModel):
    config: ExperimentConfig
    ini: str = Field(..., description="Canonical INI text of the configuration.")
    config_hash: str = Field(..., description="SHA-256 of the INI without run-local keys.")


def describe(config: ExperimentConfig) -> ConfigurationResponse:
    return ConfigurationResponse(config=config, ini=config.to_ini(),
                                 config_hash=config.config_hash())

# --- API Endpoints ---


@router.get("/default", response_model=ConfigurationResponse)
def get_default_configuration():
    return describe(ExperimentConfig())


@router.post("/validate", response_model=ConfigurationResponse)
def validate_configuration(config: ExperimentConfig):
    """
    Re-validates every component and returns the canonical form.
    Invalid bodies are rejected with 422 before reaching this handler.
    """
    return describe(config)
