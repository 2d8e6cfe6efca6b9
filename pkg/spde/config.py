# spde/config.py

import configparser
import hashlib
import io
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from spde.errors import GridError, ValidationError
from spde.kernels import InitialData, KernelSpec, kernel_spec, make_initial_data
from spde.noise import HurstParam, SpaceTimeGrid, default_half_width
from spde.solver import SigmaAffine

# Keys that only say where and how fast a run happens; they never enter the hash.
RUN_LOCAL_KEYS = {"workers", "out_dir", "plots"}
SECTIONS = ("noise", "grid", "kernels", "solver", "regularity", "run")


# --- Pydantic Schemas ---


class NoiseSection(BaseModel):
    H: float = Field(0.3, description="Hurst index of the spatial covariance.")
    allow_outside_hypothesis: bool = Field(
        False, description="Accept H in (0, 1/4] with a warning instead of an error.")
    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def _check_hurst(self):
        HurstParam(self.H, allow_outside=self.allow_outside_hypothesis)
        return self


class GridSection(BaseModel):
    L: Optional[float] = Field(None, gt=0, description="Half width; defaults to L_obs + T + 8 sqrt(T).")
    nx: int = Field(4096, description="Number of spatial nodes, a power of two.")
    T: float = Field(1.0, gt=0)
    nt: int = Field(1024, ge=1)
    L_obs: float = Field(0.5, gt=0, description="Half width of the observation window.")
    model_config = ConfigDict(populate_by_name=True)

    @property
    def half_width(self) -> float:
        return self.L if self.L is not None else default_half_width(self.L_obs, self.T)


class KernelsSection(BaseModel):
    kind: Literal["wave", "heat"] = Field("heat")
    init_family: Literal["weierstrass", "frozen_fbm", "bump", "constant", "linear", "zero"] = Field(
        "weierstrass")
    init_H: float = Field(0.3, gt=0, lt=1, description="Hölder order of rough initial data.")
    init_K: int = Field(30, description="Number of Weierstrass modes.")
    init_seed: int = Field(0, ge=0)
    init_c: float = Field(1.0, description="Value of constant initial data.")
    init_slope: float = Field(1.0, description="Slope of linear initial data.")
    init_v0: float = Field(0.0, description="Constant initial velocity (wave only).")
    model_config = ConfigDict(populate_by_name=True)


class SolverSection(BaseModel):
    a: float = Field(0.5, description="Slope of σ(x) = a x + b.")
    b: float = Field(1.0, description="Intercept of σ(x) = a x + b.")
    scheme: Literal["mild", "picard"] = Field("mild")
    n_iters: int = Field(5, ge=1)
    contraction_threshold: float = Field(0.5, gt=0)
    picard_ensemble: int = Field(16, ge=1)
    model_config = ConfigDict(populate_by_name=True)


class RegularitySection(BaseModel):
    directions: List[Literal["space", "time"]] = Field(default_factory=lambda: ["space", "time"])
    p_values: List[float] = Field(default_factory=lambda: [2.0, 4.0])
    h0: float = Field(0.25, gt=0, lt=1, description="Largest lag of the increment ladder.")
    n_lags: int = Field(6, ge=4)
    ramp_fraction: float = Field(0.125, ge=0, lt=1)
    tolerance: float = Field(0.05, gt=0)
    bootstrap_resamples: int = Field(400, ge=0)
    field_source: Literal["solution", "noise_trace"] = Field("solution")
    property_p_stride: int = Field(64, ge=1, description="Time rows per property-(P) slice.")
    model_config = ConfigDict(populate_by_name=True)

    @field_validator("directions", "p_values", mode="before")
    @classmethod
    def _split_list(cls, value):
        if isinstance(value, str):
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @field_validator("p_values")
    @classmethod
    def _check_p(cls, value):
        if not value or min(value) < 2:
            raise ValueError("p values must be >= 2")
        return value


class RunSection(BaseModel):
    paths: int = Field(2048, ge=1, description="Monte Carlo path count M.")
    seed: int = Field(0, ge=0, description="Master seed.")
    workers: int = Field(1, ge=1)
    out_dir: str = Field("runs")
    plots: bool = Field(False)
    model_config = ConfigDict(populate_by_name=True)


class ExperimentConfig(BaseModel):
    noise: NoiseSection = Field(default_factory=NoiseSection)
    grid: GridSection = Field(default_factory=GridSection)
    kernels: KernelsSection = Field(default_factory=KernelsSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    regularity: RegularitySection = Field(default_factory=RegularitySection)
    run: RunSection = Field(default_factory=RunSection)
    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def _check_components(self):
        grid = self.build_grid()
        if self.kernels.kind == "wave" and grid.dt > grid.dx:
            raise GridError("wave runs need dt <= dx", field="nt")
        reg = self.regularity
        if "time" in reg.directions and reg.h0 >= grid.T * (1.0 - reg.ramp_fraction):
            raise GridError(f"h0={reg.h0} leaves no room for time lags", field="h0")
        return self

    # --- builders ---

    def hurst(self) -> HurstParam:
        return HurstParam(self.noise.H, allow_outside=self.noise.allow_outside_hypothesis)

    def build_grid(self, refine: int = 0) -> SpaceTimeGrid:
        g = self.grid
        return SpaceTimeGrid(g.half_width, g.nx * 2 ** refine, g.T, g.nt, g.L_obs)

    def build_kernel(self) -> KernelSpec:
        return kernel_spec(self.kernels.kind, self.hurst())

    def build_init(self, grid: Optional[SpaceTimeGrid] = None) -> InitialData:
        k = self.kernels
        return make_initial_data(k.init_family, H=k.init_H, K=k.init_K, seed=k.init_seed,
                                 c=k.init_c, slope=k.init_slope,
                                 v0=k.init_v0 if k.kind == "wave" else None,
                                 grid=grid or self.build_grid())

    def build_sigma(self) -> SigmaAffine:
        return SigmaAffine(self.solver.a, self.solver.b)

    # --- text form ---

    def to_ini(self, include_run_local: bool = True) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for name in SECTIONS:
            section = getattr(self, name)
            values = {}
            for key, value in section.model_dump().items():
                if value is None or (not include_run_local and key in RUN_LOCAL_KEYS):
                    continue
                values[key] = _format_value(value)
            parser[name] = values
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini(include_run_local=False).encode()).hexdigest()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ValidationError(f"unreadable config: {exc}", field="config") from exc
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ValidationError(f"unknown sections {sorted(unknown)}", field="config")
        return cls.model_validate({name: dict(parser[name]) for name in parser.sections()})

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read {path}: {exc}", field="config") from exc
        return cls.from_ini(text)

    def with_overrides(self, overrides: list[str]) -> "ExperimentConfig":
        """Apply section.key=value patches and re-validate the whole config."""
        data = {name: getattr(self, name).model_dump(exclude_none=True) for name in SECTIONS}
        for item in overrides:
            key, sep, value = item.partition("=")
            section, dot, option = key.strip().partition(".")
            if not sep or not dot or section not in SECTIONS:
                raise ValidationError(f"override {item!r} is not section.key=value",
                                      field="override")
            if option not in type(getattr(self, section)).model_fields:
                raise ValidationError(f"unknown option {option!r} in [{section}]",
                                      field="override")
            data[section][option] = value.strip()
        return type(self).model_validate(data)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)
