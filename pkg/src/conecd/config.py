"""Experiment configuration schema (validated before any work is done)."""

from __future__ import annotations

import hashlib
import json
from typing import Any, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

TASKS = ("validate", "ot", "cd-check", "counterexample", "ricci-table", "hess-check", "spectral")
Task = Literal["validate", "ot", "cd-check", "counterexample", "ricci-table", "hess-check", "spectral"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DescriptorModel(_Strict):
    kind: Literal["circle", "sphere", "interval", "product"]
    resolution: int = Field(16, ge=2)
    radius: float = Field(1.0, gt=0)
    dim: int = Field(2, ge=1)
    length: float = Field(1.0, gt=0)
    factors: list["DescriptorModel"] = Field(default_factory=list)

    @model_validator(mode="after")
    def _product_needs_factors(self):
        if self.kind == "product" and not self.factors:
            raise ValueError("product needs at least one factor")
        return self


class KappaModel(_Strict):
    kappa: float


class ConeModel(_Strict):
    kind: Union[Literal["euclidean", "spherical"], KappaModel] = "euclidean"
    N: float = Field(1.0, ge=1)
    radial_cells: int = Field(16, ge=1)
    radius_max: float | None = Field(None, gt=0)

    def to_dict(self) -> dict:
        d = self.model_dump(exclude_none=True)
        return d


class CellRef(_Strict):
    """A cone cell by base index and radius (nearest cell is used)."""

    base_index: int = Field(ge=0)
    r: float = Field(ge=0)


class MeasureModel(_Strict):
    """Probability measure on the experiment space.

    uniform: uniform w.r.t. the reference weights (optionally on ``cells``);
    dirac: unit mass on ``center``; gaussian: density exp(-d(., center)^2 / 2 sigma^2).
    """

    type: Literal["uniform", "dirac", "gaussian"]
    center: Union[int, CellRef, None] = None
    sigma: float | None = Field(None, gt=0)
    cells: list[int] | None = None

    @model_validator(mode="after")
    def _fields_for_type(self):
        if self.type in ("dirac", "gaussian") and self.center is None:
            raise ValueError(f"{self.type} measure needs a center")
        if self.type == "gaussian" and self.sigma is None:
            raise ValueError("gaussian measure needs sigma")
        return self


class ExperimentConfig(_Strict):
    """Configuration for one ``conecd`` run.

    Only the fields a task reads are consulted; all fields are validated.
    """

    task: Task | None = None
    base: DescriptorModel | None = None
    cone: ConeModel | None = None
    mu0: MeasureModel | None = None
    mu1: MeasureModel | None = None
    K: float = 0.0
    N: float | None = Field(None, ge=1)
    Nprime: list[float] | None = None
    times: list[float] = Field(default_factory=lambda: [0.5])
    L: int = Field(1, ge=1, le=8)
    eps: Union[float, list[float], None] = None
    R: float = Field(0.2, gt=0)
    resolution: int | None = Field(None, ge=2)
    r: Union[float, list[float]] = 1.0
    draws: int = Field(1000, ge=1)
    test_functions: int = Field(50, ge=1)
    slack: float = Field(0.05, ge=0)
    calibrate: bool = False
    seed: int = 0
    output: str | None = None

    @field_validator("times")
    @classmethod
    def _times_in_unit_interval(cls, v):
        if any(not 0 < t < 1 for t in v):
            raise ValueError("times must lie in (0, 1)")
        return v

    @field_validator("Nprime")
    @classmethod
    def _nprime_at_least_one(cls, v):
        if v is not None and any(x < 1 for x in v):
            raise ValueError("N' values must be >= 1")
        return v

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def json_schema() -> dict[str, Any]:
    return ExperimentConfig.model_json_schema()
