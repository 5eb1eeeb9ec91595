"""Metric reports and threshold-sweep records."""
from __future__ import annotations

from typing import Any, ClassVar, Dict, List, Literal, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

from models.schemas import Thresholds


class CategoryMetrics(BaseModel):
    set_accuracy: float = Field(ge=0, le=1)
    individual_accuracy: float = Field(ge=0, le=1)
    pairs: int = Field(default=0, ge=0)


class MetricsCounts(BaseModel):
    pairs: int = 0
    images: int = 0
    abstained_images: int = 0
    adjudicated_pairs: int = 0
    correct_images: int = 0
    correct_pairs: int = 0
    confused_pairs: int = 0


class MetricsReport(BaseModel):
    set_accuracy: float = Field(ge=0, le=1)
    individual_accuracy: float = Field(ge=0, le=1)
    confusion_rate: float = Field(ge=0, le=1)
    abstention_rate: float = Field(ge=0, le=1)
    coverage: float = Field(ge=0, le=1)
    conditional_accuracy: float = Field(ge=0, le=1)
    per_category: Dict[str, CategoryMetrics] = Field(default_factory=dict)
    counts: MetricsCounts = Field(default_factory=MetricsCounts)
    config: Dict[str, Any] = Field(default_factory=dict)
    provenance: Dict[str, Any] = Field(default_factory=dict)

    METRIC_FIELDS: ClassVar[Tuple[str, ...]] = (
        "set_accuracy",
        "individual_accuracy",
        "confusion_rate",
        "abstention_rate",
        "coverage",
        "conditional_accuracy",
    )

    def metrics(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in self.METRIC_FIELDS}


class SweepSpec(BaseModel):
    """One parameter swept over increasing values, the rest held fixed."""

    parameter: Literal["p", "m", "t", "delta"]
    values: List[float]
    fixed: Thresholds = Field(default_factory=Thresholds)

    @field_validator("values")
    @classmethod
    def _strictly_increasing(cls, values: List[float]) -> List[float]:
        if not values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError(f"sweep values must be strictly increasing, got {values}")
        return values

    @model_validator(mode="after")
    def _values_in_range(self) -> "SweepSpec":
        for value in self.values:
            try:
                self.thresholds_for(value)
            except ValueError as exc:
                raise ValueError(f"{self.parameter}={value} is out of range: {exc}") from exc
        return self

    def thresholds_for(self, value: float) -> Thresholds:
        return Thresholds(**{**self.fixed.model_dump(), self.parameter: value})


class SweepRow(BaseModel):
    parameter: str
    value: float
    report: MetricsReport
