"""
Evaluation and report models for ExpoMask.
"""

import math

from pydantic import BaseModel, Field, model_validator


class ConfusionCounts(BaseModel):
    """Pixel tallies of a binary prediction against ground truth."""
    tp: int = Field(0, ge=0)
    fp: int = Field(0, ge=0)
    tn: int = Field(0, ge=0)
    fn: int = Field(0, ge=0)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
            fn=self.fn + other.fn,
        )


class MetricRow(BaseModel):
    """One report row: the five metrics of a loss function and their average."""
    loss_name: str
    dice: float = Field(ge=0, le=1)
    jaccard: float = Field(ge=0, le=1)
    sensitivity: float = Field(ge=0, le=1)
    specificity: float = Field(ge=0, le=1)
    auc: float = Field(ge=0, le=1)
    avg: float = Field(ge=0, le=1)

    @model_validator(mode="after")
    def _check_avg(self) -> "MetricRow":
        mean = (self.dice + self.jaccard + self.sensitivity + self.specificity + self.auc) / 5
        if not math.isclose(self.avg, mean, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"avg {self.avg} is not the mean of the metrics ({mean})")
        return self


class CoverageRow(BaseModel):
    """Coverage of one generated mask, for the manual vs. Otsu comparison."""
    scene_id: str
    method: str
    exposure: str
    coverage: float = Field(ge=0, le=1)
