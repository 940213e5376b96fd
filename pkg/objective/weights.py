from typing import Dict

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LossWeights(BaseModel):
    """Weights of the mutual-information, total-correlation and dimension-wise KL terms."""

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    beta: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)
    gamma: float = Field(default=0.0, ge=0.0, allow_inf_nan=False)


class WeightPreset(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(ge=0.0)
    beta: float = Field(ge=0.0)
    gamma_min: float = Field(ge=0.0)
    gamma_max: float = Field(ge=0.0)

    @model_validator(mode="after")
    def check_gamma_range(self) -> "WeightPreset":
        if self.gamma_min > self.gamma_max:
            raise ValueError("gamma_min must not exceed gamma_max")
        return self

    def weights(self) -> LossWeights:
        return LossWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma_min)


WEIGHT_PRESETS: Dict[str, WeightPreset] = {
    "nnn": WeightPreset(alpha=0.1, beta=30.0, gamma_min=0.1, gamma_max=0.2),
    "lr": WeightPreset(alpha=0.1, beta=0.5, gamma_min=0.5, gamma_max=10.0),
    "rydberg": WeightPreset(alpha=0.001, beta=10.0, gamma_min=1.0, gamma_max=1.0),
}
