from enum import Enum

from pydantic import BaseModel, ConfigDict, Field


class ModelVariant(str, Enum):
    CPVAE = "cpvae"
    DVAE = "dvae"


class ModelConfig(BaseModel):
    """
    Architecture of one autoencoder.

    The encoder is two circular convolutions (kernel 3, 32 channels, relu),
    global average pooling and two dense heads (64 units, relu) for the mean
    and log-variance. The decoder has three selu hidden layers of 80 units.
    """

    model_config = ConfigDict(frozen=True)

    n_sites: int = Field(ge=2)
    variant: ModelVariant = ModelVariant.CPVAE
    d_latent: int = Field(default=5, ge=1)
    dvae_latent_dim: int = Field(default=1, ge=1)
    conv_channels: int = Field(default=32, ge=1)
    kernel_size: int = Field(default=3, ge=1)
    head_width: int = Field(default=64, ge=1)
    decoder_hidden_layers: int = Field(default=3, ge=1)
    decoder_width: int = Field(default=80, ge=1)

    @property
    def latent_dim(self) -> int:
        return self.d_latent if self.variant is ModelVariant.CPVAE else self.dvae_latent_dim

    @property
    def is_autoregressive(self) -> bool:
        return self.variant is ModelVariant.CPVAE
