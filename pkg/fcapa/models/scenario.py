from pydantic import BaseModel, ConfigDict, Field
from typing import List, Tuple
import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class UserSpec(BaseModel):
    position: Tuple[float, float, float]
    polarization: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    noise_variance: float = Field(gt=0)
    weight: float = Field(ge=0)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    users: List[UserSpec]
    frequency_hz: float = Field(gt=0)
    impedance: float = Field(gt=0)
    transmit_power: float = Field(gt=0)
    aperture: Tuple[float, float]

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def positions(self) -> np.ndarray:
        return np.array([user.position for user in self.users], dtype=float)

    @property
    def polarizations(self) -> np.ndarray:
        return np.array([user.polarization for user in self.users], dtype=float)

    @property
    def noise_variances(self) -> np.ndarray:
        return np.array([user.noise_variance for user in self.users], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([user.weight for user in self.users], dtype=float)


class ChannelSet(BaseModel):
    """H[n, k] = H_k at quadrature node n, with the area element at the same nodes"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    H: np.ndarray
    zeta: np.ndarray


class CorrelationMatrix(BaseModel):
    """Q[i, m] = integral of H_m conj(H_i) zeta over the aperture"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Q: np.ndarray
