"""Material phases and weak-form constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class MaterialPhase:
    """Isotropic thermo-elastic material."""

    E: float = 1.0
    nu: float = 0.0
    kappa: float = 1.0
    alpha: float = 0.0
    T0: float = 0.0

    def __post_init__(self):
        if self.E <= 0 or self.kappa <= 0:
            raise ConfigError("E and kappa must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ConfigError("Poisson ratio must lie in (-1, 0.5)")

    def elasticity(self, plane: str = "stress") -> np.ndarray:
        """Voigt matrix ``D`` for ``(eps_xx, eps_yy, gamma_xy)``."""
        E, nu = self.E, self.nu
        if plane == "stress":
            f = E / (1.0 - nu * nu)
            return f * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
        if plane == "strain":
            f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
            return f * np.array([[1.0 - nu, nu, 0.0], [nu, 1.0 - nu, 0.0], [0.0, 0.0, 0.5 - nu]])
        raise ConfigError(f"unknown plane assumption {plane!r}")

    def thermal_modulus(self, plane: str = "stress") -> float:
        """Stress per unit temperature change, ``sigma_T = beta * (T - T0) * I``."""
        if plane == "stress":
            return self.E * self.alpha / (1.0 - self.nu)
        if plane == "strain":
            return self.E * self.alpha / (1.0 - 2.0 * self.nu)
        raise ConfigError(f"unknown plane assumption {plane!r}")


@dataclass
class WeakFormConfig:
    """Penalty constants; ``None`` selects ``2 * (p + 1)**2``."""

    c_D_T: float | None = None
    c_D_u: float | None = None
    c_I_T: float | None = None
    c_I_u: float | None = None
    gamma_G_T: float = 0.001
    gamma_G_u: float = 0.001
    ghost: bool = True
    plane: str = "stress"
    weights: str = "measure_over_modulus"

    def __post_init__(self):
        for name in ("c_D_T", "c_D_u", "c_I_T", "c_I_u"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.gamma_G_T < 0 or self.gamma_G_u < 0:
            raise ConfigError("ghost penalties must be >= 0")
        if self.weights not in ("measure_over_modulus", "modulus_over_measure"):
            raise ConfigError(f"unknown weight convention {self.weights!r}")
        if self.plane not in ("stress", "strain"):
            raise ConfigError(f"unknown plane assumption {self.plane!r}")

    def dirichlet_constant(self, field: str, p: int) -> float:
        v = self.c_D_T if field == "T" else self.c_D_u
        return 2.0 * (p + 1) ** 2 if v is None else v

    def interface_constant(self, field: str, p: int) -> float:
        v = self.c_I_T if field == "T" else self.c_I_u
        return 2.0 * (p + 1) ** 2 if v is None else v


def interface_weights(meas_m: float, k_m: float, meas_n: float, k_n: float,
                      convention: str = "measure_over_modulus") -> tuple[float, float]:
    """Averaging weights of the two sides of an interface."""
    if convention == "measure_over_modulus":
        a, b = meas_m / k_m, meas_n / k_n
    else:
        a, b = k_m / meas_m, k_n / meas_n
    s = a + b
    return a / s, b / s


def interface_penalty(c: float, meas_gamma: float, meas_m: float, k_m: float,
                      meas_n: float, k_n: float) -> float:
    return 2.0 * c * meas_gamma / (meas_m / k_m + meas_n / k_n)
