"""Model parameters, derived coefficients and field configurations."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_HOT_AMPLITUDE = 2.0


class Dim(enum.IntEnum):
    TWO = 2
    FOUR = 4

    @property
    def n_gauge(self) -> int:
        """Number of complex gauge matrices Z_i."""
        return 2 if self is Dim.TWO else 4

    @property
    def n_fields(self) -> int:
        return 1 + self.n_gauge


class ParamError(ValueError):
    """Invalid model parameter; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ModelParams:
    dim: Dim
    n: int
    omega: float
    mu: float
    alpha: float = 0.0
    allow_large_omega: bool = False
    hermitian_alpha_convention: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dim", Dim(int(self.dim)))
        if int(self.n) != self.n or self.n < 1:
            raise ParamError("n", f"matrix size must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("omega", "mu", "alpha"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParamError(name, f"must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.mu < 0:
            raise ParamError("mu", f"must be >= 0, got {self.mu}")
        if self.omega < 0:
            raise ParamError("omega", f"must be >= 0, got {self.omega}")
        if self.omega > 1 and not self.allow_large_omega:
            raise ParamError("omega", f"{self.omega} > 1 requires allow_large_omega")
        if not 0.0 <= self.alpha <= 2 * math.pi:
            raise ParamError("alpha", f"must lie in [0, 2*pi], got {self.alpha}")

    @property
    def n_sites(self) -> int:
        """Complex entries visited by one sweep."""
        return self.dim.n_fields * self.n * self.n

    def as_dict(self) -> dict:
        return {
            "dim": int(self.dim),
            "n": self.n,
            "omega": self.omega,
            "mu": self.mu,
            "alpha": self.alpha,
            "allow_large_omega": self.allow_large_omega,
            "hermitian_alpha_convention": self.hermitian_alpha_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**d)


@dataclass(frozen=True)
class DerivedCoeffs:
    c_coeff: float
    d_coeff: float
    v_lin: float
    d_prefactor: float
    mu_cos: float


def derive_coeffs(params: ModelParams) -> DerivedCoeffs:
    w2 = params.omega ** 2
    c = math.inf if params.omega == 0 else (1 + w2) / (4 * w2)
    d = (1 - w2) ** 2 / 2 - (1 - w2) ** 4 / (6 * (1 + w2) ** 2)
    if params.omega == 1.0:
        d = 0.0
    # 1/sqrt(2C) and 1/(2 sqrt(C)) written so that Omega = 0 is regular
    if params.dim is Dim.TWO:
        inv = params.omega * math.sqrt(2.0 / (1 + w2))
    else:
        inv = params.omega / math.sqrt(1 + w2)
    return DerivedCoeffs(
        c_coeff=c,
        d_coeff=d,
        v_lin=params.mu * math.sin(params.alpha) * inv,
        d_prefactor=math.sqrt(2 * (1 + w2)),
        mu_cos=params.mu * math.cos(params.alpha),
    )


class FieldConfig:
    """psi plus the gauge matrices, stored as one ``(1 + n_gauge, N, N)`` array.

    ``fields[0]`` is psi, ``fields[1 + i]`` is Z_i. ``psi`` and ``z`` are views.
    """

    def __init__(self, fields: np.ndarray):
        fields = np.ascontiguousarray(fields, dtype=np.complex128)
        if fields.ndim != 3 or fields.shape[1] != fields.shape[2]:
            raise ValueError(f"bad field array shape {fields.shape}")
        if fields.shape[0] not in (3, 5):
            raise ValueError(f"expected 3 or 5 matrices, got {fields.shape[0]}")
        self.fields = fields

    @property
    def n(self) -> int:
        return self.fields.shape[1]

    @property
    def dim(self) -> Dim:
        return Dim.TWO if self.fields.shape[0] == 3 else Dim.FOUR

    @property
    def psi(self) -> np.ndarray:
        return self.fields[0]

    @property
    def z(self) -> list[np.ndarray]:
        return [self.fields[i] for i in range(1, self.fields.shape[0])]

    def copy(self) -> "FieldConfig":
        return FieldConfig(self.fields.copy())

    def check(self, params: ModelParams) -> None:
        if self.dim is not params.dim or self.n != params.n:
            raise ValueError(
                f"config ({int(self.dim)}D, N={self.n}) does not match params "
                f"({int(params.dim)}D, N={params.n})"
            )

    def __eq__(self, other):
        return isinstance(other, FieldConfig) and np.array_equal(self.fields, other.fields)

    def __repr__(self):
        return f"FieldConfig(dim={int(self.dim)}, n={self.n})"


def from_matrices(psi, z) -> FieldConfig:
    return FieldConfig(np.stack([np.asarray(psi)] + [np.asarray(m) for m in z]))


def zero_config(params: ModelParams) -> FieldConfig:
    n = params.n
    return FieldConfig(np.zeros((params.dim.n_fields, n, n), dtype=np.complex128))


def random_config(
    params: ModelParams,
    amplitude: float = DEFAULT_HOT_AMPLITUDE,
    rng: np.random.Generator | None = None,
) -> FieldConfig:
    """Hot start: real and imaginary parts i.i.d. uniform in [-amplitude, amplitude]."""
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    if rng is None:
        rng = np.random.default_rng()
    shape = (params.dim.n_fields, params.n, params.n)
    u = rng.random(shape + (2,))
    vals = amplitude * (2.0 * u - 1.0)
    return FieldConfig(vals[..., 0] + 1j * vals[..., 1])
