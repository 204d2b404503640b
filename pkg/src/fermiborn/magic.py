"""The parametrized magic input state and its Gaussian decomposition.

Each 4-mode register carries the state cos(a)|0000> + sin(a)|1111>. Its density
operator is not Gaussian, but it splits exactly into a Gaussian part plus a
traceless remainder sigma(a) that is itself a signed combination of four
Gaussian operators rho_ab with explicit 8x8 covariance matrices. This module
owns those matrices, their normalization coefficients, and (privately) their
alpha-derivatives so the trainer differentiates the same tables the forward
pass uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .skewlin import SkewMatrix

#: Component labels in canonical order: the Gaussian part first, then the four
#: rho_ab pieces of the traceless remainder.
COMPONENT_LABELS = ("Gauss", "00", "11", "01", "10")


@dataclass
class MagicAngles:
    """Input-state angles, one per 4-mode register, reduced mod 2*pi."""

    N: int
    alpha: np.ndarray

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError(f"register count must be positive, got {self.N}")
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.shape != (self.N,):
            raise InvalidInputError(
                f"alpha must have shape ({self.N},), got {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("alpha entries must be finite")
        self.alpha = np.mod(a, 2.0 * np.pi)

    @classmethod
    def random(cls, N: int, rng: np.random.Generator) -> "MagicAngles":
        return cls(N, rng.uniform(0.0, 2.0 * np.pi, N))


@dataclass
class GaussianComponent:
    """One signed Gaussian operator in the expansion of sigma(alpha)."""

    label: str
    coeff: float
    cov: SkewMatrix = field(repr=False)


def _assemble(dim: int, entries: dict[tuple[int, int], complex], dtype) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=dtype)
    for (p, q), v in entries.items():
        out[p, q] = v
        out[q, p] = -v
    return out


def sigma_gauss(alpha: float) -> SkewMatrix:
    """Covariance of the Gaussian part of one register's input state.

    Block diagonal with [[0, cos 2a], [-cos 2a, 0]] on Majorana pairs
    (2j, 2j+1); all cross-mode second moments of the input state vanish.
    """
    c2 = np.cos(2.0 * alpha)
    return SkewMatrix(_assemble(8, {(2 * j, 2 * j + 1): c2 for j in range(4)}, np.float64))


def norm_coeff(alpha: float, a: int, b: int) -> float:
    """Signed weight N_ab of component rho_ab in the decomposition."""
    _check_bits(a, b)
    if a == 0 and b == 0:
        return float(np.cos(alpha) ** 2 + 1.0)
    if a == 1 and b == 1:
        return float(np.sin(alpha) ** 2 + 1.0)
    return -1.0


def sigma_component(alpha: float, a: int, b: int) -> SkewMatrix:
    """Covariance matrix of the Gaussian operator rho_ab(alpha).

    rho_00 and rho_11 are genuine (real-covariance) Gaussian states; rho_01
    and rho_10 are non-Hermitian Gaussian operators with complex covariances.
    rho_10 = rho_01^dagger forces Sigma_10 to be the elementwise conjugate of
    Sigma_01, which the test suite confirms against a dense Fock construction.
    """
    _check_bits(a, b)
    c = np.cos(alpha)
    s = np.sin(alpha)
    if a == 0 and b == 0:
        u = 1.0 / (1.0 + c * c)
        return SkewMatrix(_assemble(8, {
            (0, 1): -s * s * u, (2, 3): -s * s * u,
            (0, 3): 2.0 * c * u, (1, 2): 2.0 * c * u,
            (4, 5): 1.0, (6, 7): 1.0,
        }, np.float64))
    if a == 1 and b == 1:
        u = 1.0 / (1.0 + s * s)
        return SkewMatrix(_assemble(8, {
            (0, 1): -1.0, (2, 3): -1.0,
            (4, 5): c * c * u, (6, 7): c * c * u,
            (4, 7): -2.0 * s * u, (5, 6): -2.0 * s * u,
        }, np.float64))
    mat = _assemble(8, {
        (0, 1): -1.0, (2, 3): -1.0,
        (0, 2): -1j * c, (1, 3): 1j * c,
        (0, 3): c, (1, 2): c,
        (4, 5): 1.0, (6, 7): 1.0,
        (4, 6): 1j * s, (5, 7): -1j * s,
        (4, 7): -s, (5, 6): -s,
    }, np.complex128)
    if a == 1 and b == 0:
        mat = mat.conj()
    return SkewMatrix(mat)


def sigma_expansion(alpha: float) -> list[GaussianComponent]:
    """The five (coefficient, covariance) pairs whose weighted sum is sigma(a).

    sigma(a) = |a><a| - rho_Gauss(a)
             = -rho_Gauss + N_00 rho_00 + N_11 rho_11 - rho_01 - rho_10,
    so the coefficient list is (-1, N_00, N_11, -1, -1) and sums to zero,
    reflecting Tr sigma = 0.
    """
    out = [GaussianComponent("Gauss", -1.0, sigma_gauss(alpha))]
    for a, b in ((0, 0), (1, 1), (0, 1), (1, 0)):
        out.append(GaussianComponent(
            f"{a}{b}", norm_coeff(alpha, a, b), sigma_component(alpha, a, b)
        ))
    return out


def _check_bits(a: int, b: int):
    if a not in (0, 1) or b not in (0, 1):
        raise InvalidInputError(f"component bits must be 0 or 1, got ({a}, {b})")


# -- alpha-derivatives of the tables above ----------------------------------
#
# Private: consumed by the trainer's reverse-mode pass. Kept here, next to the
# forward formulas, so a future change to either side is caught by the
# finite-difference tests instead of silently drifting apart.


def _sigma_gauss_prime(alpha: float) -> np.ndarray:
    g = -2.0 * np.sin(2.0 * alpha)
    return _assemble(8, {(2 * j, 2 * j + 1): g for j in range(4)}, np.float64)


def _sigma_component_prime(alpha: float, a: int, b: int) -> np.ndarray:
    c = np.cos(alpha)
    s = np.sin(alpha)
    if a == 0 and b == 0:
        u2 = 1.0 / (1.0 + c * c) ** 2
        d_ms2u = -2.0 * np.sin(2.0 * alpha) * u2   # d/da of -s^2/(1+c^2)
        d_2cu = -2.0 * s ** 3 * u2                 # d/da of 2c/(1+c^2)
        return _assemble(8, {
            (0, 1): d_ms2u, (2, 3): d_ms2u,
            (0, 3): d_2cu, (1, 2): d_2cu,
        }, np.float64)
    if a == 1 and b == 1:
        u2 = 1.0 / (1.0 + s * s) ** 2
        d_c2u = -2.0 * np.sin(2.0 * alpha) * u2    # d/da of c^2/(1+s^2)
        d_m2su = -2.0 * c ** 3 * u2                # d/da of -2s/(1+s^2)
        return _assemble(8, {
            (4, 5): d_c2u, (6, 7): d_c2u,
            (4, 7): d_m2su, (5, 6): d_m2su,
        }, np.float64)
    mat = _assemble(8, {
        (0, 2): 1j * s, (1, 3): -1j * s,
        (0, 3): -s, (1, 2): -s,
        (4, 6): 1j * c, (5, 7): -1j * c,
        (4, 7): -c, (5, 6): -c,
    }, np.complex128)
    if a == 1 and b == 0:
        mat = mat.conj()
    return mat


def _norm_coeff_prime(alpha: float, a: int, b: int) -> float:
    if a == 0 and b == 0:
        return float(-np.sin(2.0 * alpha))
    if a == 1 and b == 1:
        return float(np.sin(2.0 * alpha))
    return 0.0
