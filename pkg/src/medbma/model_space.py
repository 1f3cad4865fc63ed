"""Candidate model space for the response and survival regressions.

The response linear predictor has terms (A, X, A*X) gated by indicators
z = (z1, z2, z3); the survival linear predictor has terms
(A, Y, X, A*Y, A*X, X*Y) gated by w = (w1..w6).  Interactions obey the
hierarchy rules z1*z2 >= z3, w1*w2 >= w4, w1*w3 >= w5, w2*w3 >= w6,
which leaves 5 valid response models (R1..R5) and 18 survival models
(S1..S18).  Design rows keep full fixed length with zeros in place of
inactive terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RESPONSE_TERMS = ("A", "X", "A:X")
SURVIVAL_TERMS = ("A", "Y", "X", "A:Y", "A:X", "X:Y")

# Canonical ordering of the valid models: null first, then by number of
# active main effects, interactions last.
RESPONSE_TABLE: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0),  # R1
    (1, 0, 0),  # R2
    (0, 1, 0),  # R3
    (1, 1, 0),  # R4
    (1, 1, 1),  # R5
)

SURVIVAL_TABLE: tuple[tuple[int, ...], ...] = (
    (0, 0, 0, 0, 0, 0),  # S1
    (1, 0, 0, 0, 0, 0),  # S2
    (0, 1, 0, 0, 0, 0),  # S3
    (0, 0, 1, 0, 0, 0),  # S4
    (1, 1, 0, 0, 0, 0),  # S5
    (1, 0, 1, 0, 0, 0),  # S6
    (0, 1, 1, 0, 0, 0),  # S7
    (1, 1, 0, 1, 0, 0),  # S8
    (1, 0, 1, 0, 1, 0),  # S9
    (0, 1, 1, 0, 0, 1),  # S10
    (1, 1, 1, 0, 0, 0),  # S11
    (1, 1, 1, 1, 0, 0),  # S12
    (1, 1, 1, 0, 1, 0),  # S13
    (1, 1, 1, 0, 0, 1),  # S14
    (1, 1, 1, 1, 1, 0),  # S15
    (1, 1, 1, 1, 0, 1),  # S16
    (1, 1, 1, 0, 1, 1),  # S17
    (1, 1, 1, 1, 1, 1),  # S18
)

RESPONSE_LABELS = tuple(f"R{i + 1}" for i in range(len(RESPONSE_TABLE)))
SURVIVAL_LABELS = tuple(f"S{i + 1}" for i in range(len(SURVIVAL_TABLE)))

_RESPONSE_INDEX = {t: i for i, t in enumerate(RESPONSE_TABLE)}
_SURVIVAL_INDEX = {t: i for i, t in enumerate(SURVIVAL_TABLE)}


class InvalidModelError(ValueError):
    """Indicator configuration violates a hierarchy constraint."""


def is_valid_response(z) -> bool:
    z1, z2, z3 = (int(v) for v in z)
    return z1 * z2 >= z3


def is_valid_survival(w) -> bool:
    w1, w2, w3, w4, w5, w6 = (int(v) for v in w)
    return w1 * w2 >= w4 and w1 * w3 >= w5 and w2 * w3 >= w6


def enumerate_response_models() -> list[tuple[int, int, int]]:
    return list(RESPONSE_TABLE)


def enumerate_survival_models() -> list[tuple[int, ...]]:
    return list(SURVIVAL_TABLE)


def classify_response(z) -> str:
    key = tuple(int(v) for v in z)
    if len(key) != 3 or any(v not in (0, 1) for v in key):
        raise InvalidModelError(f"response indicators must be 3 binary values: {z}")
    if not is_valid_response(key):
        raise InvalidModelError(f"indicators {key} violate z1*z2 >= z3")
    return RESPONSE_LABELS[_RESPONSE_INDEX[key]]


def classify_survival(w) -> str:
    key = tuple(int(v) for v in w)
    if len(key) != 6 or any(v not in (0, 1) for v in key):
        raise InvalidModelError(f"survival indicators must be 6 binary values: {w}")
    if not is_valid_survival(key):
        raise InvalidModelError(
            f"indicators {key} violate a hierarchy constraint "
            "(w1*w2>=w4, w1*w3>=w5, w2*w3>=w6)"
        )
    return SURVIVAL_LABELS[_SURVIVAL_INDEX[key]]


@dataclass(frozen=True)
class ModelConfiguration:
    """One valid point of the joint (response, survival) model space."""

    response: tuple[int, int, int]
    survival: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "response", tuple(int(v) for v in self.response))
        object.__setattr__(self, "survival", tuple(int(v) for v in self.survival))
        classify_response(self.response)
        classify_survival(self.survival)

    @property
    def response_id(self) -> str:
        return classify_response(self.response)

    @property
    def survival_id(self) -> str:
        return classify_survival(self.survival)


FULL_CONFIG = ModelConfiguration(response=(1, 1, 1), survival=(1, 1, 1, 1, 1, 1))


def response_design_row(arm: float, covariate: float, z) -> np.ndarray:
    """(1, z1*A, z2*X, z3*A*X); inactive terms contribute zero."""
    z1, z2, z3 = (float(v) for v in z)
    a, x = float(arm), float(covariate)
    return np.array([1.0, z1 * a, z2 * x, z3 * a * x])


def survival_design_row(arm: float, response: float, covariate: float, w) -> np.ndarray:
    """(A, Y, X, A*Y, A*X, X*Y) componentwise gated by w."""
    a, y, x = float(arm), float(response), float(covariate)
    return np.asarray(w, dtype=float) * np.array([a, y, x, a * y, a * x, x * y])


def response_design_matrix(arm: np.ndarray, covariate: np.ndarray) -> np.ndarray:
    """Full n x 4 response design (intercept, A, X, A*X); gating via the
    coefficient mask, not the matrix."""
    a = np.asarray(arm, dtype=float)
    x = np.asarray(covariate, dtype=float)
    return np.column_stack([np.ones_like(a), a, x, a * x])


def survival_design_matrix(
    arm: np.ndarray, response: np.ndarray, covariate: np.ndarray
) -> np.ndarray:
    """Full n x 6 survival design (A, Y, X, A*Y, A*X, X*Y)."""
    a = np.asarray(arm, dtype=float)
    y = np.asarray(response, dtype=float)
    x = np.asarray(covariate, dtype=float)
    return np.column_stack([a, y, x, a * y, a * x, x * y])
