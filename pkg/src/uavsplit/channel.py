"""Symbol-erasure links.

A link independently erases each transmitted scalar with probability ``p``.
By default survivors arrive untouched. With ``rescale=True`` the keep-mask
carries ``1/(1-p)`` instead of 1, so survivors are scaled as in inverted
dropout and the expected value of every symbol no longer depends on ``p``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .numeric import DTYPE


class Link(str, enum.Enum):
    EDGE_SERVER = "es"
    EDGE_DRONE = "ed"
    DRONE_SERVER = "ds"


@dataclass(frozen=True)
class ChannelSpec:
    link: Link
    erasure_prob: float

    def __post_init__(self):
        _check_prob(self.erasure_prob)


def _check_prob(p: float) -> None:
    if not (0.0 <= p <= 1.0):
        raise ContractViolation(f"erasure probability must lie in [0, 1], got {p}")


def sample_mask(rng: np.random.Generator, p: float, shape, rescale: bool = False) -> np.ndarray:
    """Bernoulli keep-mask: each entry is 0.0 with probability ``p``.

    Kept entries are 1.0, or ``1/(1-p)`` when ``rescale`` is set.
    """
    _check_prob(p)
    shape = tuple(shape)
    if p == 0.0:
        return np.ones(shape, dtype=DTYPE)
    if p == 1.0:
        return np.zeros(shape, dtype=DTYPE)
    keep = (rng.random(shape) >= p).astype(DTYPE)
    if rescale:
        keep *= 1.0 / (1.0 - p)
    return keep


def _check_mask(z: np.ndarray, mask: np.ndarray, what: str) -> None:
    if z.shape != mask.shape:
        raise ContractViolation(f"{what}: representation shape {z.shape} != mask shape {mask.shape}")


def apply(z, mask) -> np.ndarray:
    """Erase the symbols of ``z`` where ``mask`` is 0; scale the rest by ``mask``."""
    z = np.asarray(z, dtype=DTYPE)
    mask = np.asarray(mask, dtype=DTYPE)
    _check_mask(z, mask, "apply")
    # where() rather than a plain product: keeps erased entries at +0.0 even for inf/-0.0 inputs
    return np.where(mask != 0.0, z * mask, 0.0)


def mask_gradient(dz, mask) -> np.ndarray:
    """Reverse-mode rule for :func:`apply`; its Jacobian is ``diag(mask)``."""
    dz = np.asarray(dz, dtype=DTYPE)
    mask = np.asarray(mask, dtype=DTYPE)
    _check_mask(dz, mask, "mask_gradient")
    return np.where(mask != 0.0, dz * mask, 0.0)
