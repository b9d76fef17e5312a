"""Small shared helpers: state enumeration and the global enumeration cap."""

from __future__ import annotations

import os

import numpy as np

from .errors import InvalidAssignmentError, ResourceBoundError

DEFAULT_STATE_CAP = 2**20


def state_cap() -> int:
    """Enumeration cap; override with the EK_MAX_STATES environment variable."""
    raw = os.environ.get("EK_MAX_STATES")
    if raw is None:
        return DEFAULT_STATE_CAP
    cap = int(raw)
    if cap < 1:
        raise ValueError("EK_MAX_STATES must be positive")
    return cap


def n_states(domain) -> int:
    total = 1
    for card in domain:
        total *= int(card)
    return total


def enumerate_states(domain, cap: int | None = None) -> np.ndarray:
    """All assignments of the domain as an (N, D) int array, lexicographic.

    Variable 0 is the most significant digit, so row order matches
    itertools.product over per-variable ranges.
    """
    total = n_states(domain)
    limit = state_cap() if cap is None else cap
    if total > limit:
        raise ResourceBoundError(
            f"domain has {total} states, above the cap of {limit}"
        )
    out = np.zeros((total, len(domain)), dtype=np.int64)
    rep = total
    for j, card in enumerate(domain):
        card = int(card)
        rep //= card
        pattern = np.repeat(np.arange(card, dtype=np.int64), rep)
        out[:, j] = np.tile(pattern, total // (rep * card))
    return out


def check_assignment(domain, x) -> np.ndarray:
    """Validate a full assignment against the domain, return it as int64."""
    arr = np.asarray(x, dtype=np.int64)
    if arr.shape != (len(domain),):
        raise InvalidAssignmentError(
            f"assignment has shape {arr.shape}, expected ({len(domain)},)"
        )
    cards = np.asarray(domain, dtype=np.int64)
    if np.any(arr < 0) or np.any(arr >= cards):
        raise InvalidAssignmentError("assignment out of domain range")
    return arr


def check_batch(domain, X) -> np.ndarray:
    """Validate a (B, D) batch of assignments."""
    arr = np.asarray(X, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != len(domain):
        raise InvalidAssignmentError(
            f"batch has shape {arr.shape}, expected (B, {len(domain)})"
        )
    cards = np.asarray(domain, dtype=np.int64)
    if arr.size and (arr.min() < 0 or np.any(arr >= cards[None, :])):
        raise InvalidAssignmentError("assignment out of domain range")
    return arr
