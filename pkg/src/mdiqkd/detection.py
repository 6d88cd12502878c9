"""Non-resolving detector pairs with dark counts.

A Bell-measurement arm feeds two threshold detectors.  Each detector clicks
with certainty when at least one photon arrives and with probability ``d_c``
(the dark-count rate per gate per detector) on vacuum.  All measurement
operators are diagonal in the occupation basis; the four exclusive outcomes
of one arm (only the first detector clicks, only the second, both, neither)
form a POVM.

A measurement round is *accepted* when exactly one detector of the r arm and
exactly one of the s arm click; double clicks are discarded.  Accepted
patterns split into type I, (r0, s0) or (r1, s1), and type II, (r0, s1) or
(r1, s0).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .fock import FockState, ModeLayout, partial_trace

PROBABILITY_FLOOR = 1e-300


class ImpossibleEventError(RuntimeError):
    """Conditioning on a measurement outcome of zero probability."""


@dataclass(frozen=True)
class DetectorModel:
    """Unit-efficiency threshold detector with dark-count probability per gate."""

    dark_count: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.dark_count < 1.0:
            raise ValueError(f"dark count must be in [0, 1), got {self.dark_count}")


class ArmClick(Enum):
    """Exclusive click outcome of a two-detector arm."""

    FIRST = "first"
    SECOND = "second"
    BOTH = "both"
    NONE = "none"


@dataclass(frozen=True)
class ClickPattern:
    """Joint outcome of the r and s arms of a Bell measurement."""

    r: ArmClick
    s: ArmClick

    @property
    def accepted(self) -> bool:
        single = (ArmClick.FIRST, ArmClick.SECOND)
        return self.r in single and self.s in single

    @property
    def bell_type(self) -> int:
        """1 for (r0,s0)/(r1,s1), 2 for (r0,s1)/(r1,s0); accepted patterns only."""
        if not self.accepted:
            raise ValueError("bell_type is defined for accepted patterns only")
        return 1 if self.r == self.s else 2


ALL_ARM_CLICKS = (ArmClick.FIRST, ArmClick.SECOND, ArmClick.BOTH, ArmClick.NONE)
ALL_PATTERNS = tuple(ClickPattern(r, s) for r in ALL_ARM_CLICKS for s in ALL_ARM_CLICKS)
ACCEPTED_PATTERNS = tuple(p for p in ALL_PATTERNS if p.accepted)


def _click_weights(cutoff: int, det: DetectorModel, clicked: bool) -> np.ndarray:
    """Diagonal POVM weights of a single detector for click / no-click."""
    w = np.ones(cutoff + 1)
    if clicked:
        w[0] = det.dark_count
    else:
        w[:] = 0.0
        w[0] = 1.0 - det.dark_count
    return w


def _arm_weights(pattern: ArmClick, det: DetectorModel, cutoffs: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    first = pattern in (ArmClick.FIRST, ArmClick.BOTH)
    second = pattern in (ArmClick.SECOND, ArmClick.BOTH)
    return (
        _click_weights(cutoffs[0], det, first),
        _click_weights(cutoffs[1], det, second),
    )


def arm_operator(pattern: ArmClick, det: DetectorModel, cutoffs: Sequence[int] = (1, 1)) -> np.ndarray:
    """Measurement operator of one arm outcome on its two detector modes.

    For ``FIRST`` this is
    ``(1-d_c) [ (I - |0><0|) (x) |0><0|  +  d_c |0><0| (x) |0><0| ]``;
    the four operators of an arm sum to the identity.
    """
    w1, w2 = _arm_weights(pattern, det, cutoffs)
    return np.diag(np.kron(w1, w2))


def _weighted_diagonal_sum(rho: FockState, weights: dict[str, np.ndarray]) -> float:
    t = rho.diagonal()
    for ax in reversed(range(rho.layout.num_modes)):
        label = rho.layout.labels[ax]
        vec = weights.get(label)
        if vec is None:
            vec = np.ones(rho.layout.dims[ax])
        t = np.tensordot(t, vec, axes=(ax, 0))
    return float(t)


def click_probability(
    rho: FockState,
    r_modes: Sequence[str],
    s_modes: Sequence[str],
    pattern: ClickPattern,
    det: DetectorModel,
) -> float:
    """Probability of the joint click pattern on the four detector modes.

    ``r_modes`` and ``s_modes`` name the modes hitting the (r0, r1) and
    (s0, s1) detectors.  Over all 16 patterns the probabilities sum to the
    trace of ``rho``.
    """
    wr = _arm_weights(pattern.r, det, [rho.layout.cutoff(m) for m in r_modes])
    ws = _arm_weights(pattern.s, det, [rho.layout.cutoff(m) for m in s_modes])
    weights = {r_modes[0]: wr[0], r_modes[1]: wr[1], s_modes[0]: ws[0], s_modes[1]: ws[1]}
    return _weighted_diagonal_sum(rho, weights)


def measure_arm(
    rho: FockState, arm_modes: Sequence[str], pattern: ArmClick, det: DetectorModel
) -> FockState:
    """Apply one arm's measurement operator and trace out its two modes.

    Returns the unnormalized reduced state; its trace is the probability
    weight contributed by this outcome.  Valid because the operators are
    occupation-diagonal, so measuring one arm commutes with any later channel
    acting on disjoint modes.
    """
    m1, m2 = arm_modes
    ax1, ax2 = rho.layout.axis(m1), rho.layout.axis(m2)
    w1, w2 = _arm_weights(pattern, det, (rho.layout.cutoff(m1), rho.layout.cutoff(m2)))
    k = rho.layout.num_modes
    dims = rho.layout.dims
    t = rho.matrix.reshape(dims + dims)

    ket = list(range(k))
    bra = [k + i for i in range(k)]
    bra[ax1] = ax1  # diagonal contraction over the measured modes
    bra[ax2] = ax2
    out_idx = [i for i in ket if i not in (ax1, ax2)] + [
        b for i, b in enumerate(bra) if i not in (ax1, ax2)
    ]
    reduced = np.einsum(t, ket + bra, w1, [ax1], w2, [ax2], out_idx)

    keep = [i for i in range(k) if i not in (ax1, ax2)]
    layout = ModeLayout(
        tuple(rho.layout.labels[i] for i in keep),
        tuple(rho.layout.cutoffs[i] for i in keep),
    )
    return FockState(layout, reduced.reshape(layout.dim, layout.dim))


def conditional_state(
    rho: FockState,
    r_modes: Sequence[str],
    s_modes: Sequence[str],
    pattern: ClickPattern,
    det: DetectorModel,
    keep: Iterable[str],
) -> tuple[FockState, float]:
    """Normalized post-measurement state on ``keep`` and the outcome probability.

    Modes that are neither measured nor kept are traced out.  A zero
    probability outcome raises :class:`ImpossibleEventError` so callers can
    prune impossible branches instead of dividing by zero.
    """
    keep = tuple(keep)
    measured = set(r_modes) | set(s_modes)
    if measured & set(keep):
        raise ValueError("kept modes must be disjoint from the measured modes")
    reduced = measure_arm(rho, r_modes, pattern.r, det)
    reduced = measure_arm(reduced, s_modes, pattern.s, det)
    prob = reduced.trace
    if prob < PROBABILITY_FLOOR:
        raise ImpossibleEventError(f"click pattern {pattern} has zero probability")
    drop = [m for m in reduced.layout.labels if m not in keep]
    if drop:
        reduced = partial_trace(reduced, drop)
    return reduced.normalized(), prob
