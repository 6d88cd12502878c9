"""Input states: imperfect single-photon sources, ensemble photonic-atomic

joint states, dual-rail phase encodings, and entangled-pair sources.

An ensemble memory driven by a weak off-resonant pulse emits jointly with its
collective atomic excitation the two-mode squeezed state

    sum_n sqrt((1-p) p^n) |n>_atoms |n>_photons,

truncated here at a configurable excitation number.  Post-selecting away the
joint vacuum and truncating at two photons yields the imperfect-source model
(1-p)|1><1| + p|2><2| used for the no-memory link.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import pi, sqrt

import numpy as np

from .fock import (
    FockState,
    ModeLayout,
    apply_balanced_bs,
    apply_phase,
    pure_state,
    tensor,
    vacuum,
)


@dataclass(frozen=True)
class Encoding:
    """Basis (z or x) and bit of a dual-rail encoded transmission."""

    basis: str
    bit: int

    def __post_init__(self) -> None:
        if self.basis not in ("z", "x"):
            raise ValueError(f"basis must be 'z' or 'x', got {self.basis!r}")
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")


def imperfect_photon(p: float, label: str = "p") -> FockState:
    """Single-photon source emitting two photons with probability p."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"double-photon probability must be in [0, 1), got {p}")
    layout = ModeLayout((label,), (2,))
    m = np.zeros((3, 3), dtype=complex)
    m[1, 1] = 1.0 - p
    m[2, 2] = p
    return FockState(layout, m)


def ensemble_joint_state(
    p: float, truncation: int = 2, atom_label: str = "a", photon_label: str = "p"
) -> FockState:
    """Two-mode squeezed atomic-photonic state, truncated at ``truncation``.

    The returned operator is pure but subnormalized: its trace is the
    retained geometric weight (1-p) * sum_{n<=truncation} p^n.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"excitation probability must be in [0, 1), got {p}")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    layout = ModeLayout((atom_label, photon_label), (truncation, truncation))
    amps = {(n, n): sqrt((1.0 - p) * p ** n) for n in range(truncation + 1)}
    return pure_state(layout, amps)


def encode(enc: Encoding, photon: FockState, r_label: str = "r", s_label: str = "s") -> FockState:
    """Route a one-mode source state onto the dual-rail (r, s) pair.

    z basis sends the photon down one rail (bit 0 -> r, bit 1 -> s).  x basis
    splits it evenly with relative phase pi * bit; multiphoton components
    transform linearly mode-by-mode, exactly as the physical splitter acts.
    """
    if photon.layout.num_modes != 1:
        raise ValueError("encode expects a one-mode source state")
    cutoff = photon.layout.cutoffs[0]
    if enc.basis == "z":
        rails = (r_label, s_label) if enc.bit == 0 else (s_label, r_label)
        out = tensor(photon.relabeled({photon.layout.labels[0]: rails[0]}),
                     vacuum([rails[1]], cutoff))
        if enc.bit == 1:
            # restore canonical (r, s) mode order
            out = _reordered(out, (r_label, s_label))
        return out
    out = tensor(photon.relabeled({photon.layout.labels[0]: r_label}), vacuum([s_label], cutoff))
    out = apply_balanced_bs(out, r_label, s_label)
    if enc.bit == 1:
        out = apply_phase(out, s_label, pi)
    return out


def _reordered(state: FockState, order: tuple[str, ...]) -> FockState:
    perm = [state.layout.axis(l) for l in order]
    k = state.layout.num_modes
    t = state.matrix.reshape(state.layout.dims + state.layout.dims)
    t = np.transpose(t, perm + [k + i for i in perm])
    layout = ModeLayout(order, tuple(state.layout.cutoffs[i] for i in perm))
    return FockState(layout, t.reshape(layout.dim, layout.dim))


def epr_pair(emission_prob: float, labels: tuple[str, str, str, str]) -> FockState:
    """Dual-rail entangled-photon-pair source without multiphoton terms.

    With probability ``emission_prob`` the source emits the maximally
    entangled state (|10,10> + |01,01>)/sqrt(2) across the two rail pairs
    (labels[0], labels[1]) and (labels[2], labels[3]); otherwise vacuum.
    """
    if not 0.0 <= emission_prob <= 1.0:
        raise ValueError(f"emission probability must be in [0, 1], got {emission_prob}")
    layout = ModeLayout.uniform(labels, 1)
    bell = pure_state(
        layout,
        {(1, 0, 1, 0): 1.0 / sqrt(2.0), (0, 1, 0, 1): 1.0 / sqrt(2.0)},
    )
    vac = vacuum(labels, 1)
    return bell.scaled(emission_prob) + vac.scaled(1.0 - emission_prob)
