"""Gains, QBERs, and the secret-key-rate lower bound of a no-memory

phase-encoded MDI-QKD link with imperfect single-photon sources.

Both users send dual-rail encoded pulses to an untrusted relay.  The relay's
r rails interfere on one lossy beamsplitter arm and the s rails on another;
a round is accepted when exactly one r detector and one s detector click.
The asymptotic key fraction uses the efficient-protocol convention (no
sifting factor):

    R >= Q11_z (1 - h(e11_x)) - Qpp_z f h(Epp_z),

with Q11_z = (1-p)^2 Y11_z the single-photon gain, e11_x the single-photon
QBER in the x basis, and Qpp_z / Epp_z the gain and QBER with the imperfect
sources (1-p)|1><1| + p|2><2|.  Negative rates clamp to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import exp, log2

import numpy as np

from .detection import ACCEPTED_PATTERNS, ClickPattern, DetectorModel, click_probability
from .fock import ButterflyParams, FockState, butterfly, number_state, tensor
from .fock import ModeLayout
from .sources import Encoding, encode, imperfect_photon


@dataclass(frozen=True)
class SystemParams:
    """Link geometry and device parameters.

    Distances are the fiber lengths from Alice and Bob to the measurement
    site, in km.  Defaults follow the nominal parameter set used throughout:
    eta_d = 0.93, d_c = 1e-9 per pulse, L_att = 25 km, e_d = 0.
    """

    distance_a_km: float
    distance_b_km: float
    attenuation_length_km: float = 25.0
    detector_efficiency: float = 0.93
    dark_count: float = 1e-9
    misalignment: float = 0.0
    error_correction_f: float = 1.16
    double_photon_prob: float = 0.0
    prune_double_emission: bool = True

    def __post_init__(self) -> None:
        if self.distance_a_km < 0 or self.distance_b_km < 0:
            raise ValueError("distances must be non-negative")
        if self.attenuation_length_km <= 0:
            raise ValueError("attenuation length must be positive")
        if not 0.0 <= self.detector_efficiency <= 1.0:
            raise ValueError("detector efficiency must be in [0, 1]")
        if not 0.0 <= self.dark_count < 1.0:
            raise ValueError("dark count must be in [0, 1)")
        if not 0.0 <= self.misalignment <= 0.5:
            raise ValueError("misalignment must be in [0, 0.5]")
        if self.error_correction_f < 1.0:
            raise ValueError("error-correction inefficiency must be >= 1")
        if not 0.0 <= self.double_photon_prob < 1.0:
            raise ValueError("double-photon probability must be in [0, 1)")

    def with_(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)

    @property
    def detector(self) -> DetectorModel:
        return DetectorModel(self.dark_count)

    def arm_transmissivity(self, distance_km: float) -> float:
        return channel_transmissivity(distance_km, self.attenuation_length_km) * self.detector_efficiency


@dataclass(frozen=True)
class RateBreakdown:
    """Per-pulse key-rate terms of the no-memory link."""

    q11z: float
    e11x: float
    qppz: float
    eppz: float
    rate: float


@dataclass(frozen=True)
class GainResult:
    """Accepted-pattern gain split into correct and erroneous inferences."""

    total: float
    correct: float

    @property
    def error(self) -> float:
        return self.total - self.correct

    def qber(self, misalignment: float = 0.0) -> float:
        """Error rate with misalignment folding e_d of the correct gain in."""
        if self.total <= 0.0:
            return 0.0
        mixed = misalignment * self.correct + (1.0 - misalignment) * self.error
        return min(max(mixed / self.total, 0.0), 1.0)


def channel_transmissivity(distance_km: float, attenuation_length_km: float = 25.0) -> float:
    """Fiber transmissivity exp(-l / L_att)."""
    if distance_km < 0:
        raise ValueError("distance must be non-negative")
    if attenuation_length_km <= 0:
        raise ValueError("attenuation length must be positive")
    return exp(-distance_km / attenuation_length_km)


def binary_entropy(x: float) -> float:
    """Shannon binary entropy h(x) in bits, with h(0) = h(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must be in [0, 1], got {x}")
    if x in (0.0, 1.0):
        return 0.0
    return -x * log2(x) - (1.0 - x) * log2(1.0 - x)


def _correct_inference(basis: str, bit_a: int, bit_b: int, pattern: ClickPattern) -> bool:
    # z: any accepted pattern announces complementary bits.
    # x: type I announces equal phases, type II opposite phases.
    if basis == "z":
        return bit_a != bit_b
    same = pattern.bell_type == 1
    return (bit_a == bit_b) if same else (bit_a != bit_b)


def _number_branches(photon: FockState) -> list[tuple[float, FockState, int]]:
    """Decompose an occupation-diagonal one-mode state by photon number."""
    diag = np.real(np.diagonal(photon.matrix))
    off = photon.matrix - np.diag(np.diagonal(photon.matrix))
    if np.abs(off).max() > 1e-14:
        raise ValueError("pruning requires an occupation-diagonal source state")
    branches = []
    for n, w in enumerate(diag):
        if w <= 0.0:
            continue
        branches.append((float(w), number_state(photon.layout, (n,)), n))
    return branches


def bsm_pattern_probabilities(
    rho4: FockState,
    eta_a: float,
    eta_b: float,
    det: DetectorModel,
    modes: tuple[str, str, str, str] = ("ra", "sa", "rb", "sb"),
) -> dict[ClickPattern, float]:
    """Accepted-pattern probabilities for one joint input on the four rails.

    ``modes`` names Alice's (r, s) rails then Bob's; Alice's rails take total
    transmissivity ``eta_a`` and Bob's ``eta_b``.
    """
    r_a, s_a, r_b, s_b = modes
    rho = butterfly(rho4, r_a, r_b, ButterflyParams(eta_a, eta_b))
    rho = butterfly(rho, s_a, s_b, ButterflyParams(eta_a, eta_b))
    return {
        pat: click_probability(rho, (r_a, r_b), (s_a, s_b), pat, det)
        for pat in ACCEPTED_PATTERNS
    }


def bsm_gain(
    basis: str,
    eta_a: float,
    eta_b: float,
    photon_a: FockState,
    photon_b: FockState,
    det: DetectorModel,
    prune_double_emission: bool = True,
) -> GainResult:
    """Total and correct-inference gains over equiprobable bit pairs.

    ``photon_a`` / ``photon_b`` are the one-mode source states; both bits of
    both users are averaged uniformly.  With pruning enabled the branch where
    both sources emit two photons simultaneously (weight p_a * p_b) is
    dropped, matching the leading-order treatment of double emissions.
    """
    if basis not in ("z", "x"):
        raise ValueError("basis must be 'z' or 'x'")
    branches_a = _number_branches(photon_a)
    branches_b = _number_branches(photon_b)
    total = 0.0
    correct = 0.0
    for w_a, src_a, n_a in branches_a:
        for w_b, src_b, n_b in branches_b:
            if prune_double_emission and n_a >= 2 and n_b >= 2:
                continue
            for bit_a in (0, 1):
                for bit_b in (0, 1):
                    alice = encode(Encoding(basis, bit_a), src_a, "ra", "sa")
                    bob = encode(Encoding(basis, bit_b), src_b, "rb", "sb")
                    probs = bsm_pattern_probabilities(
                        tensor(alice, bob), eta_a, eta_b, det
                    )
                    for pat, p in probs.items():
                        contrib = 0.25 * w_a * w_b * p
                        total += contrib
                        if _correct_inference(basis, bit_a, bit_b, pat):
                            correct += contrib
    return GainResult(total, correct)


def key_rate_nomem(params: SystemParams) -> RateBreakdown:
    """Secret-key lower bound per transmitted pulse for the no-memory link."""
    eta_a = params.arm_transmissivity(params.distance_a_km)
    eta_b = params.arm_transmissivity(params.distance_b_km)
    det = params.detector
    p = params.double_photon_prob

    single = imperfect_photon(0.0)
    gain_z_single = bsm_gain("z", eta_a, eta_b, single, single, det)
    gain_x_single = bsm_gain("x", eta_a, eta_b, single, single, det)
    y11z = gain_z_single.total
    e11x = gain_x_single.qber(params.misalignment)

    if p > 0.0:
        src = imperfect_photon(p)
        gain_z_pp = bsm_gain(
            "z", eta_a, eta_b, src, src, det,
            prune_double_emission=params.prune_double_emission,
        )
    else:
        gain_z_pp = gain_z_single
    qppz = gain_z_pp.total
    eppz = gain_z_pp.qber(params.misalignment)

    q11z = (1.0 - p) ** 2 * y11z
    rate = q11z * (1.0 - binary_entropy(e11x)) - qppz * params.error_correction_f * binary_entropy(eppz)
    return RateBreakdown(q11z, e11x, qppz, eppz, max(rate, 0.0))
