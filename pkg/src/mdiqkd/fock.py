"""Exact density-operator simulation of truncated bosonic modes.

States live on a tensor product of number-truncated optical (or collective
atomic) modes and are stored as dense complex matrices in the occupation
basis.  Channels are applied exactly: photon loss through its Kraus
decomposition, beamsplitters through photon-number-conserving unitaries.

The balanced beamsplitter uses the fixed sign convention

    a -> (a + b) / sqrt(2),    b -> (a - b) / sqrt(2),

where ``a`` is the first and ``b`` the second mode argument.  A *butterfly*
channel is the standard lossy Bell-measurement arm: independent loss on the
two inputs followed by a balanced beamsplitter.

Every operation is a pure function of immutable inputs; the underlying
arrays are marked read-only so states can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial, sqrt
from typing import Iterable, Mapping, Sequence

import numpy as np

# Per-mode truncation cap used when a balanced beamsplitter has to grow the
# local cutoffs to hold all output photons (two cutoff-2 inputs need 4).
DEFAULT_CUTOFF_CAP = 4

# Population above the cap smaller than this is treated as roundoff.
CLIP_TOL = 1e-12

HERMITICITY_TOL = 1e-12
POSITIVITY_FLOOR = -1e-10
TRACE_TOL = 1e-12


class CutoffOverflowError(RuntimeError):
    """A beamsplitter would push population above the configured cutoff cap."""


@dataclass(frozen=True)
class ModeLayout:
    """Ordered collection of named modes with per-mode photon-number cutoffs.

    ``labels`` must be unique and every cutoff must be at least 1.  The total
    Hilbert-space dimension is ``prod(cutoff_i + 1)``.
    """

    labels: tuple[str, ...]
    cutoffs: tuple[int, ...]

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        cutoffs = tuple(int(c) for c in self.cutoffs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "cutoffs", cutoffs)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate mode labels in {labels!r}")
        if len(cutoffs) != len(labels):
            raise ValueError("labels and cutoffs must have equal length")
        if any(c < 1 for c in cutoffs):
            raise ValueError("every cutoff must be >= 1")

    @classmethod
    def uniform(cls, labels: Iterable[str], cutoff: int) -> "ModeLayout":
        labels = tuple(labels)
        return cls(labels, (cutoff,) * len(labels))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self) -> int:
        d = 1
        for c in self.cutoffs:
            d *= c + 1
        return d

    @property
    def num_modes(self) -> int:
        return len(self.labels)

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown mode {label!r}; layout has {self.labels}") from None

    def cutoff(self, label: str) -> int:
        return self.cutoffs[self.axis(label)]

    def index_of(self, occupations: Sequence[int]) -> int:
        """Flat basis index of the occupation tuple (row-major over modes)."""
        if len(occupations) != self.num_modes:
            raise ValueError("occupation tuple has wrong length")
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def occupations(self) -> np.ndarray:
        """All basis occupation tuples as an array of shape (dim, num_modes)."""
        grids = np.indices(self.dims).reshape(self.num_modes, -1)
        return grids.T


@dataclass(frozen=True)
class FockState:
    """Density operator (possibly subnormalized) on a :class:`ModeLayout`."""

    layout: ModeLayout
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex, copy=True)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(
                f"matrix shape {m.shape} does not match layout dimension {self.layout.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def is_normalized(self) -> bool:
        return abs(self.trace - 1.0) <= 1e-9

    def normalized(self) -> "FockState":
        tr = self.trace
        if tr <= 0.0:
            raise ValueError("cannot normalize a state with non-positive trace")
        return FockState(self.layout, self.matrix / tr)

    def scaled(self, factor: float | complex) -> "FockState":
        return FockState(self.layout, self.matrix * factor)

    def __add__(self, other: "FockState") -> "FockState":
        if self.layout != other.layout:
            raise ValueError("cannot add states on different layouts")
        return FockState(self.layout, self.matrix + other.matrix)

    def diagonal(self) -> np.ndarray:
        """Real part of the occupation-basis diagonal, shaped per mode."""
        return np.real(np.diagonal(self.matrix)).reshape(self.layout.dims)

    def relabeled(self, mapping: Mapping[str, str]) -> "FockState":
        labels = tuple(mapping.get(l, l) for l in self.layout.labels)
        return FockState(ModeLayout(labels, self.layout.cutoffs), self.matrix)


def vacuum(labels: Iterable[str], cutoff: int = 1) -> FockState:
    layout = ModeLayout.uniform(labels, cutoff)
    m = np.zeros((layout.dim, layout.dim), dtype=complex)
    m[0, 0] = 1.0
    return FockState(layout, m)


def number_state(layout: ModeLayout, occupations: Sequence[int]) -> FockState:
    """Pure occupation state |n_1 ... n_k><n_1 ... n_k|."""
    for n, c in zip(occupations, layout.cutoffs):
        if not 0 <= n <= c:
            raise ValueError(f"occupation {n} outside cutoff {c}")
    idx = layout.index_of(occupations)
    m = np.zeros((layout.dim, layout.dim), dtype=complex)
    m[idx, idx] = 1.0
    return FockState(layout, m)


def pure_state(layout: ModeLayout, amplitudes: Mapping[tuple[int, ...], complex]) -> FockState:
    """Density operator of the pure state with the given occupation amplitudes."""
    vec = np.zeros(layout.dim, dtype=complex)
    for occ, amp in amplitudes.items():
        vec[layout.index_of(occ)] = amp
    return from_state_vector(layout, vec)


def from_state_vector(layout: ModeLayout, vec: np.ndarray) -> FockState:
    vec = np.asarray(vec, dtype=complex).reshape(layout.dim)
    return FockState(layout, np.outer(vec, vec.conj()))


# ---------------------------------------------------------------------------
# Structural operations
# ---------------------------------------------------------------------------

def tensor(a: FockState, b: FockState) -> FockState:
    """Tensor product; trace multiplies, layouts concatenate."""
    overlap = set(a.layout.labels) & set(b.layout.labels)
    if overlap:
        raise ValueError(f"duplicate mode labels in tensor product: {sorted(overlap)}")
    layout = ModeLayout(a.layout.labels + b.layout.labels, a.layout.cutoffs + b.layout.cutoffs)
    return FockState(layout, np.kron(a.matrix, b.matrix))


def partial_trace(rho: FockState, discard: Iterable[str]) -> FockState:
    """Trace out the named modes; the remaining modes keep their order."""
    discard = tuple(discard)
    axes = sorted(rho.layout.axis(name) for name in discard)
    if len(set(axes)) != len(axes):
        raise ValueError("repeated mode name in discard list")
    dims = rho.layout.dims
    k = rho.layout.num_modes
    t = rho.matrix.reshape(dims + dims)
    for ax in reversed(axes):
        t = np.trace(t, axis1=ax, axis2=ax + k)
        k -= 1
    keep = [i for i in range(rho.layout.num_modes) if i not in axes]
    layout = ModeLayout(
        tuple(rho.layout.labels[i] for i in keep),
        tuple(rho.layout.cutoffs[i] for i in keep),
    )
    return FockState(layout, t.reshape(layout.dim, layout.dim))


def with_cutoffs(rho: FockState, new_cutoffs: Mapping[str, int]) -> FockState:
    """Embed the state into a layout with enlarged per-mode cutoffs."""
    cutoffs = list(rho.layout.cutoffs)
    for label, c in new_cutoffs.items():
        ax = rho.layout.axis(label)
        if c < cutoffs[ax]:
            raise ValueError("cutoffs can only be enlarged")
        cutoffs[ax] = int(c)
    layout = ModeLayout(rho.layout.labels, tuple(cutoffs))
    if layout.dims == rho.layout.dims:
        return rho
    old = rho.matrix.reshape(rho.layout.dims + rho.layout.dims)
    new = np.zeros(layout.dims + layout.dims, dtype=complex)
    sl = tuple(slice(0, d) for d in rho.layout.dims)
    new[sl + sl] = old
    return FockState(layout, new.reshape(layout.dim, layout.dim))


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

def _apply_mode_kraus(rho: FockState, label: str, kraus: Sequence[np.ndarray]) -> FockState:
    ax = rho.layout.axis(label)
    dims = rho.layout.dims
    k = rho.layout.num_modes
    t = rho.matrix.reshape(dims + dims)
    out = np.zeros_like(t)
    for a_op in kraus:
        u = np.moveaxis(np.tensordot(a_op, t, axes=(1, ax)), 0, ax)
        u = np.moveaxis(np.tensordot(a_op.conj(), u, axes=(1, k + ax)), 0, k + ax)
        out += u
    return FockState(rho.layout, out.reshape(rho.matrix.shape))


def _loss_kraus(cutoff: int, eta: float) -> list[np.ndarray]:
    d = cutoff + 1
    ops = []
    for lost in range(d):
        a_op = np.zeros((d, d))
        for n in range(lost, d):
            a_op[n - lost, n] = sqrt(comb(n, lost) * eta ** (n - lost) * (1.0 - eta) ** lost)
        ops.append(a_op)
    return ops


def apply_loss(rho: FockState, mode: str, eta: float) -> FockState:
    """Pure-loss (fictitious beamsplitter) channel with transmissivity eta."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmissivity must be in [0, 1], got {eta}")
    if eta == 1.0:
        rho.layout.axis(mode)  # still validate the label
        return rho
    return _apply_mode_kraus(rho, mode, _loss_kraus(rho.layout.cutoff(mode), eta))


def apply_phase(rho: FockState, mode: str, phi: float) -> FockState:
    """Phase shifter exp(i phi n) on one mode."""
    d = rho.layout.cutoff(mode) + 1
    u = np.diag(np.exp(1j * phi * np.arange(d)))
    return _apply_mode_kraus(rho, mode, [u])


def _apply_pair_unitary(rho: FockState, m1: str, m2: str, u_mat: np.ndarray) -> FockState:
    ax1 = rho.layout.axis(m1)
    ax2 = rho.layout.axis(m2)
    dims = rho.layout.dims
    k = rho.layout.num_modes
    t = rho.matrix.reshape(dims + dims)
    for (a1, a2), op in (((ax1, ax2), u_mat), ((k + ax1, k + ax2), u_mat.conj())):
        d1, d2 = t.shape[a1], t.shape[a2]
        u = np.moveaxis(t, (a1, a2), (0, 1))
        shape = u.shape
        u = op @ u.reshape(d1 * d2, -1)
        t = np.moveaxis(u.reshape(shape), (0, 1), (a1, a2))
    return FockState(rho.layout, t.reshape(rho.matrix.shape))


def _balanced_bs_matrix(dim: int) -> np.ndarray:
    """Two-mode balanced-BS unitary on the (dim x dim) occupation grid.

    Columns with total photon number above ``dim - 1`` would leak outside the
    truncation; they are left zero and callers must guarantee they carry no
    population (see :func:`apply_balanced_bs`).
    """
    u = np.zeros((dim * dim, dim * dim))
    for m in range(dim):
        for n in range(dim):
            total = m + n
            if total > dim - 1:
                continue
            norm = sqrt(factorial(m) * factorial(n) * 2.0 ** total)
            for k in range(total + 1):
                coeff = 0
                for i in range(max(0, k - n), min(m, k) + 1):
                    coeff += comb(m, i) * comb(n, k - i) * (-1) ** (n - (k - i))
                if coeff == 0:
                    continue
                amp = coeff * sqrt(factorial(k) * factorial(total - k)) / norm
                u[k * dim + (total - k), m * dim + n] = amp
    return u


def max_total_occupation(rho: FockState, modes: Sequence[str], tol: float = CLIP_TOL) -> int:
    """Largest total photon number over ``modes`` carried by any populated

    basis state (rows or columns with any entry above ``tol``)."""
    axes = [rho.layout.axis(m) for m in modes]
    occ = rho.layout.occupations()[:, axes].sum(axis=1)
    mask = np.any(np.abs(rho.matrix) > tol, axis=1) | np.any(np.abs(rho.matrix) > tol, axis=0)
    if not mask.any():
        return 0
    return int(occ[mask].max())


def apply_balanced_bs(
    rho: FockState, m1: str, m2: str, cutoff_cap: int = DEFAULT_CUTOFF_CAP
) -> FockState:
    """50/50 beamsplitter a->(a+b)/sqrt2, b->(a-b)/sqrt2 on modes (m1, m2).

    The two local cutoffs are grown so that no populated output component is
    clipped.  Growth beyond ``cutoff_cap`` raises :class:`CutoffOverflowError`.
    """
    needed = max_total_occupation(rho, (m1, m2))
    if needed > cutoff_cap:
        raise CutoffOverflowError(
            f"beamsplitter on ({m1}, {m2}) needs cutoff {needed} > cap {cutoff_cap}"
        )
    target = max(rho.layout.cutoff(m1), rho.layout.cutoff(m2), needed, 1)
    rho = with_cutoffs(rho, {m1: target, m2: target})
    u = _balanced_bs_matrix(target + 1)
    return _apply_pair_unitary(rho, m1, m2, u)


@dataclass(frozen=True)
class ButterflyParams:
    """Transmissivities of the two loss arms feeding a balanced beamsplitter."""

    eta_a: float
    eta_b: float

    def __post_init__(self) -> None:
        for name, eta in (("eta_a", self.eta_a), ("eta_b", self.eta_b)):
            if not 0.0 <= eta <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {eta}")


def butterfly(
    rho: FockState,
    m1: str,
    m2: str,
    params: ButterflyParams,
    cutoff_cap: int = DEFAULT_CUTOFF_CAP,
) -> FockState:
    """Lossy Bell-measurement arm: loss eta_a on m1, eta_b on m2, then the

    balanced beamsplitter mixing (m1, m2)."""
    rho = apply_loss(rho, m1, params.eta_a)
    rho = apply_loss(rho, m2, params.eta_b)
    return apply_balanced_bs(rho, m1, m2, cutoff_cap=cutoff_cap)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def mean_photon_number(rho: FockState, mode: str) -> float:
    ax = rho.layout.axis(mode)
    diag = rho.diagonal()
    n = np.arange(rho.layout.dims[ax])
    shape = [1] * rho.layout.num_modes
    shape[ax] = -1
    return float((diag * n.reshape(shape)).sum())


def total_photon_distribution(rho: FockState, modes: Sequence[str] | None = None) -> np.ndarray:
    """Probability distribution of the total photon number over ``modes``."""
    labels = tuple(modes) if modes is not None else rho.layout.labels
    axes = [rho.layout.axis(m) for m in labels]
    totals = rho.layout.occupations()[:, axes].sum(axis=1)
    diag = np.real(np.diagonal(rho.matrix))
    dist = np.zeros(int(totals.max()) + 1)
    np.add.at(dist, totals, diag)
    return dist


def check_density(rho: FockState) -> None:
    """Assert the core density-operator invariants; raises ValueError."""
    m = rho.matrix
    if np.abs(m - m.conj().T).max() > HERMITICITY_TOL:
        raise ValueError("state is not Hermitian within tolerance")
    eigs = np.linalg.eigvalsh((m + m.conj().T) / 2.0)
    if eigs.min() < POSITIVITY_FLOOR:
        raise ValueError(f"state is not positive semidefinite (min eig {eigs.min():.3e})")
    tr = rho.trace
    if not 0.0 < tr <= 1.0 + TRACE_TOL:
        raise ValueError(f"trace {tr} outside (0, 1]")
