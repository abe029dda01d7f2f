"""Dense operator and superoperator algebra for small spin chains.

All superoperators use column stacking: ``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
Site 1 is the leftmost tensor factor and the single-site basis is
(|up>, |down>) with ``sigma_z = diag(1, -1)``; an "excitation" is an up spin.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import DegenerateSpectrum, SymmetryBroken

HERMITIAN_TOL = 1e-12
RECONSTRUCTION_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)


def site_operator(op, site, n_sites):
    """Embed a single-site operator at ``site`` (1-based) in an ``n_sites`` chain."""
    if not 1 <= site <= n_sites:
        raise ValueError(f"site {site} outside chain of length {n_sites}")
    factors = [np.eye(2, dtype=complex)] * n_sites
    factors[site - 1] = op
    return reduce(np.kron, factors)


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) <= tol * scale)


def commutator(a, b):
    return a @ b - b @ a


@dataclass(frozen=True, eq=False)
class SpinChainSystem:
    """XXZ chain with its bath-coupling operators and Hamiltonian partition.

    ``couplings`` maps a terminal site to the system operator that couples to
    the bath there (the lowering operator at that site).
    """

    n_sites: int
    fields: tuple
    g: float
    anisotropy: float
    hamiltonian: np.ndarray
    number: np.ndarray
    couplings: dict
    h_left: np.ndarray
    h_middle: np.ndarray
    h_right: np.ndarray

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    def sigma(self, which, site):
        ops = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z, "+": SIGMA_PLUS, "-": SIGMA_MINUS}
        return site_operator(ops[which], site, self.n_sites)

    @property
    def magnetization(self):
        return sum(self.sigma("z", j) for j in range(1, self.n_sites + 1))

    def coupling(self, site):
        if site not in self.couplings:
            raise KeyError(f"no bath coupling defined at site {site}")
        return self.couplings[site]

    def check_invariants(self, tol=HERMITIAN_TOL):
        """Raise ``AssertionError`` if the partition or symmetry invariants fail."""
        h = self.hamiltonian
        scale = max(np.abs(h).max(), 1.0)
        assert is_hermitian(h, tol)
        assert np.abs(commutator(self.number, h)).max() <= tol * scale
        assert np.array_equal(self.h_left + self.h_middle + self.h_right, h)
        for block in (self.h_left, self.h_middle, self.h_right):
            assert is_hermitian(block, tol)
        if self.n_sites >= 2:
            for s in self.couplings.values():
                for x in (s + s.conj().T, s - s.conj().T):
                    assert np.abs(commutator(self.h_middle, x)).max() <= tol * scale


def _bond(n_sites, j, g, anisotropy):
    """-g (sx sx + sy sy + anisotropy sz sz) on bond (j, j+1)."""
    ops = (SIGMA_X, SIGMA_Y, SIGMA_Z)
    weights = (1.0, 1.0, anisotropy)
    term = sum(w * site_operator(o, j, n_sites) @ site_operator(o, j + 1, n_sites)
               for o, w in zip(ops, weights))
    return -g * term


def build_xxz(n_sites, fields, g, anisotropy=1.0):
    """Build the XXZ chain ``sum w_l/2 sz_l - g sum (sx sx + sy sy + D sz sz)``.

    The partition puts bond (1,2) plus the field at site 1 into ``h_left``,
    bond (N-1,N) plus the field at site N into ``h_right`` and everything else
    (interior fields, interior bonds) into ``h_middle``. For two sites the
    single bond is split evenly between left and right; for one site the left
    and right blocks are zero.
    """
    if int(n_sites) != n_sites or n_sites < 1:
        raise ValueError("n_sites must be a positive integer")
    n_sites = int(n_sites)
    fields = tuple(float(w) for w in np.atleast_1d(fields))
    if len(fields) != n_sites:
        raise ValueError(f"expected {n_sites} fields, got {len(fields)}")
    params = np.array(fields + (g, anisotropy), dtype=float)
    if not np.all(np.isfinite(params)):
        raise ValueError("non-finite Hamiltonian parameter")
    g = float(g)
    anisotropy = float(anisotropy)

    dim = 2 ** n_sites
    onsite = [fields[j - 1] / 2 * site_operator(SIGMA_Z, j, n_sites) for j in range(1, n_sites + 1)]
    bonds = [_bond(n_sites, j, g, anisotropy) for j in range(1, n_sites)]
    zero = np.zeros((dim, dim), dtype=complex)

    if n_sites == 1:
        h_left, h_right, h_middle = zero, zero.copy(), onsite[0]
    elif n_sites == 2:
        h_left = onsite[0] + 0.5 * bonds[0]
        h_right = onsite[1] + 0.5 * bonds[0]
        h_middle = zero
    else:
        h_left = onsite[0] + bonds[0]
        h_right = onsite[-1] + bonds[-1]
        h_middle = sum(onsite[1:-1], zero) + sum(bonds[1:-1], zero)

    # Sum the blocks rather than the raw terms so the partition is exact.
    hamiltonian = h_left + h_middle + h_right
    number = sum(site_operator(SIGMA_PLUS @ SIGMA_MINUS, j, n_sites) for j in range(1, n_sites + 1))
    couplings = {1: site_operator(SIGMA_MINUS, 1, n_sites)}
    couplings[n_sites] = site_operator(SIGMA_MINUS, n_sites, n_sites)
    system = SpinChainSystem(
        n_sites=n_sites, fields=fields, g=g, anisotropy=anisotropy,
        hamiltonian=hamiltonian, number=number, couplings=couplings,
        h_left=h_left, h_middle=h_middle, h_right=h_right,
    )
    system.check_invariants()
    return system


@dataclass(frozen=True, eq=False)
class EigenBasis:
    energies: np.ndarray
    vectors: np.ndarray
    numbers: np.ndarray
    min_gap: float

    @property
    def dim(self):
        return len(self.energies)

    def to_eigen(self, op):
        """Matrix elements <E_a| op |E_b>."""
        return self.vectors.conj().T @ op @ self.vectors

    def from_eigen(self, op):
        return self.vectors @ op @ self.vectors.conj().T

    def bohr(self):
        """Matrix of Bohr frequencies ``E[j] - E[i]`` indexed ``[i, j]``."""
        return self.energies[None, :] - self.energies[:, None]


def _sector_eigh(h, number):
    """Diagonalize ``h`` block by block when ``number`` is diagonal and conserved.

    Eigenvectors then never mix number sectors, even across exact degeneracies.
    Falls back to a plain ``eigh`` otherwise (the sector check downstream
    reports the failure).
    """
    diag = np.real(np.diag(number))
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(number - np.diag(diag)).max() > 0 or np.abs(commutator(number, h)).max() > HERMITIAN_TOL * scale:
        return np.linalg.eigh(h)
    dim = h.shape[0]
    energies = np.empty(dim)
    vectors = np.zeros((dim, dim), dtype=complex)
    col = 0
    for n in np.unique(np.rint(diag)):
        idx = np.nonzero(np.rint(diag) == n)[0]
        e, v = np.linalg.eigh(h[np.ix_(idx, idx)])
        energies[col:col + len(idx)] = e
        vectors[idx, col:col + len(idx)] = v
        col += len(idx)
    order = np.argsort(energies, kind="stable")
    return energies[order], vectors[:, order]


def eigendecompose(system, degeneracy_tolerance=None):
    """Diagonalize ``H_S``; refuse degenerate spectra and mixed number sectors.

    Args:
        system: a :class:`SpinChainSystem` (or anything with ``hamiltonian``
            and ``number`` arrays).
        degeneracy_tolerance: smallest admissible level spacing. Defaults to
            ``1e-9`` times the spectral width.

    Raises:
        DegenerateSpectrum: two levels closer than the tolerance.
        SymmetryBroken: an eigenvector does not have integer excitation number.
    """
    h = system.hamiltonian
    if not is_hermitian(h):
        raise ValueError("Hamiltonian is not Hermitian")
    energies, vectors = _sector_eigh(h, system.number)
    width = energies[-1] - energies[0]
    if degeneracy_tolerance is None:
        degeneracy_tolerance = 1e-9 * max(width, 1.0)
    min_gap = float(np.min(np.diff(energies))) if len(energies) > 1 else np.inf
    if min_gap < degeneracy_tolerance:
        raise DegenerateSpectrum(
            f"minimum level spacing {min_gap:.3e} below tolerance {degeneracy_tolerance:.3e}")
    numbers = np.real(np.einsum("ia,ij,ja->a", vectors.conj(), system.number, vectors))
    rounded = np.rint(numbers)
    if np.max(np.abs(numbers - rounded)) > 1e-8:
        raise SymmetryBroken("eigenvectors mix excitation-number sectors")
    # Fix the phase of each eigenvector (largest component real positive) for reproducibility.
    pivots = np.argmax(np.abs(vectors), axis=0)
    phases = vectors[pivots, np.arange(vectors.shape[1])]
    vectors = vectors * (np.abs(phases) / phases)[None, :]
    return EigenBasis(energies=energies, vectors=vectors, numbers=rounded.astype(int), min_gap=min_gap)


# -- vectorization ----------------------------------------------------------

def vectorize(rho):
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("vectorize expects a square matrix")
    return rho.reshape(-1, order="F")


def unvectorize(v):
    v = np.asarray(v)
    dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise ValueError(f"length {v.size} is not a perfect square")
    return v.reshape(dim, dim, order="F")


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A ``D^2 x D^2`` matrix acting on column-stacked density matrices.

    ``per_bath`` optionally splits the matrix into contributions labelled by
    bath; the parts always sum to ``matrix``.
    """

    matrix: np.ndarray
    per_bath: dict = field(default_factory=dict)
    convention: str = "column"

    @property
    def dim(self):
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho):
        return unvectorize(self.matrix @ vectorize(rho))

    def apply_part(self, label, rho):
        return unvectorize(self.per_bath[label] @ vectorize(rho))

    def __add__(self, other):
        labels = set(self.per_bath) | set(other.per_bath)
        zero = np.zeros_like(self.matrix)
        parts = {k: self.per_bath.get(k, zero) + other.per_bath.get(k, zero) for k in labels}
        return Superoperator(self.matrix + other.matrix, parts if self.per_bath and other.per_bath else {})

    def scaled(self, factor):
        return Superoperator(factor * self.matrix, {k: factor * v for k, v in self.per_bath.items()})

    def trace_row_residual(self):
        """``max |vec(1)^dagger M|``; zero for trace-preserving maps."""
        ident = vectorize(np.eye(self.dim))
        return float(np.max(np.abs(ident.conj() @ self.matrix)))


def sandwich_superop(a, b):
    """Matrix of ``rho -> a @ rho @ b``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"incompatible shapes {a.shape} and {b.shape}")
    return np.kron(b.T, a)


def left_superop(a):
    return sandwich_superop(a, np.eye(a.shape[0]))


def right_superop(b):
    return sandwich_superop(np.eye(b.shape[0]), b)


def hamiltonian_superop(h):
    """Matrix of ``rho -> i[rho, h] = -i[h, rho]``."""
    return 1j * (right_superop(h) - left_superop(h))


def dissipator_superop(jump, rate=1.0):
    """Matrix of ``rho -> rate (L rho L^+ - {L^+ L, rho}/2)``."""
    ld = jump.conj().T
    ldl = ld @ jump
    return rate * (sandwich_superop(jump, ld) - 0.5 * left_superop(ldl) - 0.5 * right_superop(ldl))


# -- states -----------------------------------------------------------------

def trace_distance(rho1, rho2):
    """Half the trace norm of ``rho1 - rho2`` (both Hermitian)."""
    rho1 = np.asarray(rho1)
    rho2 = np.asarray(rho2)
    if rho1.shape != rho2.shape:
        raise ValueError("shape mismatch")
    for r in (rho1, rho2):
        if not is_hermitian(r, 1e-10):
            raise ValueError("trace_distance requires Hermitian inputs")
    diff = rho1 - rho2
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def gibbs_state(system, beta, mu=0.0):
    """Grand-canonical state ``exp(-beta (H_S - mu N_S)) / Z``.

    Exponents are shifted by their maximum, so extreme ``beta`` never overflows.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    k = system.hamiltonian - mu * system.number
    vals, vecs = np.linalg.eigh(k)
    expo = -beta * vals
    weights = np.exp(expo - expo.max())
    weights /= weights.sum()
    rho = (vecs * weights[None, :]) @ vecs.conj().T
    return 0.5 * (rho + rho.conj().T)


def hermitize(rho):
    return 0.5 * (rho + rho.conj().T)


def min_eigenvalue(rho):
    return float(np.linalg.eigvalsh(hermitize(rho))[0])


def random_density_matrix(dim, rng, rank=None):
    """Random full-rank (or given-rank) density matrix from a Ginibre draw."""
    rank = dim if rank is None else rank
    x = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = x @ x.conj().T
    return hermitize(rho / np.trace(rho).real)


def random_pure_state(dim, rng):
    return random_density_matrix(dim, rng, rank=1)
