"""Steady states, perturbative NESS hierarchy and time evolution."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EvolutionFailed, NonErgodicRateMatrix, NonUniqueSteadyState
from .operators import hermitize, unvectorize, vectorize

UNIQUENESS_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class SteadyStateReport:
    """Output of :func:`solve_ness`.

    Attributes:
        rho_ness: Hermitian, unit-trace steady state.
        residual: ``||L[rho]||`` (max-norm of the vectorized image).
        gap: smallest ``|Re lambda|`` over the remaining Liouvillian eigenvalues.
        unique: whether the next eigenvalue is well separated from zero.
        quality: Hermiticity/trace corrections applied after extraction.
    """

    rho_ness: np.ndarray
    residual: float
    gap: float
    unique: bool
    eigenvalue: complex
    quality: dict = field(default_factory=dict)


def _liouvillian(parts_or_matrix):
    return np.asarray(getattr(parts_or_matrix, "liouvillian", parts_or_matrix))


def solve_ness(parts, polish=True):
    """Null vector of the full Liouvillian, Hermitized and trace-normalized.

    The eigenvector with the eigenvalue nearest zero is refined by a bordered
    least-squares solve ``[L; vec(1)^+] x = [0; 1]``.

    Raises:
        NonUniqueSteadyState: the second-smallest ``|lambda|`` is below
            ``1e3`` times the residual, or the null vector is traceless.
    """
    lv = _liouvillian(parts)
    dim = int(round(np.sqrt(lv.shape[0])))
    vals, vecs = scipy.linalg.eig(lv)
    order = np.argsort(np.abs(vals))
    lam0 = vals[order[0]]
    vec = vecs[:, order[0]]
    raw_trace = np.trace(unvectorize(vec))
    if abs(raw_trace) < 1e-8 * np.linalg.norm(vec):
        raise NonUniqueSteadyState(f"null vector is traceless (trace {abs(raw_trace):.2e})")
    vec = vec / raw_trace

    if polish:
        ident = vectorize(np.eye(dim))
        bordered = np.vstack([lv, ident.conj()[None, :]])
        rhs = np.zeros(bordered.shape[0], dtype=complex)
        rhs[-1] = 1.0
        vec = np.linalg.lstsq(bordered, rhs, rcond=None)[0]

    rho = unvectorize(vec)
    herm_dev = float(np.abs(rho - rho.conj().T).max())
    rho = hermitize(rho)
    trace_dev = float(abs(np.trace(rho) - 1))
    rho = rho / np.trace(rho).real
    residual = float(np.abs(lv @ vectorize(rho)).max())

    rest = vals[order[1:]]
    gap = float(np.abs(rest.real).min()) if rest.size else np.inf
    second = float(np.abs(rest).min()) if rest.size else np.inf
    scale = max(residual, np.finfo(float).eps * max(np.abs(lv).max(), 1.0))
    unique = second > UNIQUENESS_FACTOR * scale
    if not unique:
        raise NonUniqueSteadyState(
            f"second eigenvalue {second:.2e} within {UNIQUENESS_FACTOR:g}x of residual {scale:.2e}")
    quality = {"hermiticity_deviation": herm_dev, "trace_deviation": trace_dev,
               "raw_trace": complex(raw_trace)}
    return SteadyStateReport(rho, residual, gap, unique, complex(lam0), quality)


@dataclass(frozen=True, eq=False)
class PerturbativeNess:
    """Leading-order NESS in the energy eigenbasis.

    ``rho0`` is diagonal (populations from the rate matrix); ``coherences2`` is
    the ``eps**2`` coefficient of the off-diagonal part.
    """

    rho0: np.ndarray
    coherences2: np.ndarray
    rate_matrix: np.ndarray
    basis: object

    @property
    def populations(self):
        return np.real(np.diag(self.rho0))

    def state(self, eps, site_basis=False):
        """``rho0 + eps**2 coherences2``, in the eigenbasis unless ``site_basis``."""
        rho = self.rho0 + eps ** 2 * self.coherences2
        return self.basis.from_eigen(rho) if site_basis else rho


def rate_matrix(parts, basis=None):
    """``R[a, n] = <a| L2[|n><n|] |a>`` at unit coupling."""
    basis = parts.basis if basis is None else basis
    dim = basis.dim
    u = basis.vectors
    # Transform the superoperator into the eigenbasis: vec(U^+ X U) = kron(U^T, U^+) vec(X).
    t = np.kron(u.T, u.conj().T)
    l_eig = t @ parts.unit_dissipator.matrix @ t.conj().T
    diag_idx = np.arange(dim) * (dim + 1)
    return l_eig[np.ix_(diag_idx, diag_idx)], l_eig


def perturbative_ness(parts, tol=1e-10):
    """Populations and ``O(eps^2)`` coherences of the NESS hierarchy.

    Raises:
        NonErgodicRateMatrix: the rate matrix null space is not one-dimensional.
    """
    basis = parts.basis
    dim = basis.dim
    r, l_eig = rate_matrix(parts, basis)
    r_real = r.real
    _, sv, vh = np.linalg.svd(r_real)
    scale = max(np.abs(r_real).max(), 1e-300)
    if dim > 1 and sv[-2] <= tol * scale:
        raise NonErgodicRateMatrix(f"rate matrix has a degenerate null space (sigma={sv[-2]:.2e})")
    if sv[-1] > 1e3 * tol * scale + 1e-14:
        raise NonErgodicRateMatrix(f"rate matrix has no null vector (sigma={sv[-1]:.2e})")
    pops = vh[-1]
    pops = pops / pops.sum()
    rho0 = np.diag(pops).astype(complex)

    image = unvectorize(l_eig @ vectorize(rho0))
    e = basis.energies
    # L0[rho] = i[rho, H] has elements i(E_n - E_a) rho_an in the eigenbasis.
    diff = e[None, :] - e[:, None]
    coh = np.zeros((dim, dim), dtype=complex)
    off = ~np.eye(dim, dtype=bool)
    coh[off] = -image[off] / (1j * diff[off])
    return PerturbativeNess(rho0, hermitize(coh), r_real, basis)


@dataclass(frozen=True, eq=False)
class EvolutionResult:
    rho: np.ndarray
    time: float
    hermiticity_deviation: float


def evolve(parts, rho0, t):
    """``exp(t L)[rho0]`` with Hermiticity restored; the deviation is recorded.

    Raises:
        EvolutionFailed: ``t`` is negative or the exponential is not finite.
    """
    if t < 0:
        raise EvolutionFailed("t must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return EvolutionResult(rho0.copy(), 0.0, 0.0)
    lv = _liouvillian(parts)
    try:
        prop = scipy.linalg.expm(t * lv)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise EvolutionFailed(str(exc)) from exc
    if not np.all(np.isfinite(prop)):
        raise EvolutionFailed(f"non-finite propagator at t={t}")
    rho = unvectorize(prop @ vectorize(rho0))
    dev = float(np.abs(rho - rho.conj().T).max())
    return EvolutionResult(hermitize(rho), float(t), dev)


@dataclass(frozen=True)
class PositivityProbe:
    min_eigenvalue: float
    time_at_min: float
    trajectory: tuple


def positivity_probe(parts, rho0, t_grid):
    """Smallest eigenvalue of ``rho(t)`` over ``t_grid``."""
    mins = tuple(float(np.linalg.eigvalsh(evolve(parts, rho0, t).rho)[0]) for t in t_grid)
    k = int(np.argmin(mins))
    return PositivityProbe(mins[k], float(t_grid[k]), mins)
