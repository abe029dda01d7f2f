"""Weak-coupling master equations for a chain coupled to bosonic baths.

Four generators are assembled as dense superoperators:

* ``RE``  - Redfield, built either from the lowering-operator coupling or from
  the equivalent Hermitian-coupling form (the two must agree entrywise);
* ``LLE`` - local Lindblad, one pair of jump operators per terminal site;
* ``ELE`` - eigenbasis (secular) Lindblad;
* ``ULE`` - universal Lindblad.

Every builder computes the coupling-independent dissipator once (at unit
coupling); :class:`GeneratorParts` rescales it by ``eps**2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from . import baths as bm
from .errors import ExtractionFailed
from .operators import (
    Superoperator,
    dissipator_superop,
    eigendecompose,
    hamiltonian_superop,
    is_hermitian,
    left_superop,
    right_superop,
    sandwich_superop,
    unvectorize,
    vectorize,
)

KINDS = ("RE", "LLE", "ELE", "ULE")
_ELEMENT_TOL = 1e-14


@dataclass(frozen=True)
class Jump:
    label: str
    operator: np.ndarray
    rate: float


@dataclass(frozen=True, eq=False)
class LindbladForm:
    """Lamb shift and jump operators at unit coupling.

    ``operator_scaling`` selects where the coupling enters: ``"rate"`` means
    rates scale as ``eps**2`` (LLE, ELE); ``"operator"`` means operators scale
    as ``eps`` with unit rates (ULE).
    """

    lamb_shift: dict
    jumps: tuple
    operator_scaling: str = "rate"

    @property
    def total_lamb_shift(self):
        return sum(self.lamb_shift.values())

    def at(self, eps):
        if self.operator_scaling == "rate":
            jumps = tuple(replace(j, rate=eps ** 2 * j.rate) for j in self.jumps)
        else:
            jumps = tuple(replace(j, operator=eps * j.operator) for j in self.jumps)
        return LindbladForm({k: eps ** 2 * v for k, v in self.lamb_shift.items()}, jumps, self.operator_scaling)

    def superoperator(self):
        parts = {}
        for label, h in self.lamb_shift.items():
            parts[label] = hamiltonian_superop(h)
        for j in self.jumps:
            term = dissipator_superop(j.operator, j.rate)
            parts[j.label] = parts[j.label] + term if j.label in parts else term
        return Superoperator(sum(parts.values()), parts)


@dataclass(frozen=True, eq=False)
class GeneratorParts:
    """A master equation ``d rho/dt = i[rho, H_S] + eps^2 L2[rho]``.

    ``unit_dissipator`` is ``L2`` (Lamb-shift commutator included) with its
    split by bath label; ``dissipator`` is ``eps**2 * L2``.
    """

    kind: str
    system: object
    baths: tuple
    basis: object
    unit_dissipator: Superoperator
    epsilon: float
    lindblad: LindbladForm | None = None
    provenance: dict = field(default_factory=dict)

    def with_epsilon(self, eps):
        return replace(self, epsilon=float(eps))

    @cached_property
    def dissipator(self):
        return self.unit_dissipator.scaled(self.epsilon ** 2)

    @property
    def hamiltonian_part(self):
        h = self.system.hamiltonian
        if self.lindblad is not None:
            h = h + self.epsilon ** 2 * self.lindblad.total_lamb_shift
        return h

    @cached_property
    def liouvillian(self):
        return hamiltonian_superop(self.system.hamiltonian) + self.dissipator.matrix

    def lindblad_form(self):
        if self.lindblad is None:
            raise ValueError(f"{self.kind} has no Lindblad form")
        return self.lindblad.at(self.epsilon)

    @property
    def labels(self):
        return tuple(b.label for b in self.baths)

    def apply_dissipator(self, rho, label=None):
        mat = self.dissipator.matrix if label is None else self.dissipator.per_bath[label]
        return unvectorize(mat @ vectorize(rho))


def _prepare(system, baths, basis):
    baths = tuple(baths)
    labels = [b.label for b in baths]
    if len(set(labels)) != len(labels):
        raise ValueError("bath labels must be unique")
    if basis is None:
        basis = eigendecompose(system)
    return baths, basis


def _element_mask(op_eigen):
    return np.abs(op_eigen) > _ELEMENT_TOL * max(1.0, np.abs(op_eigen).max())


def _coefficient_matrix(func, bohr, mask):
    """``func(E_ga)`` on the non-zero elements, memoised per distinct frequency."""
    out = np.zeros(bohr.shape, dtype=complex)
    cache = {}
    for idx in zip(*np.nonzero(mask)):
        e = float(bohr[idx])
        if e not in cache:
            cache[e] = func(e)
        out[idx] = cache[e]
    return out


def _redfield_terms(s, s_c, s_d, raising):
    """Superoperator of ``-[rho S_C, R] - [R, S_D rho] + h.c.`` for one coupling.

    ``R`` is the raising partner (``S^+`` for Redfield, a frequency-restricted
    piece of it for the secular equation).
    """
    s_cd = s_c.conj().T
    s_dd = s_d.conj().T
    return (
        -right_superop(s_c @ raising) + sandwich_superop(raising, s_c)
        - left_superop(raising @ s_d) + sandwich_superop(s_d, raising)
        - left_superop(raising.conj().T @ s_cd) + sandwich_superop(s_cd, raising.conj().T)
        - right_superop(s_dd @ raising.conj().T) + sandwich_superop(raising.conj().T, s_dd)
    )


def build_redfield(system, baths, eps=1.0, quad=bm.PvQuadrature(), basis=None):
    """Redfield generator from the lowering-operator coupling of each bath."""
    baths, basis = _prepare(system, baths, basis)
    u = basis.vectors
    bohr = basis.bohr()
    parts = {}
    for bath in baths:
        s = system.coupling(bath.terminal)
        s_e = basis.to_eigen(s)
        mask = _element_mask(s_e)
        c = _coefficient_matrix(lambda e: bm.redfield_C(bath, e, quad), bohr, mask)
        d = _coefficient_matrix(lambda e: bm.redfield_D(bath, e, quad), bohr, mask)
        s_c = u @ (c * s_e) @ u.conj().T
        s_d = u @ (d * s_e) @ u.conj().T
        parts[bath.label] = _redfield_terms(s, s_c, s_d, s.conj().T)
    return GeneratorParts("RE", system, baths, basis, Superoperator(sum(parts.values()), parts),
                          float(eps), provenance={"quadrature": quad, "construction": "lowering"})


def hermitian_couplings(s):
    """Hermitian pieces ``(S + S^+, i (S - S^+))`` of a coupling operator."""
    sd = s.conj().T
    return (s + sd, 1j * (s - sd))


def _gamma_matrix(bath, energy, quad):
    """One-sided transform ``pi G(E) - i P int G(w) / (w - E) dw`` (2x2)."""
    spec = bm.bath_spectrum(bath, [energy])[0]
    pv = (bm.PLUS * bm.pv_occupied_plus_one(bath, energy, quad)
          - bm.MINUS * bm.pv_occupied(bath, -energy, quad)) / (8 * np.pi)
    return np.pi * spec - 1j * pv


def build_redfield_hermitian(system, baths, eps=1.0, quad=bm.PvQuadrature(), basis=None):
    """Redfield generator written with Hermitian coupling operators.

    Uses ``-sum_{k,k'} [X_k, X_{k'k} rho] + h.c.`` where ``X_{k'k}`` is the
    one-sided transform of the bath correlation applied to ``X_{k'}(-t)``.
    """
    baths, basis = _prepare(system, baths, basis)
    u = basis.vectors
    bohr = basis.bohr()
    parts = {}
    for bath in baths:
        xs = hermitian_couplings(system.coupling(bath.terminal))
        xs_e = [basis.to_eigen(x) for x in xs]
        mask = _element_mask(xs_e[0]) | _element_mask(xs_e[1])
        gammas = {}
        for idx in zip(*np.nonzero(mask)):
            e = float(bohr[idx])
            if e not in gammas:
                gammas[e] = _gamma_matrix(bath, e, quad)
        total = 0
        for k, x in enumerate(xs):
            z_e = np.zeros_like(xs_e[0])
            for idx in zip(*np.nonzero(mask)):
                gam = gammas[float(bohr[idx])]
                z_e[idx] = gam[k, 0] * xs_e[0][idx] + gam[k, 1] * xs_e[1][idx]
            z = u @ z_e @ u.conj().T
            zd = z.conj().T
            total = total + (-left_superop(x @ z) + sandwich_superop(z, x)
                             - right_superop(zd @ x) + sandwich_superop(x, zd))
        parts[bath.label] = total
    return GeneratorParts("RE", system, baths, basis, Superoperator(sum(parts.values()), parts),
                          float(eps), provenance={"quadrature": quad, "construction": "hermitian"})


def build_local_lindblad(system, baths, eps=1.0, quad=bm.PvQuadrature(), basis=None):
    """Local Lindblad equation: site-local decay and pumping at the terminal field."""
    baths, basis = _prepare(system, baths, basis)
    lamb, jumps = {}, []
    for bath in baths:
        w0 = system.fields[bath.terminal - 1]
        if not w0 > 0:
            raise ValueError(f"local Lindblad needs a positive field at site {bath.terminal}")
        s = system.coupling(bath.terminal)
        sd = s.conj().T
        j = float(bath.spectral(w0))
        n = float(bm.occupation(bath, w0))
        q = quad.for_bath(bath)
        shift = -bm.pv_halfline(bath.spectral, w0, q) / (2 * np.pi)
        shift_n = -bm.pv_occupied(bath, w0, quad) / (2 * np.pi)
        jumps.append(Jump(bath.label, s, j * (n + 1)))
        jumps.append(Jump(bath.label, sd, j * n))
        lamb[bath.label] = (shift + 2 * shift_n) * (sd @ s - s @ sd) / 2
    form = LindbladForm(lamb, tuple(jumps), "rate")
    return GeneratorParts("LLE", system, baths, basis, form.superoperator(), float(eps), form,
                          provenance={"quadrature": quad})


def _cluster(values, tol):
    """Group sorted frequencies whose consecutive gaps are within ``tol``."""
    order = np.argsort(values, kind="stable")
    groups, current = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] <= tol:
            current.append(b)
        else:
            groups.append(current)
            current = [b]
    groups.append(current)
    return groups


def build_eigenbasis_lindblad(system, baths, eps=1.0, quad=bm.PvQuadrature(), secular_tol=None, basis=None):
    """Secular (eigenbasis) Lindblad equation.

    Redfield terms are kept only between transitions with equal Bohr
    frequency (within ``secular_tol``, default ``1e-9`` times the spectral
    width). Each frequency group becomes one jump operator ``A(w)`` with rate
    ``J(w)(n(w)+1)`` and its adjoint with rate ``J(w) n(w)``.
    """
    baths, basis = _prepare(system, baths, basis)
    width = basis.energies[-1] - basis.energies[0]
    if secular_tol is None:
        secular_tol = 1e-9 * max(width, 1.0)
    u = basis.vectors
    bohr = basis.bohr()
    lamb, jumps, warnings, groups_seen = {}, [], [], 0
    for bath in baths:
        s_e = basis.to_eigen(system.coupling(bath.terminal))
        idx = np.argwhere(_element_mask(s_e))
        freqs = np.array([bohr[a, g] for a, g in idx])
        h_ls = np.zeros_like(s_e)
        for group in _cluster(freqs, secular_tol):
            spread = freqs[group].max() - freqs[group].min()
            if spread > 1e-12 * max(width, 1.0):
                warnings.append(f"{bath.label}: Bohr frequencies spread {spread:.2e} merged as secular")
            omega = float(np.mean(freqs[group]))
            a_e = np.zeros_like(s_e)
            for k in group:
                a, g = idx[k]
                a_e[a, g] = s_e[a, g]
            a_op = u @ a_e @ u.conj().T
            c = bm.redfield_C(bath, omega, quad)
            d = bm.redfield_D(bath, omega, quad)
            jumps.append(Jump(bath.label, a_op, 2 * d.real))
            jumps.append(Jump(bath.label, a_op.conj().T, 2 * c.real))
            # Imaginary parts of C, D give the Lamb shift -Im C A A^+ + Im D A^+ A.
            h_ls = h_ls - c.imag * a_op @ a_op.conj().T + d.imag * a_op.conj().T @ a_op
            groups_seen += 1
        lamb[bath.label] = 0.5 * (h_ls + h_ls.conj().T)
    form = LindbladForm(lamb, tuple(jumps), "rate")
    prov = {"quadrature": quad, "secular_tol": secular_tol, "frequency_groups": groups_seen,
            "warnings": warnings}
    return GeneratorParts("ELE", system, baths, basis, form.superoperator(), float(eps), form, provenance=prov)


def build_ule(system, baths, eps=1.0, quad=bm.PvQuadrature(), basis=None):
    """Universal Lindblad equation with two jump operators per bath.

    ``L_(b,k) = 2 pi sum_k' g_kk'(E_ga) <a|X_k'|g> |a><g|`` and the Lamb shift
    ``sum X_k(a,h) X_k'(h,g) f_kk'(E_h - E_a, E_g - E_h) |a><g|``.
    """
    baths, basis = _prepare(system, baths, basis)
    u = basis.vectors
    bohr = basis.bohr()
    energies = basis.energies
    lamb, jumps = {}, []
    for bath in baths:
        xs_e = [basis.to_eigen(x) for x in hermitian_couplings(system.coupling(bath.terminal))]
        mask = _element_mask(xs_e[0]) | _element_mask(xs_e[1])
        g = bm._g_blocks(bath, bohr.ravel()).reshape(bohr.shape + (2, 2))
        for k in range(2):
            l_e = 2 * np.pi * (g[..., k, 0] * xs_e[0] + g[..., k, 1] * xs_e[1]) * mask
            jumps.append(Jump(bath.label, u @ l_e @ u.conj().T, 1.0))

        h_e = np.zeros_like(xs_e[0])
        dim = len(energies)
        for eta in range(dim):
            left = np.nonzero(mask[:, eta])[0]
            right = np.nonzero(mask[eta, :])[0]
            for a in left:
                for c in right:
                    f = bm._ule_f_cached(bath, float(energies[eta] - energies[a]),
                                         float(energies[c] - energies[eta]), quad)
                    h_e[a, c] += sum(xs_e[k][a, eta] * xs_e[kp][eta, c] * f[k, kp]
                                     for k in range(2) for kp in range(2))
        if not is_hermitian(h_e, 1e-9):
            raise ExtractionFailed("ULE Lamb shift is not Hermitian")
        lamb[bath.label] = u @ (0.5 * (h_e + h_e.conj().T)) @ u.conj().T
    form = LindbladForm(lamb, tuple(jumps), "operator")
    return GeneratorParts("ULE", system, baths, basis, form.superoperator(), float(eps), form,
                          provenance={"quadrature": quad})


BUILDERS = {
    "RE": build_redfield,
    "LLE": build_local_lindblad,
    "ELE": build_eigenbasis_lindblad,
    "ULE": build_ule,
}


def build(kind, system, baths, eps=1.0, quad=bm.PvQuadrature(), basis=None):
    return BUILDERS[kind.upper()](system, baths, eps=eps, quad=quad, basis=basis)


# -- complete positivity ----------------------------------------------------

def gell_mann_basis(dim):
    """Orthonormal traceless basis: symmetric, antisymmetric, then diagonal elements."""
    sym, anti, diag = [], [], []
    for j in range(dim):
        for k in range(j + 1, dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[j, k] = e[k, j] = 1 / np.sqrt(2)
            sym.append(e)
            e = np.zeros((dim, dim), dtype=complex)
            e[j, k] = -1j / np.sqrt(2)
            e[k, j] = 1j / np.sqrt(2)
            anti.append(e)
    for l in range(1, dim):
        e = np.zeros((dim, dim), dtype=complex)
        e[np.arange(l), np.arange(l)] = 1.0
        e[l, l] = -l
        diag.append(e / np.sqrt(l * (l + 1)))
    return sym + anti + diag


@dataclass(frozen=True, eq=False)
class KossakowskiMatrix:
    basis: list
    matrix: np.ndarray
    hamiltonian: np.ndarray
    min_eigenvalue: float

    def superoperator(self):
        """Reassemble ``-i[H, rho] + sum c_ij (F_i rho F_j^+ - {F_j^+ F_i, rho}/2)``."""
        dim = self.hamiltonian.shape[0]
        f = np.array(self.basis)
        total = -1j * (left_superop(self.hamiltonian) - right_superop(self.hamiltonian))
        # sum_ij c_ij F_i rho F_j^+  ->  sum_ij c_ij kron(conj(F_j), F_i)
        flat = f.reshape(len(f), -1)
        choi = flat.T @ self.matrix @ flat.conj()
        total = total + _choi_to_superop(choi, dim)
        anti = np.einsum("ij,jab,ibc->ac", self.matrix, f.conj().transpose(0, 2, 1), f)
        return total - 0.5 * (left_superop(anti) + right_superop(anti))


def _superop_to_choi(mat, dim):
    """Reshuffle so that ``rho -> A rho B^+`` maps to ``outer(vec_r(A), conj(vec_r(B)))``."""
    return mat.reshape(dim, dim, dim, dim).transpose(1, 3, 0, 2).reshape(dim * dim, dim * dim)


def _choi_to_superop(choi, dim):
    return choi.reshape(dim, dim, dim, dim).transpose(2, 0, 3, 1).reshape(dim * dim, dim * dim)


def extract_kossakowski(parts_or_superop, tol=1e-8):
    """Kossakowski matrix of a trace- and Hermiticity-preserving generator.

    Accepts :class:`GeneratorParts` (its ``dissipator`` is used) or a
    :class:`Superoperator`. The Hamiltonian component is returned separately.

    Raises:
        ExtractionFailed: the reassembled generator differs from the input by
            more than ``tol`` relative to its norm.
    """
    sup = getattr(parts_or_superop, "dissipator", parts_or_superop)
    mat = sup.matrix
    dim = sup.dim
    basis = gell_mann_basis(dim)
    full = [np.eye(dim, dtype=complex) / np.sqrt(dim)] + basis
    v = np.array([f.reshape(-1) for f in full]).T
    coeffs = v.conj().T @ _superop_to_choi(mat, dim) @ v
    kmat = coeffs[1:, 1:]
    herm_dev = np.abs(kmat - kmat.conj().T).max(initial=0.0)
    scale = max(np.abs(mat).max(initial=0.0), 1e-300)
    if herm_dev > tol * scale:
        raise ExtractionFailed(f"Kossakowski matrix not Hermitian (deviation {herm_dev:.2e})")
    kmat = 0.5 * (kmat + kmat.conj().T)
    f_op = sum(coeffs[i, 0] * full[i] for i in range(1, len(full))) / np.sqrt(dim)
    f_op = f_op + coeffs[0, 0] / (2 * dim) * np.eye(dim)
    ham = (f_op.conj().T - f_op) / 2j
    result = KossakowskiMatrix(basis, kmat, ham, float(np.linalg.eigvalsh(kmat)[0]))
    err = np.abs(result.superoperator() - mat).max()
    if err > tol * scale:
        raise ExtractionFailed(f"reassembly mismatch {err:.2e}; generator is not GKSL-decomposable")
    return result
