"""Currents, conservation residuals, generator comparisons and scaling fits.

Spin currents use the sign convention of the bond formula
``I_j = 4ig(<s+_j s-_{j+1}> - <s-_j s+_{j+1}>)``, which equals
``<i[H_S, sum_{k<=j} sz_k]>``: the rate at which the Hamiltonian moves
magnetization into sites ``1..j``. Boundary currents are the rate at which a
bath adds magnetization to the chain.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import InsufficientData, InvalidTestOperator, NonHermitianState, SplitUnavailable
from .generators import extract_kossakowski
from .operators import commutator, gibbs_state, random_density_matrix, trace_distance, unvectorize, vectorize
from .steady import solve_ness

ZERO_FLOOR = 1e-14
IMAG_TOL = 1e-12


def _expect(op, rho):
    return np.trace(op @ rho)


def _real_checked(value, what, scale=1.0):
    if abs(value.imag) > IMAG_TOL * max(scale, abs(value.real), 1.0):
        raise NonHermitianState(f"{what} has imaginary part {value.imag:.2e}")
    return float(value.real)


def bond_current(rho, system, j):
    """Spin current on bond ``(j, j+1)``, ``1 <= j <= N-1``.

    Raises:
        NonHermitianState: the expectation value has a non-negligible
            imaginary part.
    """
    if not 1 <= j <= system.n_sites - 1:
        raise ValueError(f"bond index {j} outside 1..{system.n_sites - 1}")
    op = (system.sigma("+", j) @ system.sigma("-", j + 1)
          - system.sigma("-", j) @ system.sigma("+", j + 1))
    return _real_checked(4j * system.g * _expect(op, rho), f"bond current I_{j}")


def bond_currents(rho, system):
    return [bond_current(rho, system, j) for j in range(1, system.n_sites)]


def _weight(system, weight):
    if isinstance(weight, str):
        if weight == "spin":
            return system.magnetization
        if weight == "energy":
            return system.hamiltonian
        raise ValueError(f"unknown weight {weight!r}")
    return np.asarray(weight)


def _bath_label(parts, bath):
    if isinstance(bath, str):
        return bath
    for b in parts.baths:
        if b.terminal == bath:
            return b.label
    raise KeyError(f"no bath at terminal {bath}")


def boundary_current(parts, rho, bath, weight="spin"):
    """``eps^2 Tr(W L2^(bath)[rho])`` with ``W`` the magnetization or ``H_S``.

    ``bath`` is a label or a terminal site; ``weight`` is ``"spin"``,
    ``"energy"`` or an explicit operator.

    Raises:
        SplitUnavailable: the generator carries no per-bath split.
    """
    if not parts.dissipator.per_bath:
        raise SplitUnavailable(f"{parts.kind} generator has no per-bath split")
    label = _bath_label(parts, bath)
    w = _weight(parts.system, weight)
    value = _expect(w, parts.apply_dissipator(rho, label))
    return _real_checked(value, f"boundary current {label}")


@dataclass(frozen=True)
class CurrentReport:
    """Currents in one state.

    ``continuity_residuals[k]`` is the rate of change of ``<sz_{k+1}>``
    implied by the currents: bath inflow plus bond inflow minus bond outflow.
    It vanishes site by site in a steady state of a conserving generator.
    """

    bond_currents: tuple
    boundary_currents: dict
    energy_boundary_currents: dict
    continuity_residuals: tuple


def current_report(parts, rho):
    system = parts.system
    bonds = tuple(bond_currents(rho, system))
    spin = {b.label: boundary_current(parts, rho, b.label, "spin") for b in parts.baths}
    energy = {b.label: boundary_current(parts, rho, b.label, "energy") for b in parts.baths}
    inflow = np.zeros(system.n_sites)
    for b in parts.baths:
        inflow[b.terminal - 1] += spin[b.label]
    # I_j moves magnetization from site j+1 into site j.
    for j, current in enumerate(bonds):
        inflow[j] += current
        inflow[j + 1] -= current
    return CurrentReport(bonds, spin, energy, tuple(float(x) for x in inflow))


def coherence_current(rho, system, j, basis):
    """Bond current ``j`` evaluated as a sum over eigenbasis coherences.

    ``I_j = sum_{a != n} i (E_a - E_n) <a|Q_j|n> <n|rho|a>`` with
    ``Q_j = sum_{k<=j} sz_k``; population terms drop out identically.
    """
    q = sum(system.sigma("z", k) for k in range(1, j + 1))
    q_e = basis.to_eigen(q)
    rho_e = basis.to_eigen(rho)
    e = basis.energies
    weights = 1j * (e[:, None] - e[None, :]) * q_e
    np.fill_diagonal(weights, 0.0)
    return _real_checked(np.sum(weights * rho_e.T), f"coherence current I_{j}")


def superoperator_continuity_residual(parts, rho):
    """``max_l |Tr(H_l L^(L)[rho]) + Tr(H_l L^(R)[rho]) - Tr(H_S L^(l)[rho])|``.

    ``H_l`` is the partition block attached to the terminal of bath ``l``.
    """
    system = parts.system
    blocks = {1: system.h_left, system.n_sites: system.h_right}
    images = {b.label: unvectorize(parts.unit_dissipator.per_bath[b.label] @ vectorize(rho))
              for b in parts.baths}
    worst = 0.0
    for b in parts.baths:
        h_l = blocks[b.terminal]
        lhs = sum(_expect(h_l, img) for img in images.values())
        rhs = _expect(system.hamiltonian, images[b.label])
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


# -- conservation -------------------------------------------------------------

def default_test_operators(system):
    """``H_M``, interior ``sz`` and interior bond operators (none for ``N < 3``)."""
    ops = {}
    n = system.n_sites
    if n < 3:
        return ops
    if np.abs(system.h_middle).max() > 0:
        ops["H_M"] = system.h_middle
    for j in range(2, n):
        ops[f"sz_{j}"] = system.sigma("z", j)
    for j in range(2, n - 1):
        ops[f"bond_{j}"] = (system.sigma("x", j) @ system.sigma("x", j + 1)
                            + system.sigma("y", j) @ system.sigma("y", j + 1)
                            + system.anisotropy * system.sigma("z", j) @ system.sigma("z", j + 1))
    return ops


def _check_commutes(system, name, op, tol):
    scale = max(np.abs(op).max(), 1.0)
    for site, s in system.couplings.items():
        for x in (s + s.conj().T, 1j * (s - s.conj().T)):
            if np.abs(commutator(op, x)).max() > tol * scale:
                raise InvalidTestOperator(f"{name} does not commute with the coupling at site {site}")


@dataclass(frozen=True)
class ConservationResult:
    max_residual: float
    relative: float
    norm: float
    per_operator: dict


def conservation_audit(parts, test_operators=None, states=None, n_states=20, seed=0, tol=1e-12):
    """Largest ``|Tr(O L2[rho])|`` over test operators and a random-state panel.

    ``L2`` here is the coupling-scaled dissipator. ``relative`` divides by its
    spectral norm.

    Raises:
        InvalidTestOperator: an operator fails to commute with the couplings.
    """
    system = parts.system
    ops = default_test_operators(system) if test_operators is None else dict(test_operators)
    for name, op in ops.items():
        _check_commutes(system, name, op, tol)
    if states is None:
        rng = np.random.default_rng(seed)
        states = [random_density_matrix(system.dim, rng) for _ in range(n_states)]
    mat = parts.dissipator.matrix
    norm = float(np.linalg.norm(mat, 2))
    per_op = {}
    for name, op in ops.items():
        # Tr(O L[rho]) = vec(O^T)^T M vec(rho); evaluate the row once.
        row = vectorize(op.T) @ mat
        per_op[name] = max(float(abs(row @ vectorize(rho))) for rho in states)
    worst = max(per_op.values(), default=0.0)
    return ConservationResult(worst, worst / max(norm, ZERO_FLOOR), norm, per_op)


# -- generator comparisons -------------------------------------------------------

def generator_compare_on_diagonals(parts_a, parts_b, basis=None, n_states=10, seed=0):
    """Compare two dissipators on random states diagonal in the energy eigenbasis.

    Returns:
        ``(diag_max_dev, offdiag_max_dev)`` over the panel, eigenbasis elements.
    """
    basis = parts_a.basis if basis is None else basis
    rng = np.random.default_rng(seed)
    diag_dev = off_dev = 0.0
    mask = ~np.eye(basis.dim, dtype=bool)
    for _ in range(n_states):
        pops = rng.dirichlet(np.ones(basis.dim))
        rho = basis.from_eigen(np.diag(pops).astype(complex))
        diff = basis.to_eigen(parts_a.apply_dissipator(rho) - parts_b.apply_dissipator(rho))
        diag_dev = max(diag_dev, float(np.abs(np.diag(diff)).max()))
        off_dev = max(off_dev, float(np.abs(diff[mask]).max(initial=0.0)))
    return diag_dev, off_dev


# -- scaling --------------------------------------------------------------------

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    n_used: int
    zero_flags: tuple

    def within(self, target, tol):
        return abs(self.slope - target) <= tol


def scaling_slope(xs, ys, floor=ZERO_FLOOR):
    """Least-squares slope of ``log|y|`` against ``log x``.

    Points with ``|y| < floor`` are dropped and flagged as numerically zero.

    Raises:
        InsufficientData: fewer than four usable points remain.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    zero = ys < floor
    use = ~zero & (xs > 0)
    if use.sum() < 4:
        raise InsufficientData(f"only {int(use.sum())} usable points for a slope fit")
    fit = scipy.stats.linregress(np.log(xs[use]), np.log(ys[use]))
    return SlopeFit(float(fit.slope), float(fit.stderr), float(fit.intercept), int(use.sum()),
                    tuple(bool(z) for z in zero))


def default_eps_grid():
    return np.geomspace(0.01, 0.1, 8)


@dataclass(frozen=True)
class ThermalizationResult:
    distance: float
    eps_grid: tuple
    distances: tuple
    fit: SlopeFit | None


def thermalization_check(parts, beta, mu, eps_grid=None):
    """Trace distance between the NESS and the Gibbs state, optionally over ``eps``."""
    gibbs = gibbs_state(parts.system, beta, mu)
    dist = trace_distance(solve_ness(parts).rho_ness, gibbs)
    if eps_grid is None:
        return ThermalizationResult(dist, (), (), None)
    eps_grid = tuple(float(e) for e in eps_grid)
    dists = tuple(trace_distance(solve_ness(parts.with_epsilon(e)).rho_ness, gibbs) for e in eps_grid)
    try:
        fit = scaling_slope(eps_grid, dists)
    except InsufficientData:
        fit = None
    return ThermalizationResult(dist, eps_grid, dists, fit)


# -- audit report ---------------------------------------------------------------

@dataclass(frozen=True)
class AuditReport:
    """Condition audit of one generator at one parameter point."""

    kind: str
    parameters: dict
    thermal_distance: float | None
    conservation_residual: float
    conservation_relative: float
    kossakowski_min: float
    population_dev: float
    coherence_dev: float
    population_match: bool
    coherence_match: bool
    currents: CurrentReport
    gap: float
    provenance: dict = field(default_factory=dict)


def parameter_point(parts):
    system = parts.system
    return {
        "kind": parts.kind,
        "n_sites": system.n_sites,
        "fields": tuple(system.fields),
        "g": system.g,
        "anisotropy": system.anisotropy,
        "epsilon": parts.epsilon,
        "baths": tuple((b.label, b.terminal, b.beta, b.mu, b.spectral.cutoff) for b in parts.baths),
    }


def audit(parts, reference, match_tol=1e-10, seed=0):
    """Audit ``parts`` against the Redfield generator ``reference``."""
    report = solve_ness(parts)
    rho = report.rho_ness
    baths = parts.baths
    equal = len({(b.beta, b.mu) for b in baths}) == 1
    thermal = trace_distance(rho, gibbs_state(parts.system, baths[0].beta, baths[0].mu)) if equal else None
    cons = conservation_audit(parts, seed=seed)
    kmin = extract_kossakowski(parts).min_eigenvalue
    diag_dev, off_dev = generator_compare_on_diagonals(parts, reference.with_epsilon(parts.epsilon), seed=seed)
    scale = max(np.abs(parts.dissipator.matrix).max(), ZERO_FLOOR)
    prov = {"quadrature": repr(parts.provenance.get("quadrature")), "match_tol": match_tol,
            "seed": seed, "ness_residual": report.residual}
    return AuditReport(
        kind=parts.kind, parameters=parameter_point(parts), thermal_distance=thermal,
        conservation_residual=cons.max_residual, conservation_relative=cons.relative,
        kossakowski_min=kmin, population_dev=diag_dev, coherence_dev=off_dev,
        population_match=diag_dev <= match_tol * scale, coherence_match=off_dev <= match_tol * scale,
        currents=current_report(parts, rho), gap=report.gap, provenance=prov,
    )
