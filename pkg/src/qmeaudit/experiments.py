"""Experiment runners behind the command-line interface.

Each runner returns a :class:`ResultTable`; all numbers are computed from the
validated config alone, so identical configs produce identical tables.
"""
from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import diagnostics as dg
from .config import parse_config
from .errors import InsufficientData
from .generators import build, extract_kossakowski
from .operators import eigendecompose, gibbs_state, random_pure_state, trace_distance
from .steady import evolve, solve_ness

WORKERS_ENV = "QMEAUDIT_WORKERS"
CONDITIONS = ("populations", "coherences", "thermalization", "conservation",
              "complete_positivity", "bond_currents")

# Expected condition matrix: RE only breaks complete positivity; ULE gets coherences
# and conservation wrong; LLE gets populations, coherences and thermalization
# wrong; ELE drops coherences, breaks conservation and has no internal current.
TABLE_PATTERN = {
    "RE": {"populations": "pass", "coherences": "pass", "thermalization": "pass",
           "conservation": "pass", "complete_positivity": "fail", "bond_currents": "nonzero"},
    "ULE": {"populations": "pass", "coherences": "fail", "thermalization": "pass",
            "conservation": "fail", "complete_positivity": "pass", "bond_currents": "nonzero"},
    "LLE": {"populations": "fail", "coherences": "fail", "thermalization": "fail",
            "conservation": "pass", "complete_positivity": "pass", "bond_currents": "nonzero"},
    "ELE": {"populations": "pass", "coherences": "fail", "thermalization": "pass",
            "conservation": "fail", "complete_positivity": "pass", "bond_currents": "zero"},
}


@dataclasses.dataclass(frozen=True)
class ResultTable:
    columns: tuple
    rows: tuple
    meta: dict

    def as_dicts(self):
        return [dict(zip(self.columns, r)) for r in self.rows]


def worker_count():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _ordered_map(func, items):
    """Map in a process pool when requested; results always come back in input order."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# -- single parameter point ------------------------------------------------------

def point_columns(cfg):
    labels = [b.label for b in cfg.baths]
    cols = ["qme", "g", "epsilon", "thermal_distance"]
    cols += [f"I_{j}" for j in range(1, cfg.n_sites)]
    cols += [f"IB_{l}" for l in labels] + [f"JB_{l}" for l in labels]
    cols += ["bond_mismatch", "continuity_max", "boundary_diff_vs_re", "boundary_dev_vs_re",
             "conservation_relative", "kossakowski_min", "population_dev_vs_re",
             "coherence_dev_vs_re", "gap", "residual"]
    cols += [f"sz_{j}" for j in range(1, cfg.n_sites + 1)]
    cols += [f"p_{k}" for k in range(2 ** cfg.n_sites)]
    return cols


_GENERATOR_CACHE = {}


def _generators(cfg, g):
    """Generators at unit coupling for every requested kind (plus RE), memoised per process."""
    key = (cfg.config_hash(), g)
    if key not in _GENERATOR_CACHE:
        system = cfg.system(g)
        basis = eigendecompose(system)
        kinds = dict.fromkeys(("RE",) + cfg.qme)
        _GENERATOR_CACHE.clear()
        _GENERATOR_CACHE[key] = {k: build(k, system, cfg.baths, 1.0, cfg.quadrature, basis) for k in kinds}
    return _GENERATOR_CACHE[key]


def _point_rows(cfg, g, eps):
    gens = _generators(cfg, g)
    nan = float("nan")
    first = cfg.baths[0].label
    gibbs = gibbs_state(gens["RE"].system, cfg.baths[0].beta, cfg.baths[0].mu) if cfg.equilibrium else None
    ref = gens["RE"].with_epsilon(eps)
    ref_rho = solve_ness(ref).rho_ness
    ref_ib = dg.boundary_current(ref, ref_rho, first)
    rows = []
    for kind in cfg.qme:
        parts = gens[kind].with_epsilon(eps)
        report = solve_ness(parts)
        rho = report.rho_ness
        cur = dg.current_report(parts, rho)
        ib = cur.boundary_currents[first]
        pop_dev, coh_dev = dg.generator_compare_on_diagonals(parts, ref, seed=cfg.seed)
        bonds = list(cur.bond_currents)
        pops = np.real(np.diag(parts.basis.to_eigen(rho)))
        row = {
            "qme": kind, "g": g, "epsilon": eps,
            "thermal_distance": trace_distance(rho, gibbs) if gibbs is not None else nan,
            "bond_mismatch": bonds[0] - bonds[-1] if bonds else nan,
            "continuity_max": float(np.max(np.abs(cur.continuity_residuals))),
            "boundary_diff_vs_re": ib - ref_ib,
            "boundary_dev_vs_re": abs(ib - ref_ib) / max(abs(ref_ib), dg.ZERO_FLOOR),
            "conservation_relative": dg.conservation_audit(parts, seed=cfg.seed).relative,
            "kossakowski_min": extract_kossakowski(parts).min_eigenvalue,
            "population_dev_vs_re": pop_dev, "coherence_dev_vs_re": coh_dev,
            "gap": report.gap, "residual": report.residual,
        }
        row.update({f"I_{j}": v for j, v in enumerate(bonds, start=1)})
        row.update({f"IB_{k}": v for k, v in cur.boundary_currents.items()})
        row.update({f"JB_{k}": v for k, v in cur.energy_boundary_currents.items()})
        row.update({f"sz_{j}": float(np.trace(parts.system.sigma("z", j) @ rho).real)
                    for j in range(1, cfg.n_sites + 1)})
        row.update({f"p_{k}": float(v) for k, v in enumerate(pops)})
        rows.append(row)
    return rows


def _point_task(args):
    raw, g, eps = args
    cfg = parse_config(raw)
    return _point_rows(cfg, g, eps)


def _table(cfg, command, columns, dict_rows, extra_meta=None):
    rows = tuple(tuple(r.get(c, float("nan")) for c in columns) for r in dict_rows)
    meta = {"command": command, "config": cfg.name, "config_sha256": cfg.config_hash(),
            "seed": cfg.seed, "tolerances": cfg.tolerances,
            "quadrature": dataclasses.asdict(cfg.quadrature)}
    meta.update(extra_meta or {})
    return ResultTable(tuple(columns), rows, meta)


def run_ness(cfg):
    rows = _point_rows(cfg, cfg.g, cfg.epsilon)
    return _table(cfg, "ness", point_columns(cfg), rows)


SLOPE_PREFIXES = ("thermal_distance", "I_", "IB_", "JB_", "bond_mismatch", "boundary_diff_vs_re",
                  "boundary_dev_vs_re")


def run_sweep(cfg):
    """One row per grid point and kind; epsilon sweeps add slope and stderr rows."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep block")
    grid = cfg.sweep.grid
    if cfg.sweep.variable == "g":
        tasks = [(cfg.raw, float(g), cfg.epsilon) for g in grid]
    else:
        tasks = [(cfg.raw, cfg.g, float(e)) for e in grid]
    results = _ordered_map(_point_task, tasks)
    columns = ["row_type"] + point_columns(cfg)
    rows = [dict(r, row_type="point") for chunk in results for r in chunk]
    if cfg.sweep.variable == "epsilon":
        slope_cols = [c for c in columns if c.startswith(SLOPE_PREFIXES)]
        for kind in cfg.qme:
            mine = [r for r in rows if r["qme"] == kind and r["row_type"] == "point"]
            xs = [r["epsilon"] for r in mine]
            slope_row = {"row_type": "slope", "qme": kind, "g": cfg.g}
            err_row = {"row_type": "slope_stderr", "qme": kind, "g": cfg.g}
            for c in slope_cols:
                ys = [r[c] for r in mine]
                try:
                    fit = dg.scaling_slope(xs, ys)
                    slope_row[c], err_row[c] = fit.slope, fit.stderr
                except InsufficientData:
                    pass
            rows += [slope_row, err_row]
    return _table(cfg, "sweep", columns, rows, {"sweep_variable": cfg.sweep.variable})


# -- condition matrix -----------------------------------------------------------------

def expected_pattern(cfg):
    """Expected cell values; a single site satisfies every condition trivially."""
    if cfg.n_sites == 1:
        pattern = {k: {c: "pass" for c in CONDITIONS[:-1]} for k in TABLE_PATTERN}
    else:
        pattern = {k: dict(v) for k, v in TABLE_PATTERN.items()}
    for kind, cells in (cfg.expected or {}).items():
        pattern.setdefault(kind.upper(), {}).update(cells)
    return pattern


def _equilibrium_variant(cfg):
    raw = dict(cfg.raw)
    b0 = cfg.raw["baths"][0]
    raw["baths"] = [dict(b, beta=b0["beta"], mu=b0["mu"]) for b in cfg.raw["baths"]]
    raw.pop("sweep", None)
    return parse_config(raw)


def audit_matrix(cfg, eps_grid=None):
    """Observed condition-matrix cells ``{kind: {condition: (verdict, value)}}``."""
    tol = cfg.tolerances
    eps_grid = dg.default_eps_grid() if eps_grid is None else eps_grid
    gens = _generators(cfg, cfg.g)
    eq_cfg = _equilibrium_variant(cfg)
    eq_gens = {k: v for k, v in _generators(eq_cfg, eq_cfg.g).items()}
    beta, mu = eq_cfg.baths[0].beta, eq_cfg.baths[0].mu
    ref = gens["RE"].with_epsilon(cfg.epsilon)
    observed = {}
    for kind in cfg.qme:
        parts = gens[kind].with_epsilon(cfg.epsilon)
        cells = {}
        scale = max(np.abs(parts.dissipator.matrix).max(), dg.ZERO_FLOOR)
        pop_dev, coh_dev = dg.generator_compare_on_diagonals(parts, ref, seed=cfg.seed)
        cells["populations"] = ("pass" if pop_dev <= tol["match"] * scale else "fail", pop_dev)
        cells["coherences"] = ("pass" if coh_dev <= tol["match"] * scale else "fail", coh_dev)

        therm = dg.thermalization_check(eq_gens[kind].with_epsilon(cfg.epsilon), beta, mu, eps_grid)
        vanishing = max(therm.distances) < tol["thermal_zero"]
        decaying = therm.fit is not None and therm.fit.slope >= tol["thermal_slope_min"]
        # Value column: the largest distance when it vanishes, otherwise the fitted slope.
        value = max(therm.distances) if vanishing or therm.fit is None else therm.fit.slope
        cells["thermalization"] = ("pass" if vanishing or decaying else "fail", value)

        cons = dg.conservation_audit(parts, seed=cfg.seed)
        cells["conservation"] = ("pass" if cons.relative <= tol["conservation"] else "fail", cons.relative)

        kmin = extract_kossakowski(parts).min_eigenvalue
        cells["complete_positivity"] = ("pass" if kmin >= -tol["cp"] else "fail", kmin)

        if cfg.n_sites >= 2 and not cfg.equilibrium:
            bonds = dg.bond_currents(solve_ness(parts).rho_ness, parts.system)
            biggest = float(np.max(np.abs(bonds)))
            cells["bond_currents"] = ("zero" if biggest < tol["ele_bond_zero"] else "nonzero", biggest)
        observed[kind] = cells
    return observed


def run_check(cfg):
    """Audit matrix as a table plus the list of mismatched cells (in table order)."""
    observed = audit_matrix(cfg)
    expected = expected_pattern(cfg)
    rows, mismatches = [], []
    for cond in CONDITIONS:
        for kind in cfg.qme:
            if cond not in observed[kind]:
                continue
            verdict, value = observed[kind][cond]
            want = expected.get(kind, {}).get(cond, "")
            ok = not want or want == verdict
            if not ok:
                mismatches.append(f"{kind}/{cond}: expected {want}, observed {verdict}")
            rows.append({"condition": cond, "qme": kind, "observed": verdict, "expected": want,
                         "value": float(value), "match": int(ok)})
    columns = ["condition", "qme", "observed", "expected", "value", "match"]
    return _table(cfg, "check", columns, rows), mismatches


# -- time evolution -------------------------------------------------------------------

def initial_state(cfg, system, basis):
    kind = cfg.evolve["initial"]
    if kind == "gibbs":
        return gibbs_state(system, cfg.baths[0].beta, cfg.baths[0].mu)
    if kind == "random_pure":
        return random_pure_state(system.dim, np.random.default_rng(cfg.seed))
    psi = basis.vectors[:, 0].copy()
    if kind == "superposition" and system.dim > 1:
        psi = (psi + basis.vectors[:, 1]) / np.sqrt(2)
    return np.outer(psi, psi.conj())


def run_evolve(cfg):
    gens = _generators(cfg, cfg.g)
    labels = [b.label for b in cfg.baths]
    columns = ["qme", "t", "trace", "min_eigenvalue", "hermiticity_deviation"]
    columns += [f"sz_{j}" for j in range(1, cfg.n_sites + 1)] + [f"IB_{l}" for l in labels]
    rows = []
    for kind in cfg.qme:
        parts = gens[kind].with_epsilon(cfg.epsilon)
        system = parts.system
        rho0 = initial_state(cfg, system, parts.basis)
        for t in cfg.evolve["t_grid"]:
            res = evolve(parts, rho0, t)
            rho = res.rho
            row = {"qme": kind, "t": float(t), "trace": float(np.trace(rho).real),
                   "min_eigenvalue": float(np.linalg.eigvalsh(rho)[0]),
                   "hermiticity_deviation": res.hermiticity_deviation}
            row.update({f"sz_{j}": float(np.trace(system.sigma("z", j) @ rho).real)
                        for j in range(1, cfg.n_sites + 1)})
            row.update({f"IB_{l}": dg.boundary_current(parts, rho, l) for l in labels})
            rows.append(row)
    return _table(cfg, "evolve", columns, rows, {"initial": cfg.evolve["initial"]})
