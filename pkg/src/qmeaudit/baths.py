"""Bosonic baths: spectral functions, occupations and principal-value integrals.

Principal values are computed by singularity subtraction on a finite window
``[0, cutoff]``; the default cutoff is eight times the spectral cutoff, where
the Gaussian tail is below 1e-27. Each panel between breakpoints is integrated
with a tanh-sinh rule, which converges double-exponentially even with
square-root behaviour at the panel ends.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import PoleInOccupation, QuadratureDiverged

CUTOFF_FACTOR = 8.0


@dataclass(frozen=True)
class SpectralFunction:
    """Ohmic spectral function with a Gaussian cutoff, ``a w exp(-(w/wc)^2)`` for ``w > 0``.

    ``amplitude = 0`` describes a bath that is switched off.
    """

    cutoff: float = 10.0
    amplitude: float = 1.0
    kind: str = "ohmic_gaussian"

    def __post_init__(self):
        if self.kind != "ohmic_gaussian":
            raise ValueError(f"unsupported spectral function kind {self.kind!r}")
        if not self.cutoff > 0:
            raise ValueError("spectral cutoff must be positive")
        if not self.amplitude >= 0:
            raise ValueError("spectral amplitude must be non-negative")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        pos = np.where(omega > 0, omega, 0.0)
        return self.amplitude * pos * np.exp(-(pos / self.cutoff) ** 2)


@dataclass(frozen=True)
class BathSpec:
    beta: float
    mu: float
    terminal: int
    spectral: SpectralFunction = field(default_factory=SpectralFunction)
    statistics: str = "bosonic"
    label: str = ""

    def __post_init__(self):
        if self.statistics != "bosonic":
            raise ValueError("only bosonic baths are supported")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive and finite")
        if not (np.isfinite(self.mu) and self.mu < 0):
            raise ValueError("bosonic baths need a negative chemical potential")
        if not self.label:
            object.__setattr__(self, "label", f"site{self.terminal}")

    @property
    def default_cutoff(self):
        return CUTOFF_FACTOR * self.spectral.cutoff


def spectral_density(spec, omega):
    return spec(omega)


def occupation(bath, omega):
    """Bose occupation ``1 / (exp(beta (w - mu)) - 1)``."""
    x = bath.beta * (np.asarray(omega, dtype=float) - bath.mu)
    if np.any(x <= 0):
        raise PoleInOccupation("beta (omega - mu) must be positive for a bosonic bath")
    with np.errstate(over="ignore"):
        return 1.0 / np.expm1(x)


def _jn(bath, omega):
    """``J(w) n(w)``, zero for ``w <= 0`` without touching the occupation pole."""
    omega = np.asarray(omega, dtype=float)
    pos = omega > 0
    out = np.zeros_like(omega)
    if np.any(pos):
        out[pos] = bath.spectral(omega[pos]) * occupation(bath, omega[pos])
    return out


def _jn1(bath, omega):
    """``J(w) (n(w) + 1)``; equal to ``exp(beta (w - mu)) J(w) n(w)``."""
    omega = np.asarray(omega, dtype=float)
    pos = omega > 0
    out = np.zeros_like(omega)
    if np.any(pos):
        out[pos] = bath.spectral(omega[pos]) * (occupation(bath, omega[pos]) + 1.0)
    return out


# -- quadrature -------------------------------------------------------------

@dataclass(frozen=True)
class PvQuadrature:
    """Composite tanh-sinh rule used for all principal-value integrals.

    Attributes:
        points: total number of nodes on the integration window.
        panel_nodes: nodes per panel; ``points // panel_nodes`` panels.
        window: half-width of the refined region around singular points.
        cutoff: outer cutoff; ``None`` uses eight times the bath cutoff.
        rtol: relative tolerance of the grid-doubling self-check.
        self_check: when true every integral is repeated at double
            resolution and :class:`QuadratureDiverged` is raised on mismatch.
    """

    points: int = 2000
    panel_nodes: int = 50
    window: float = 0.5
    cutoff: float | None = None
    rtol: float = 1e-8
    self_check: bool = True

    def __post_init__(self):
        if self.points < 4 or self.panel_nodes < 4 or self.points < self.panel_nodes:
            raise ValueError("quadrature needs at least one panel of four nodes")
        if not (self.window > 0 and self.rtol > 0):
            raise ValueError("window and rtol must be positive")

    @property
    def panels(self):
        return self.points // self.panel_nodes

    def doubled(self):
        return replace(self, points=2 * self.points, panel_nodes=2 * self.panel_nodes)

    def for_bath(self, bath):
        return self if self.cutoff is not None else replace(self, cutoff=bath.default_cutoff)


@lru_cache(maxsize=64)
def _tanh_sinh(nodes):
    """Nodes in (-1, 1) and weights, plus the distances ``1 - |x|`` computed without cancellation."""
    n = max(nodes // 2, 2)
    h = 3.2 / n
    t = h * np.arange(-n, n + 1)
    u = 0.5 * np.pi * np.sinh(t)
    x = np.tanh(u)
    w = h * 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    # 1 - tanh(u) = 2 / (1 + exp(2u)); symmetric for negative u
    edge = 2.0 / (1.0 + np.exp(2.0 * np.abs(u)))
    return x, w, edge


def _panel_nodes(a, b, nodes):
    x, w, edge = _tanh_sinh(nodes)
    half = 0.5 * (b - a)
    pts = np.where(x < 0, a + half * edge, b - half * edge)
    # Tail nodes that round onto an endpoint carry negligible weight.
    inside = (pts > a) & (pts < b)
    return pts[inside], half * w[inside]


def _breakpoints(a, b, quad, features=(), graded=()):
    """Panel boundaries on ``[a, b]``: uniform panels plus features.

    ``graded`` are points (possibly outside ``[a, b]``) near which a near-pole
    lives; panels shrink geometrically towards them.
    """
    pts = set(np.linspace(a, b, quad.panels + 1).tolist())
    for f in features:
        if a < f < b:
            pts.add(float(f))
            for s in (-quad.window, quad.window):
                if a < f + s < b:
                    pts.add(float(f + s))
    for c in graded:
        if a <= c <= b:
            continue
        near, sign = (a, 1.0) if c < a else (b, -1.0)
        step = abs(near - c)
        while step < quad.window:
            if a < near + sign * step < b:
                pts.add(float(near + sign * step))
            step *= 2.0
    pts = np.array(sorted(pts))
    keep = np.concatenate([[True], np.diff(pts) > 1e-13 * max(1.0, abs(b - a))])
    return pts[keep]


def _integrate(func, breaks, nodes):
    """Integrate ``func`` over consecutive panels; returns (value, l1 norm)."""
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = _panel_nodes(a, b, nodes)
        xs.append(x)
        ws.append(w)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    vals = func(x)
    wb = w.reshape((-1,) + (1,) * (vals.ndim - 1))
    return np.sum(wb * vals, axis=0), np.sum(wb * np.abs(vals), axis=0)


def _checked(compute, quad, what):
    value, scale = compute(quad)
    if not quad.self_check:
        return value
    fine, fine_scale = compute(quad.doubled())
    err = np.max(np.abs(np.asarray(fine - value)))
    ref = max(np.max(np.abs(np.asarray(fine))), 1e-3 * np.max(np.asarray(fine_scale)), 1e-300)
    if err > quad.rtol * ref:
        raise QuadratureDiverged(
            f"{what}: grid doubling changed the result by {err:.3e} (relative {err / ref:.3e})",
            coarse=value, fine=fine)
    return fine


def pv_halfline(f, energy, quad):
    """Principal value of ``int_0^cutoff f(w) / (w - energy) dw``.

    ``f`` must accept numpy arrays. For ``energy > 0`` the pole is removed by
    subtracting ``f(energy)`` and adding its analytic contribution
    ``f(energy) log((cutoff - energy) / energy)``.
    """
    if quad.cutoff is None:
        raise ValueError("pv_halfline needs an explicit quadrature cutoff")
    energy = float(energy)
    cutoff = float(quad.cutoff)
    if not np.isfinite(energy) or energy >= cutoff:
        raise ValueError("energy must be finite and below the cutoff")

    if energy > 0:
        f_e = float(np.real_if_close(f(np.array([energy]))[0]))

        def integrand(w):
            return (f(w) - f_e) / (w - energy)

        def compute(q):
            breaks = _breakpoints(0.0, cutoff, q, features=(energy,))
            val, l1 = _integrate(integrand, breaks, q.panel_nodes)
            return val + f_e * np.log((cutoff - energy) / energy), l1 + abs(f_e)
    else:
        def integrand(w):
            return f(w) / (w - energy)

        def compute(q):
            breaks = _breakpoints(0.0, cutoff, q, graded=(energy,) if energy < 0 else ())
            return _integrate(integrand, breaks, q.panel_nodes)

    return float(_checked(compute, quad, f"PV integral at E={energy:.6g}"))


def pv_fullline(h, quad, kinks=()):
    """Principal value of ``int_{-cutoff}^{cutoff} h(w) / w dw`` by symmetric folding.

    The singular point is removed by pairing ``w`` with ``-w``:
    ``int_0^cutoff (h(w) - h(-w)) / w dw``. ``h`` may be matrix valued
    (returning shape ``(n, ...)``); ``kinks`` are points where ``h`` has
    square-root behaviour and are used as panel boundaries.
    """
    if quad.cutoff is None:
        raise ValueError("pv_fullline needs an explicit quadrature cutoff")
    cutoff = float(quad.cutoff)
    folded = sorted({abs(float(k)) for k in kinks if 0 < abs(k) < cutoff})

    def integrand(w):
        hv = h(w) - h(-w)
        return hv / w.reshape((-1,) + (1,) * (hv.ndim - 1))

    def compute(q):
        return _integrate(integrand, _breakpoints(0.0, cutoff, q, features=folded), q.panel_nodes)

    return _checked(compute, quad, "full-line PV integral")


# -- Redfield coefficients --------------------------------------------------

@lru_cache(maxsize=65536)
def _pv_bose(bath, which, energy, quad):
    quad = quad.for_bath(bath)
    func = _jn if which == "n" else _jn1
    return pv_halfline(lambda w: func(bath, w), energy, quad)


def pv_occupied(bath, energy, quad):
    """``P int_0^inf J(w) n(w) / (w - E) dw`` (memoized, read-only cache)."""
    return _pv_bose(bath, "n", float(energy), quad)


def pv_occupied_plus_one(bath, energy, quad):
    """``P int_0^inf J(w) (n(w) + 1) / (w - E) dw`` (memoized)."""
    return _pv_bose(bath, "n+1", float(energy), quad)


def redfield_C(bath, energy_diff, quad=PvQuadrature()):
    """Absorption-side coefficient ``J n / 2 - (i / 2 pi) P int J n / (w - E)``."""
    e = float(energy_diff)
    real = float(_jn(bath, np.array([e]))[0]) / 2
    return real - 1j * pv_occupied(bath, e, quad) / (2 * np.pi)


def redfield_D(bath, energy_diff, quad=PvQuadrature()):
    """Emission-side coefficient ``J (n+1) / 2 - (i / 2 pi) P int J (n+1) / (w - E)``."""
    e = float(energy_diff)
    real = float(_jn1(bath, np.array([e]))[0]) / 2
    return real - 1j * pv_occupied_plus_one(bath, e, quad) / (2 * np.pi)


# -- bath correlation matrices in the Hermitian-coupling form -------------

# Coupling pieces X1 = S + S^+, X2 = i (S - S^+); the bath spectrum is
# proportional to PLUS for w > 0 and MINUS for w < 0.
PLUS = np.array([[1, -1j], [1j, 1]])
MINUS = np.array([[1, 1j], [-1j, 1]])


def bath_spectrum(bath, omega):
    """2x2 spectrum ``G(w)`` of one bath's Hermitian coupling pieces, shape ``(n, 2, 2)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    up = _jn1(bath, omega) / (8 * np.pi)
    down = _jn(bath, -omega) / (8 * np.pi)
    return up[:, None, None] * PLUS + down[:, None, None] * MINUS


def _g_scalar(bath, omega):
    omega = np.asarray(omega, dtype=float)
    val = np.where(omega > 0, _jn1(bath, omega), _jn(bath, -omega))
    return np.sqrt(val) / (4 * np.sqrt(2) * np.pi)


def _g_blocks(bath, omega):
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    s = _g_scalar(bath, omega)
    return np.where((omega > 0)[:, None, None], PLUS, MINUS) * s[:, None, None]


def ule_g(baths, omega):
    """Square root of ``G(w) / 2 pi``: block diagonal ``2T x 2T`` matrix, ``T = len(baths)``."""
    blocks = [_g_blocks(b, [omega])[0] for b in baths]
    out = np.zeros((2 * len(baths), 2 * len(baths)), dtype=complex)
    for i, blk in enumerate(blocks):
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = blk
    return out


def _ule_f_block(bath, p, q, quad):
    quad = quad.for_bath(bath)
    quad = replace(quad, cutoff=quad.cutoff + max(abs(p), abs(q)))

    def h(w):
        return _g_blocks(bath, w - p) @ _g_blocks(bath, w + q)

    return -2 * np.pi * pv_fullline(h, quad, kinks=(p, -q))


@lru_cache(maxsize=65536)
def _ule_f_cached(bath, p, q, quad):
    return _ule_f_block(bath, p, q, quad)


def ule_f(baths, p, q, quad=PvQuadrature(), eps=1.0):
    """``-2 pi eps^2 P int g(w - p) g(w + q) / w dw`` as a ``2T x 2T`` matrix."""
    out = np.zeros((2 * len(baths), 2 * len(baths)), dtype=complex)
    for i, b in enumerate(baths):
        out[2 * i:2 * i + 2, 2 * i:2 * i + 2] = _ule_f_cached(b, float(p), float(q), quad)
    return eps ** 2 * out
