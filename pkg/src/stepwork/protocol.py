"""Pull schedules, grids, and the sizing rules that keep the numerics exact.

For the center protocol the x-grid spacing is chosen commensurate with the
pull increment (h_x = dlambda / M with M even), which makes every affine
work-increment image land exactly on the shared work lattice of spacing
h_w = dlambda * h_x.  The recursion then never interpolates, so quadrature
errors are limited to (sub-machine) trapezoid tail terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectra import OscillatorSpectrum, ProtocolKind, thermal_position_variance

__all__ = ["GridSpec", "PullSchedule", "build_center_schedule", "build_spring_schedule",
           "default_temperature_sweep"]

# margin (in total work std) kept on each side of the work window
_W_SIGMA_MARGIN = 12.0
# half-width of density grids, in per-step position std
_X_SIGMA_MARGIN = 8.0


@dataclass(frozen=True)
class GridSpec:
    """A uniform 1-D grid."""

    min: float
    max: float
    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("a grid needs at least two points")
        if not self.max > self.min:
            raise ValueError("grid max must exceed min")

    @property
    def spacing(self):
        return (self.max - self.min) / (self.points - 1)

    def nodes(self):
        return self.min + self.spacing * np.arange(self.points)


@dataclass(frozen=True)
class PullSchedule:
    """An immutable step-wise pulling run: controls, temperature, grids.

    ``controls`` holds lambda_1..lambda_s (center) or omega_1..omega_s in
    omega_0 units (spring).  ``increment`` is dlambda (center) or delta
    (spring).  ``a`` is the reduced temperature, which doubles as the
    inverse temperature against energies in the reporting unit.
    """

    kind: ProtocolKind
    s: int
    controls: tuple
    increment: float
    a: float
    n_max: int
    x_grid: GridSpec
    w_grid: GridSpec

    @property
    def beta(self):
        """Inverse temperature in the unit work is reported in."""
        return self.a

    @property
    def lambda_s(self):
        return self.controls[-1]

    def spectrum(self, i):
        """Spectrum of the coupled Hamiltonian during pulling step i (1-based)."""
        if not 1 <= i <= self.s:
            raise ValueError(f"step index {i} outside 1..{self.s}")
        return OscillatorSpectrum(self.kind, i, self.controls[i - 1], self.n_max)


def default_temperature_sweep():
    """Reduced temperatures a = 2^l for l = -4..4."""
    return [2.0 ** l for l in range(-4, 5)]


def _state_extent(n_max, omega):
    # classical turning point of the top retained state plus a ground-width tail
    return math.sqrt((2 * n_max + 1) / omega) + _X_SIGMA_MARGIN / math.sqrt(2.0 * omega)


def _half_width(kind, control, a, n_max):
    """Half-width of the fluctuation density's support around its center.

    The truncated density is bounded both by the full thermal envelope and by
    the top retained state's turning point, so the tighter of the two wins.
    """
    sigma_th = math.sqrt(thermal_position_variance(kind, control, a))
    omega = control if kind is ProtocolKind.SPRING else 1.0
    return min(_X_SIGMA_MARGIN * sigma_th, _state_extent(n_max, omega))


def _target_spacing(n_max, omega_max):
    """Grid spacing that resolves both the Gaussian width and the fastest
    density oscillation (~2 sqrt(2 n_max + 1) rad per unit length)."""
    sigma_gs = 1.0 / math.sqrt(2.0 * omega_max)
    band = 2.0 * math.sqrt(2 * n_max + 1) * math.sqrt(omega_max)
    return min(sigma_gs / 8.0, 2.0 * math.pi / (16.0 * band))


def _effective_sigma2(kind, control, a, n_max):
    """Upper bound on the truncated density's position variance."""
    omega = control if kind is ProtocolKind.SPRING else 1.0
    return min(thermal_position_variance(kind, control, a), (n_max + 0.5) / omega)


def _snap_grid(lo, hi, h):
    m_lo = math.floor(lo / h)
    m_hi = math.ceil(hi / h)
    if m_hi <= m_lo:
        m_hi = m_lo + 1
    return GridSpec(m_lo * h, m_hi * h, m_hi - m_lo + 1)


def build_center_schedule(lambda_s, s, a, n_max, x_points=None, w_points=None):
    """Schedule for pulling the trap center from 0 to lambda_s in s steps.

    Controls are lambda_i = lambda_s (i-1)/(s-1); s = 1 is the no-work
    convention.  Grids are auto-sized unless point counts are given; the
    x spacing is always an even integer fraction of dlambda.
    """
    if s <= 0:
        raise ValueError("number of pulling steps must be positive")
    if a <= 0.0:
        raise ValueError("reduced temperature must be positive")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")

    if s == 1:
        controls = (0.0,)
        dlam = 0.0
    else:
        # (i-1)/(s-1) evaluates to exactly 1.0 at i = s, so the requested
        # endpoint is reconstructed bit-for-bit
        controls = tuple(lambda_s * ((i - 1) / (s - 1)) for i in range(1, s + 1))
        dlam = lambda_s / (s - 1)

    half = _half_width(ProtocolKind.CENTER, 0.0, a, n_max)
    # the exponential work average tilts each density by exp(+a dlam x),
    # shifting its effective center by a dlam sigma^2; cover that too
    half += a * abs(dlam) * _effective_sigma2(ProtocolKind.CENTER, 0.0, a, n_max)
    centers = [0.5 * c for c in controls]
    x_lo = min(centers) - half
    x_hi = max(centers) + half
    if x_points is not None:
        h_target = (x_hi - x_lo) / (x_points - 1)
    else:
        h_target = _target_spacing(n_max, 1.0)

    if dlam == 0.0:
        n_pts = max(2, math.ceil((x_hi - x_lo) / h_target) + 1)
        x_grid = GridSpec(x_lo, x_hi, n_pts)
        w_grid = GridSpec(-1.0, 1.0, 3)  # never populated: all increments degenerate
        return PullSchedule(ProtocolKind.CENTER, s, controls, dlam, a, n_max, x_grid, w_grid)

    gamma = abs(dlam)  # |slope| of the work increment, k = 1 in hbar*omega/2 units

    def _build(m):
        h_x = abs(dlam) / m
        xg = _snap_grid(x_lo, x_hi, h_x)
        h_w = gamma * h_x
        mu = [0.5 * dlam * (lam + dlam) for lam in controls[:-1]]
        var = [dlam * dlam * _effective_sigma2(ProtocolKind.CENTER, 0.0, a, n_max)
               for _ in controls[:-1]]
        total_mu = sum(mu)
        sigma_tot = math.sqrt(sum(var))
        w_lo = total_mu - a * sum(var) - _W_SIGMA_MARGIN * sigma_tot - 2 * h_w
        w_hi = total_mu + _W_SIGMA_MARGIN * sigma_tot + 2 * h_w
        return xg, _snap_grid(w_lo, w_hi, h_w)

    m = max(2, math.ceil(abs(dlam) / h_target))
    m += m % 2  # even M keeps every increment image on the work lattice
    x_grid, w_grid = _build(m)
    if w_points is not None and w_grid.points < w_points:
        m *= math.ceil((w_points - 1) / (w_grid.points - 1))
        x_grid, w_grid = _build(m)

    return PullSchedule(ProtocolKind.CENTER, s, controls, dlam, a, n_max, x_grid, w_grid)


def build_spring_schedule(omega_ratio, s, a0, n_max, x_points=None, w_points=None):
    """Schedule for stiffening the spring so omega runs from omega_0 to
    omega_ratio * omega_0 in s steps; delta = (ratio^2 - 1)/(s - 1)."""
    if s < 2:
        raise ValueError("spring protocol needs at least two steps")
    if omega_ratio <= 0.0:
        raise ValueError("frequency ratio must be positive")
    if omega_ratio < 1.0:
        raise ValueError("spring softening (delta < 0) is not supported")
    if a0 <= 0.0:
        raise ValueError("reduced temperature must be positive")
    if n_max < 0:
        raise ValueError("n_max must be non-negative")

    delta = (omega_ratio * omega_ratio - 1.0) / (s - 1)
    controls = tuple(math.sqrt(1.0 + (i - 1) * delta) for i in range(1, s + 1))

    half = _half_width(ProtocolKind.SPRING, controls[0], a0, n_max)
    if x_points is not None:
        n_pts = x_points
    else:
        h_target = _target_spacing(n_max, controls[-1])
        n_pts = max(2, 2 * math.ceil(half / h_target) + 1)
    x_grid = GridSpec(-half, half, n_pts)

    if w_points is None:
        w_points = 8001
    if delta == 0.0:
        w_grid = GridSpec(-1.0, 1.0, 3)
        return PullSchedule(ProtocolKind.SPRING, s, controls, delta, a0, n_max, x_grid, w_grid)

    c = 0.5 * delta  # work increment is c * x^2 for every step
    sig2 = [_effective_sigma2(ProtocolKind.SPRING, w, a0, n_max) for w in controls[:-1]]
    total_mu = c * sum(sig2)
    sigma_tot = math.sqrt(sum(3.0 * c * c * v * v for v in sig2))
    w_hi = total_mu + _W_SIGMA_MARGIN * sigma_tot + c * half * half
    w_grid = GridSpec(0.0, w_hi, w_points)

    return PullSchedule(ProtocolKind.SPRING, s, controls, delta, a0, n_max, x_grid, w_grid)
