"""Fluctuation densities, work-increment pushforwards, and the work recursion.

The work distribution after i-1 increments is the i-1 fold convolution of the
per-step increment densities, because each pulling step samples its own
fluctuation density independently.  Every density lives on a shared uniform
work lattice; increments are moved onto it by a mass- and mean-conserving
two-node deposit, which for the commensurate center grids is exact (every
image point lands on a lattice node) and for the quadratic spring map turns
the integrable 1/sqrt(u) spike at u = 0 into finite cell masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooNarrow, MassLeak
from .protocol import GridSpec, PullSchedule
from .spectra import OscillatorSpectrum, ProtocolKind

__all__ = ["GriddedDensity", "WorkLedger", "fluctuation_density", "step_work_map",
           "pushforward_step_density", "lattice_convolve", "work_recursion_step",
           "run_work_recursion", "work_moments"]

# |integral - 1| above this after a recursion step signals work-grid truncation
MASS_TOLERANCE = 1e-4
# relative boundary mass allowed on a fluctuation-density grid
BOUNDARY_TOLERANCE = 1e-12
# lattice tails below this fraction of the peak are trimmed between steps
_CROP_RELATIVE = 1e-280
# deposit fractions closer than this to a node are snapped onto it
_SNAP = 1e-9


@dataclass(frozen=True)
class GriddedDensity:
    """A nonnegative density sampled on a uniform grid, or a point mass.

    Point masses (``grid is None``) encode degenerate work increments and the
    s = 1 "no work performed" convention.
    """

    grid: GridSpec | None
    values: np.ndarray | None
    normalized: bool = False
    location: float = 0.0

    def __post_init__(self):
        if self.grid is not None:
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (self.grid.points,):
                raise ValueError("values must match the grid point count")
            if vals.min() < 0.0:
                raise ValueError("density values must be nonnegative")
            object.__setattr__(self, "values", vals)

    @classmethod
    def point_mass(cls, location=0.0):
        return cls(grid=None, values=None, normalized=True, location=location)

    @property
    def is_point_mass(self):
        return self.grid is None

    def integral(self):
        if self.is_point_mass:
            return 1.0
        return float(np.trapezoid(self.values, dx=self.grid.spacing))

    def normalize(self):
        if self.is_point_mass:
            return self
        mass = self.integral()
        if mass <= 0.0:
            raise ValueError("cannot normalize a zero density")
        return GriddedDensity(self.grid, self.values / mass, normalized=True)


@dataclass(frozen=True)
class WorkLedger:
    """Everything the recursion produced for one schedule."""

    schedule: PullSchedule
    distributions: tuple = ()      # rho_2 .. rho_s
    normalizations: tuple = ()     # Q_2 .. Q_s
    x_means: tuple = ()            # <x_i> for i = 1 .. s-1
    fluctuations: tuple = field(default=(), repr=False)  # f_1 .. f_{s-1}

    @property
    def final(self):
        """rho_s, or the s = 1 point-mass convention."""
        if self.distributions:
            return self.distributions[-1]
        return GriddedDensity.point_mass(0.0)

    def rho(self, i):
        """Work distribution after reaching pulling step i (2 <= i <= s)."""
        if not 2 <= i <= self.schedule.s:
            raise ValueError(f"rho_i defined for 2 <= i <= {self.schedule.s}")
        return self.distributions[i - 2]


def fluctuation_density(spectrum: OscillatorSpectrum, a, x_grid: GridSpec):
    """Boltzmann-weighted eigenstate density, renormalized on the grid.

    Truncating the eigenbasis at n_max leaves the raw sum sub-normalized, so
    the result is rescaled to unit trapezoid integral.
    """
    x = x_grid.nodes()
    weights = spectrum.boltzmann_weights(a)
    raw = weights @ spectrum.all_densities(x)
    peak = raw.max()
    if raw[0] > BOUNDARY_TOLERANCE * peak or raw[-1] > BOUNDARY_TOLERANCE * peak:
        raise GridTooNarrow(
            f"boundary density {max(raw[0], raw[-1]):.3e} exceeds "
            f"{BOUNDARY_TOLERANCE:.0e} of peak {peak:.3e}; widen the x grid"
        )
    mass = np.trapezoid(raw, dx=x_grid.spacing)
    return GriddedDensity(x_grid, raw / mass, normalized=True)


def step_work_map(schedule: PullSchedule, i, x):
    """Work increment deltaW_i(x) picked up when the control steps i -> i+1.

    Center: (dlambda/2) (2 lambda_i + dlambda - 2x), affine in x, in
    hbar*omega/2 units.  Spring: (delta/2) x^2 in hbar*omega_0 units,
    identical for every step because Delta-k is constant.
    """
    if not 1 <= i <= schedule.s - 1:
        raise ValueError(f"work steps run from 1 to {schedule.s - 1}")
    x = np.asarray(x, dtype=float)
    if schedule.kind is ProtocolKind.CENTER:
        dlam = schedule.increment
        out = dlam * (schedule.controls[i - 1] + 0.5 * dlam - x)
    else:
        out = 0.5 * schedule.increment * x * x
    return out if out.ndim else float(out)


def _deposit(positions, masses, h):
    """Two-node deposit of point masses onto the lattice {j*h}.

    Each mass is split between its bracketing nodes so the total mass and the
    first moment are conserved exactly; points within _SNAP of a node are
    snapped, which makes commensurate (center) pushforwards exact.
    """
    t = positions / h
    j = np.floor(t).astype(np.int64)
    d = t - j
    hi = d > 1.0 - _SNAP
    j[hi] += 1
    d[hi] = 0.0
    d[d < _SNAP] = 0.0
    n0 = int(j.min())
    vals = np.zeros(int(j.max()) - n0 + 2)
    np.add.at(vals, j - n0, masses * (1.0 - d))
    np.add.at(vals, j - n0 + 1, masses * d)
    return n0, vals / h


def _trapezoid_masses(density: GriddedDensity):
    w = np.full(density.grid.points, density.grid.spacing)
    w[0] *= 0.5
    w[-1] *= 0.5
    return density.values * w


def _lattice_density(n0, vals, h, normalized=False):
    """Wrap raw lattice values (index offset n0) with one zero pad per side."""
    keep = np.flatnonzero(vals > vals.max() * _CROP_RELATIVE)
    if keep.size == 0:
        keep = np.array([int(np.argmax(vals))])
    lo, hi = int(keep[0]), int(keep[-1])
    vals = np.concatenate(([0.0], vals[lo:hi + 1], [0.0]))
    start = n0 + lo - 1
    grid = GridSpec(start * h, (start + vals.size - 1) * h, vals.size)
    return GriddedDensity(grid, vals, normalized=normalized)


def _lattice_offset(density: GriddedDensity, h):
    return int(round(density.grid.min / h))


def pushforward_step_density(f: GriddedDensity, schedule: PullSchedule, i):
    """Density of the work increment deltaW_i when x is distributed as f.

    A constant map (dlambda = 0 or delta = 0) is degenerate and yields a
    point mass at zero.  The affine center map is an exact change of
    variables with |Jacobian| = 1/(k dlambda); the quadratic spring map
    folds both branches x = +-sqrt(u / c) and leaves an integrable
    1/sqrt(u) spike whose lattice-cell masses stay finite.
    """
    if schedule.increment == 0.0:
        return GriddedDensity.point_mass(0.0)
    u = step_work_map(schedule, i, f.grid.nodes())
    n0, vals = _deposit(u, _trapezoid_masses(f), schedule.w_grid.spacing)
    return _lattice_density(n0, vals, schedule.w_grid.spacing, normalized=f.normalized)


def lattice_convolve(d1: GriddedDensity, d2: GriddedDensity, h):
    """Convolution of two densities living on the common lattice {j*h}.

    No renormalization; the output mass is the product of the input masses.
    Point masses act as shifts.
    """
    if d1.is_point_mass and d2.is_point_mass:
        return GriddedDensity.point_mass(d1.location + d2.location)
    if d1.is_point_mass:
        d1, d2 = d2, d1
    if d2.is_point_mass:
        n0 = _lattice_offset(d1, h) + int(round(d2.location / h))
        return _lattice_density(n0, d1.values, h, normalized=d1.normalized)
    n0 = _lattice_offset(d1, h) + _lattice_offset(d2, h)
    vals = np.convolve(d1.values, d2.values) * h
    return _lattice_density(n0, vals, h)


def _window_indices(schedule):
    h = schedule.w_grid.spacing
    return (int(round(schedule.w_grid.min / h)) - 1,
            int(round(schedule.w_grid.max / h)) + 1)


def _clip_to_window(dens: GriddedDensity, schedule: PullSchedule):
    h = schedule.w_grid.spacing
    n0 = _lattice_offset(dens, h)
    win_lo, win_hi = _window_indices(schedule)
    lo = max(0, win_lo - n0)
    hi = min(dens.values.size - 1, win_hi - n0)
    if lo == 0 and hi == dens.values.size - 1:
        return dens
    return _lattice_density(n0 + lo, dens.values[lo:hi + 1], h)


def _recursion_step(rho_prev, f_prev, schedule, i):
    if not 2 <= i <= schedule.s:
        raise ValueError(f"recursion steps run from 2 to {schedule.s}")
    g = pushforward_step_density(f_prev, schedule, i - 1)
    conv = lattice_convolve(rho_prev, g, schedule.w_grid.spacing)
    if conv.is_point_mass:
        return conv, 1.0
    rho = _clip_to_window(conv, schedule)
    mass = rho.integral()
    if abs(mass - 1.0) > MASS_TOLERANCE:
        raise MassLeak(
            f"work distribution at step {i} integrates to {mass:.8f}; "
            "the work grid is truncating real mass"
        )
    return GriddedDensity(rho.grid, rho.values / mass, normalized=True), 1.0 / mass


def work_recursion_step(rho_prev: GriddedDensity, f_prev: GriddedDensity,
                        schedule: PullSchedule, i):
    """One recursion step: rho_i = convolution of rho_{i-1} with the
    pushforward of f_{i-1} through step i-1's work increment, renormalized.

    The base case is rho_1 = a point mass at W = 0, so
    work_recursion_step(point_mass, f_1, schedule, 2) builds rho_2 directly
    from f_1.
    """
    rho, _ = _recursion_step(rho_prev, f_prev, schedule, i)
    return rho


def run_work_recursion(schedule: PullSchedule):
    """Build every f_i and run the recursion through rho_s."""
    if schedule.s == 1:
        return WorkLedger(schedule)
    fluct = []
    x_means = []
    x = schedule.x_grid.nodes()
    for i in range(1, schedule.s):
        f = fluctuation_density(schedule.spectrum(i), schedule.a, schedule.x_grid)
        fluct.append(f)
        x_means.append(float(np.trapezoid(x * f.values, dx=schedule.x_grid.spacing)))
    rho = GriddedDensity.point_mass(0.0)
    dists = []
    norms = []
    for i in range(2, schedule.s + 1):
        rho, q = _recursion_step(rho, fluct[i - 2], schedule, i)
        dists.append(rho)
        norms.append(q)
    return WorkLedger(schedule, tuple(dists), tuple(norms), tuple(x_means), tuple(fluct))


def work_moments(rho: GriddedDensity):
    """Trapezoid-quadrature (mean, standard deviation) of a work density."""
    if rho.is_point_mass:
        return rho.location, 0.0
    w = rho.grid.nodes()
    h = rho.grid.spacing
    mass = np.trapezoid(rho.values, dx=h)
    mean = np.trapezoid(w * rho.values, dx=h) / mass
    var = np.trapezoid((w - mean) ** 2 * rho.values, dx=h) / mass
    return float(mean), float(math.sqrt(max(var, 0.0)))
