"""Exact eigenstructure of the two pulled harmonic oscillators.

Two pulling conventions are supported, each with its own natural units:

* trap-center pulling ("center"): hbar = m = 1 and the coupled oscillator
  frequency omega = 1 (so the bare spring constant is k = 1/2).  Lengths are
  measured in sqrt(hbar/(m*omega)).  Eigenvalues from ``center_eigenvalue``
  are in hbar*omega; work and free energies elsewhere in the package are
  reported in hbar*omega/2.  The reduced temperature is
  a = hbar*omega / (2 kB T).
* spring-constant pulling ("spring"): hbar = m = 1 and omega_0 = 1.  Lengths
  in sqrt(hbar/(m*omega_0)), energies in hbar*omega_0, reduced temperature
  a0 = hbar*omega_0 / (kB T).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProtocolKind",
    "OscillatorSpectrum",
    "hermite_poly",
    "center_eigenvalue",
    "center_prob_density",
    "spring_frequency",
    "spring_eigenvalue",
    "spring_prob_density",
    "analytic_free_energy_center",
    "analytic_free_energy_spring",
    "delta_f_target_center",
    "analytic_target_spring",
    "thermal_position_variance",
]


class ProtocolKind(enum.Enum):
    """Which control parameter the pulling protocol drives."""

    CENTER = "center"
    SPRING = "spring"


def hermite_poly(n, y):
    """Physicists' Hermite polynomial H_n(y) by the three-term recurrence.

    Total function of n >= 0; raw values overflow near n ~ 150, use the
    normalized eigenfunctions (``center_prob_density`` and friends) for
    high orders.
    """
    if n < 0:
        raise ValueError("order must be non-negative")
    y = np.asarray(y, dtype=float)
    h_prev = np.ones_like(y)
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = 2.0 * y
    for m in range(1, n):
        h, h_prev = 2.0 * y * h - 2.0 * m * h_prev, h
    return h if h.ndim else float(h)


def _hermite_functions(n_max, y):
    """All normalized oscillator eigenfunctions phi_0..phi_{n_max} at y.

    phi_n(y) = H_n(y) exp(-y^2/2) / sqrt(2^n n! sqrt(pi)).  The recurrence
    works on phi_n directly, folding the 1/(2^n n!) normalization in, so it
    stays finite for any order (n up to several hundred).
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty((n_max + 1, y.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * y * y)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for n in range(1, n_max):
        out[n + 1] = (
            math.sqrt(2.0 / (n + 1)) * y * out[n]
            - math.sqrt(n / (n + 1)) * out[n - 1]
        )
    return out


def center_eigenvalue(n, lam):
    """Eigenvalue (n + 1/2) + lam^2/8 of the trap-center oscillator, in hbar*omega."""
    if n < 0:
        raise ValueError("quantum number must be non-negative")
    return n + 0.5 + 0.125 * lam * lam


def center_prob_density(n, lam, x):
    """|psi_n(x, lam)|^2 for the trap-center protocol; peaks around x = lam/2."""
    if n < 0:
        raise ValueError("quantum number must be non-negative")
    x = np.asarray(x, dtype=float)
    phi = _hermite_functions(n, x - 0.5 * lam)[n]
    dens = phi * phi
    return dens if x.ndim else float(dens[0])


def spring_frequency(i, delta, omega0=1.0):
    """omega_i = omega_0 sqrt(1 + (i-1) delta) for pulling step i >= 1."""
    radicand = 1.0 + (i - 1) * delta
    if radicand <= 0.0:
        raise ValueError(f"inverted oscillator at step {i}: 1+(i-1)*delta = {radicand}")
    return omega0 * math.sqrt(radicand)


def spring_eigenvalue(n, omega_i):
    """Eigenvalue (n + 1/2) * omega_i of the stiffened oscillator, in hbar*omega_0."""
    if n < 0:
        raise ValueError("quantum number must be non-negative")
    if omega_i <= 0.0:
        raise ValueError("frequency must be positive")
    return (n + 0.5) * omega_i


def spring_prob_density(n, omega_i, x):
    """|psi_n(x, omega_i)|^2 with Gaussian width hbar/(2 m omega_i); normalized in x."""
    if n < 0:
        raise ValueError("quantum number must be non-negative")
    if omega_i <= 0.0:
        raise ValueError("frequency must be positive")
    x = np.asarray(x, dtype=float)
    root = math.sqrt(omega_i)
    phi = _hermite_functions(n, root * x)[n]
    dens = root * phi * phi
    return dens if x.ndim else float(dens[0])


def analytic_free_energy_center(lam, a):
    """Exact free energy a^-1 ln(e^a - e^-a) + lam^2/4 in hbar*omega/2 units."""
    if a <= 0.0:
        raise ValueError("reduced temperature must be positive")
    # log(e^a - e^-a) = a + log1p(-e^{-2a}) stays finite for large a
    return (a + math.log1p(-math.exp(-2.0 * a))) / a + 0.25 * lam * lam


def delta_f_target_center(lam):
    """Exact free-energy change F(lam) - F(0) = lam^2/4 in hbar*omega/2 units."""
    return 0.25 * lam * lam


def analytic_free_energy_spring(omega_i, a0):
    """Exact free energy ln(2 sinh(a0 omega_i / 2)) / a0 in hbar*omega_0 units."""
    if a0 <= 0.0 or omega_i <= 0.0:
        raise ValueError("reduced temperature and frequency must be positive")
    z = 0.5 * a0 * omega_i
    # log(2 sinh z) = z + log1p(-e^{-2z})
    return (z + math.log1p(-math.exp(-2.0 * z))) / a0


def analytic_target_spring(a0, omega_ratio):
    """Exact (1/a0) ln[sinh(a0 ratio/2)/sinh(a0/2)] in hbar*omega_0 units."""
    if a0 <= 0.0 or omega_ratio <= 0.0:
        raise ValueError("reduced temperature and frequency ratio must be positive")
    return analytic_free_energy_spring(omega_ratio, a0) - analytic_free_energy_spring(1.0, a0)


def thermal_position_variance(kind, control, a):
    """Exact untruncated thermal variance of the position for one pulling step.

    Center: coth(a)/2 (independent of the trap center).
    Spring: coth(a0 omega_i / 2) / (2 omega_i) with control = omega_i.
    """
    if kind is ProtocolKind.CENTER:
        return 0.5 / math.tanh(a)
    return 1.0 / (2.0 * control * math.tanh(0.5 * a * control))


@dataclass(frozen=True)
class OscillatorSpectrum:
    """Eigenvalues and probability densities of one pulling step.

    ``control`` is lambda_i for the center protocol and omega_i (in omega_0
    units) for the spring protocol.  Energies from ``work_energy`` are in the
    same unit the work increments are reported in (hbar*omega/2 for center,
    hbar*omega_0 for spring), so beta * work_energy uses the reduced
    temperature directly as beta.
    """

    kind: ProtocolKind
    step_index: int
    control: float
    n_max: int

    def __post_init__(self):
        if self.step_index < 1:
            raise ValueError("step index starts at 1")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")
        if self.kind is ProtocolKind.SPRING and self.control <= 0.0:
            raise ValueError("spring frequency must be positive")

    def eigenvalue(self, n):
        """E_n in the protocol's reporting unit (hbar*omega or hbar*omega_0)."""
        if self.kind is ProtocolKind.CENTER:
            return center_eigenvalue(n, self.control)
        return spring_eigenvalue(n, self.control)

    def work_energy(self, n):
        """E_n in the unit work is measured in (hbar*omega/2 or hbar*omega_0)."""
        if self.kind is ProtocolKind.CENTER:
            return 2.0 * center_eigenvalue(n, self.control)
        return spring_eigenvalue(n, self.control)

    def density_center(self):
        """Location the |psi_n|^2 are centered on."""
        return 0.5 * self.control if self.kind is ProtocolKind.CENTER else 0.0

    def prob_density(self, n, x):
        if self.kind is ProtocolKind.CENTER:
            return center_prob_density(n, self.control, x)
        return spring_prob_density(n, self.control, x)

    def all_densities(self, x):
        """Array of |psi_n(x)|^2 for n = 0..n_max, shape (n_max+1, len(x))."""
        x = np.asarray(x, dtype=float)
        if self.kind is ProtocolKind.CENTER:
            phi = _hermite_functions(self.n_max, x - 0.5 * self.control)
            return phi * phi
        root = math.sqrt(self.control)
        phi = _hermite_functions(self.n_max, root * x)
        return root * phi * phi

    def boltzmann_weights(self, a):
        """exp(-beta (E_n - E_0)) for n = 0..n_max at reduced temperature a."""
        n = np.arange(self.n_max + 1)
        if self.kind is ProtocolKind.CENTER:
            # beta * E_n in work units: a * (2n + 1 + lam^2/4); offsets cancel
            return np.exp(-2.0 * a * n)
        return np.exp(-a * self.control * n)
