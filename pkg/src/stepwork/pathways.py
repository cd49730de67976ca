"""Optimal-transition conditions, overlap measures, and pathway decomposition.

A transition between pulling steps i-1 and i is a tuple
(x_prev, x_next, n_prev, n_next) of positions and eigenstates.  Three
log-ratio residuals quantify how far it sits from the variational
conditions; transitions satisfying both position-like and energy-like
conditions are "optimal" and obey detailed balance.  At small s and n_max
every quantum pathway can be enumerated exactly, which splits the
exponential work average into stochastic / deterministic / optimal / biased
contributions that recombine to the total identically.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DensityFloor, EnumerationCap
from .protocol import GridSpec, PullSchedule
from .spectra import ProtocolKind
from .workdist import (
    GriddedDensity,
    lattice_convolve,
    pushforward_step_density,
    step_work_map,
)

__all__ = ["PathwayClass", "TransitionRecord", "PairSummary", "TransitionScan",
           "PathwayDecomposition", "residual_12a", "residual_12b", "residual_13",
           "residual_quotient", "find_optimal_transitions", "overlap_measure",
           "pathway_work_distribution", "total_pathway_distribution",
           "decompose_free_energy"]

# exact-enumeration regime
MAX_ENUM_STEPS = 4
MAX_ENUM_STATES = 5
# default log-ratio tolerance and relative density floor
DEFAULT_TOL = 0.05
DEFAULT_EPS_REL = 1e-12
# keep full path enumerations at or below this many tuples
_MAX_TUPLES = 2_000_000


class PathwayClass(enum.Enum):
    OPTIMAL = "optimal"            # both residual conditions hold
    DETERMINISTIC = "deterministic"  # exactly one of them holds
    STOCHASTIC = "stochastic"      # neither holds, but detailed balance does
    BIASED = "biased"              # none hold


class TransitionRecord(NamedTuple):
    """One candidate transition between consecutive pulling steps."""

    step: int
    n_prev: int
    n_next: int
    x_prev: float
    x_next: float
    e_prev: float
    e_next: float
    r12a: float
    r12b: float
    r13: float
    label: PathwayClass


@dataclass(frozen=True)
class PairSummary:
    """Matched-transition statistics for one (n_prev, n_next) state pair.

    ``p_forward`` sums the step-i density evaluated at the matched x_prev
    values, ``p_reverse`` the step-(i-1) density at the matched x_next
    values; their log ratio minus beta (E_next - E_prev) is the
    detailed-balance proxy residual.
    """

    n_prev: int
    n_next: int
    count: int
    p_forward: float
    p_reverse: float
    proxy_residual: float


@dataclass(frozen=True)
class TransitionScan:
    step: int
    tol: float
    eps_rel: float
    records: tuple
    pairs: tuple


@dataclass(frozen=True)
class PathwayDecomposition:
    """Free-energy split over pathway classes, with exact reconstruction."""

    df_total: float
    df_stochastic: float
    df_deterministic: float
    df_optimal: float
    df_biased: float
    contributions: dict
    counts: dict
    reconstruction_error: float


def _density_floor(schedule, i, eps_rel):
    """eps_rel times the step's peak density (the ground state's maximum)."""
    if schedule.kind is ProtocolKind.CENTER:
        peak = math.pi ** -0.5
    else:
        peak = math.sqrt(schedule.controls[i - 1]) * math.pi ** -0.5
    return eps_rel * peak


def _checked_log(value, floor, what):
    if value <= floor:
        raise DensityFloor(f"{what} = {value:.3e} at or below floor {floor:.3e}")
    return math.log(value)


def residual_12a(i, x_prev, x_next, n_prev, n_next, schedule,
                 eps_rel=DEFAULT_EPS_REL):
    """ln of the state-to-state density ratio minus beta (dE + dW).

    Zero on transitions satisfying the joint position/energy optimality
    condition.  The work difference is the step i-1 increment evaluated at
    x_prev.
    """
    sp_prev = schedule.spectrum(i - 1)
    sp_next = schedule.spectrum(i)
    d_next = sp_next.prob_density(n_next, x_next)
    d_prev = sp_prev.prob_density(n_prev, x_prev)
    log_ratio = (_checked_log(d_next, _density_floor(schedule, i, eps_rel), "|psi(x_next)|^2")
                 - _checked_log(d_prev, _density_floor(schedule, i - 1, eps_rel), "|psi(x_prev)|^2"))
    de = sp_next.work_energy(n_next) - sp_prev.work_energy(n_prev)
    dw = step_work_map(schedule, i - 1, x_prev)
    return log_ratio - schedule.beta * (de + dw)


def residual_12b(i, x_prev, x_next, n_next, schedule, eps_rel=DEFAULT_EPS_REL):
    """Same-state density ratio between the two positions minus beta dW."""
    sp_next = schedule.spectrum(i)
    floor = _density_floor(schedule, i, eps_rel)
    log_ratio = (_checked_log(sp_next.prob_density(n_next, x_next), floor, "|psi(x_next)|^2")
                 - _checked_log(sp_next.prob_density(n_next, x_prev), floor, "|psi(x_prev)|^2"))
    return log_ratio - schedule.beta * step_work_map(schedule, i - 1, x_prev)


def residual_13(i, x_prev, x_next, n_prev, n_next, schedule,
                eps_rel=DEFAULT_EPS_REL):
    """Detailed-balance residual: cross-evaluated density ratio minus beta dE."""
    sp_prev = schedule.spectrum(i - 1)
    sp_next = schedule.spectrum(i)
    log_ratio = (_checked_log(sp_next.prob_density(n_next, x_prev),
                              _density_floor(schedule, i, eps_rel), "|psi_next(x_prev)|^2")
                 - _checked_log(sp_prev.prob_density(n_prev, x_next),
                                _density_floor(schedule, i - 1, eps_rel), "|psi_prev(x_next)|^2"))
    de = sp_next.work_energy(n_next) - sp_prev.work_energy(n_prev)
    return log_ratio - schedule.beta * de


def residual_quotient(i, x_prev, n_prev, n_next, schedule,
                      eps_rel=DEFAULT_EPS_REL):
    """Diagnostic quotient residual: both states evaluated at x_prev.

    Equals r12a - r12b identically (the work terms cancel); kept as a direct
    evaluation so the identity can be asserted rather than assumed.
    """
    sp_prev = schedule.spectrum(i - 1)
    sp_next = schedule.spectrum(i)
    log_ratio = (_checked_log(sp_next.prob_density(n_next, x_prev),
                              _density_floor(schedule, i, eps_rel), "|psi_next(x_prev)|^2")
                 - _checked_log(sp_prev.prob_density(n_prev, x_prev),
                                _density_floor(schedule, i - 1, eps_rel), "|psi_prev(x_prev)|^2"))
    de = sp_next.work_energy(n_next) - sp_prev.work_energy(n_prev)
    return log_ratio - schedule.beta * de


def _subsample(x_grid, max_points):
    nodes = x_grid.nodes()
    if nodes.size <= max_points:
        return nodes
    idx = np.unique(np.linspace(0, nodes.size - 1, max_points).round().astype(int))
    return nodes[idx]


def _transition_tables(schedule, i, x_prev, x_next, eps_rel):
    """Vectorized residuals over one transition's (n_prev, n_next, kp, kn) grid.

    Returns dict of arrays shaped (S, S, P_prev, P_next) plus validity masks;
    invalid (below-floor) entries carry NaN residuals.
    """
    sp_prev = schedule.spectrum(i - 1)
    sp_next = schedule.spectrum(i)
    beta = schedule.beta
    d_prev_at_prev = sp_prev.all_densities(x_prev)   # (S, Pp)
    d_prev_at_next = sp_prev.all_densities(x_next)   # (S, Pn)
    d_next_at_prev = sp_next.all_densities(x_prev)
    d_next_at_next = sp_next.all_densities(x_next)
    floor_prev = _density_floor(schedule, i - 1, eps_rel)
    floor_next = _density_floor(schedule, i, eps_rel)

    e_prev = np.array([sp_prev.work_energy(n) for n in range(schedule.n_max + 1)])
    e_next = np.array([sp_next.work_energy(n) for n in range(schedule.n_max + 1)])
    de = e_next[None, :] - e_prev[:, None]                      # (S, S)
    dw = step_work_map(schedule, i - 1, x_prev)                 # (Pp,)

    # axes: n_prev, n_next, k_prev, k_next; below-floor entries come out as
    # -inf/nan and are screened by the ok_* masks
    with np.errstate(divide="ignore", invalid="ignore"):
        lp_pp = np.log(d_prev_at_prev)
        lp_pn = np.log(d_prev_at_next)
        ln_np = np.log(d_next_at_prev)
        ln_nn = np.log(d_next_at_next)
        r12a = (ln_nn[None, :, None, :] - lp_pp[:, None, :, None]
                - beta * (de[:, :, None, None] + dw[None, None, :, None]))
        r12b = (ln_nn[:, None, :] - ln_np[:, :, None] - beta * dw[None, :, None])
        r12b = np.broadcast_to(r12b[None, :, :, :], r12a.shape)
        r13 = (ln_np[None, :, :, None] - lp_pn[:, None, None, :]
               - beta * de[:, :, None, None])

    ok_a = ((d_next_at_next[None, :, None, :] > floor_next)
            & (d_prev_at_prev[:, None, :, None] > floor_prev))
    ok_b = ((d_next_at_next[:, None, :] > floor_next)
            & (d_next_at_prev[:, :, None] > floor_next))
    ok_b = np.broadcast_to(ok_b[None, :, :, :], ok_a.shape)
    ok_db = ((d_next_at_prev[None, :, :, None] > floor_next)
             & (d_prev_at_next[:, None, None, :] > floor_prev))

    return {"r12a": r12a, "r12b": r12b, "r13": r13,
            "ok_a": ok_a, "ok_b": ok_b, "ok_db": ok_db,
            "e_prev": e_prev, "e_next": e_next,
            "d_next_at_prev": d_next_at_prev, "d_prev_at_next": d_prev_at_next}


def find_optimal_transitions(schedule: PullSchedule, i, tol=DEFAULT_TOL,
                             eps_rel=DEFAULT_EPS_REL, max_x_points=200,
                             match="optimal"):
    """Scan the discretized transition space at step i-1 -> i.

    Returns every (x_prev, x_next, n_prev, n_next) tuple whose matching
    residuals are within tol (``match='optimal'``: both r12a and r12b;
    ``match='detailed-balance'``: r13), with per-state-pair forward/reverse
    density sums as transition-probability proxies.  An empty record list is
    a valid outcome on coarse grids or tight tolerances.
    """
    if not 2 <= i <= schedule.s:
        raise ValueError(f"transitions exist for 2 <= i <= {schedule.s}")
    if match not in ("optimal", "detailed-balance"):
        raise ValueError("match must be 'optimal' or 'detailed-balance'")
    x_prev = _subsample(schedule.x_grid, max_x_points)
    x_next = x_prev
    tab = _transition_tables(schedule, i, x_prev, x_next, eps_rel)

    if match == "optimal":
        matched = (tab["ok_a"] & tab["ok_b"]
                   & (np.abs(tab["r12a"]) <= tol) & (np.abs(tab["r12b"]) <= tol))
    else:
        matched = tab["ok_db"] & (np.abs(tab["r13"]) <= tol)

    records = []
    pairs = []
    beta = schedule.beta
    n_states = schedule.n_max + 1
    for n_prev in range(n_states):
        for n_next in range(n_states):
            hit = matched[n_prev, n_next]
            if not hit.any():
                continue
            kp, kn = np.nonzero(hit)
            p_fwd = float(tab["d_next_at_prev"][n_next, kp].sum())
            p_rev = float(tab["d_prev_at_next"][n_prev, kn].sum())
            de = tab["e_next"][n_next] - tab["e_prev"][n_prev]
            proxy = (math.log(p_fwd / p_rev) - beta * de
                     if p_fwd > 0.0 and p_rev > 0.0 else math.nan)
            pairs.append(PairSummary(n_prev, n_next, kp.size, p_fwd, p_rev, proxy))
            ra = tab["r12a"][n_prev, n_next][kp, kn]
            rb = tab["r12b"][n_prev, n_next][kp, kn]
            rd = tab["r13"][n_prev, n_next][kp, kn]
            labels = np.where(
                (np.abs(ra) <= tol) & (np.abs(rb) <= tol), 0,
                np.where((np.abs(ra) <= tol) | (np.abs(rb) <= tol), 1,
                         np.where(np.abs(rd) <= tol, 2, 3)))
            by_code = (PathwayClass.OPTIMAL, PathwayClass.DETERMINISTIC,
                       PathwayClass.STOCHASTIC, PathwayClass.BIASED)
            e_p = float(tab["e_prev"][n_prev])
            e_n = float(tab["e_next"][n_next])
            records.extend(
                TransitionRecord(i, n_prev, n_next, xp, xn, e_p, e_n,
                                 a_, b_, d_, by_code[code])
                for xp, xn, a_, b_, d_, code in zip(
                    x_prev[kp].tolist(), x_next[kn].tolist(), ra.tolist(),
                    rb.tolist(), rd.tolist(), labels.tolist()))
    return TransitionScan(i, tol, eps_rel, tuple(records), tuple(pairs))


def overlap_measure(f_prev: GriddedDensity, f_next: GriddedDensity, eps=None):
    """Width and mass of the overlap region between successive densities.

    Returns (length of {x: min(f_prev, f_next) > eps}, integral of the
    pointwise minimum).  Defaults eps to 1e-12 of the larger peak.
    """
    if f_prev.is_point_mass or f_next.is_point_mass:
        raise ValueError("overlap needs gridded densities")
    if f_prev.grid != f_next.grid:
        raise ValueError("densities must share a grid")
    if eps is None:
        eps = 1e-12 * max(f_prev.values.max(), f_next.values.max())
    low = np.minimum(f_prev.values, f_next.values)
    width = float(np.count_nonzero(low > eps) * f_prev.grid.spacing)
    mass = float(np.trapezoid(low, dx=f_prev.grid.spacing))
    return width, mass


def _check_enumeration_regime(schedule):
    if schedule.s > MAX_ENUM_STEPS or schedule.n_max > MAX_ENUM_STATES:
        raise EnumerationCap(
            f"exact enumeration needs s <= {MAX_ENUM_STEPS} and "
            f"n_max <= {MAX_ENUM_STATES}; got s={schedule.s}, n_max={schedule.n_max}"
        )


def _state_pushforwards(schedule):
    """Pushforward of every per-state sub-density, cached as [step][n].

    Each state n at step i carries weight exp(-beta (E_n - E_0)) / Z_i with
    Z_i the same trapezoid normalization the recursion pipeline uses, so the
    sum over states reproduces the pipeline's f_i exactly.
    """
    x_grid = schedule.x_grid
    x = x_grid.nodes()
    out = []
    for i in range(1, schedule.s):
        spec = schedule.spectrum(i)
        weights = spec.boltzmann_weights(schedule.a)
        dens = spec.all_densities(x)
        z = np.trapezoid(weights @ dens, dx=x_grid.spacing)
        per_state = []
        for n in range(schedule.n_max + 1):
            sub = GriddedDensity(x_grid, weights[n] * dens[n] / z)
            per_state.append(pushforward_step_density(sub, schedule, i))
        out.append(per_state)
    return out


def pathway_work_distribution(e_path, schedule: PullSchedule, _cache=None):
    """Work distribution along one energy pathway (E_1 ... E_{s-1}).

    Sub-normalized: it integrates to the pathway's Boltzmann weight, so the
    sum over all pathways reproduces the total work distribution.
    """
    _check_enumeration_regime(schedule)
    if len(e_path) != schedule.s - 1:
        raise ValueError(f"an energy pathway has s-1 = {schedule.s - 1} entries")
    if any(not 0 <= n <= schedule.n_max for n in e_path):
        raise ValueError("pathway state outside 0..n_max")
    cache = _cache if _cache is not None else _state_pushforwards(schedule)
    h = schedule.w_grid.spacing
    rho = GriddedDensity.point_mass(0.0)
    for i, n in enumerate(e_path, start=1):
        rho = lattice_convolve(rho, cache[i - 1][n], h)
    return rho


def total_pathway_distribution(schedule: PullSchedule):
    """Sum of pathway distributions over every energy pathway."""
    _check_enumeration_regime(schedule)
    cache = _state_pushforwards(schedule)
    h = schedule.w_grid.spacing
    total = None
    for path in itertools.product(range(schedule.n_max + 1), repeat=schedule.s - 1):
        rho = pathway_work_distribution(path, schedule, _cache=cache)
        total = rho if total is None else _lattice_add(total, rho, h)
    return total


def _lattice_add(d1, d2, h):
    n1 = int(round(d1.grid.min / h))
    n2 = int(round(d2.grid.min / h))
    lo = min(n1, n2)
    hi = max(n1 + d1.values.size, n2 + d2.values.size)
    vals = np.zeros(hi - lo)
    vals[n1 - lo:n1 - lo + d1.values.size] += d1.values
    vals[n2 - lo:n2 - lo + d2.values.size] += d2.values
    return GriddedDensity(GridSpec(lo * h, (hi - 1) * h, hi - lo), vals)


def _path_axes(arr, j, n_slots):
    """Reshape a per-transition array for broadcasting over full pathways.

    ``arr`` has axes (n_j, n_{j+1}, k_j, k_{j+1}) for the transition between
    slots j and j+1 (0-based j); the full pathway tensor carries axes
    (n_1..n_T, k_1..k_T).
    """
    shape = [1] * (2 * n_slots)
    shape[j] = arr.shape[0]
    shape[j + 1] = arr.shape[1]
    shape[n_slots + j] = arr.shape[2]
    shape[n_slots + j + 1] = arr.shape[3]
    return arr.reshape(shape)


def decompose_free_energy(schedule: PullSchedule, tol=DEFAULT_TOL,
                          eps_rel=DEFAULT_EPS_REL, max_x_points=50):
    """Split exp(-beta dF) over pathway classes by exact enumeration.

    Every (energy pathway, position pathway) tuple on the subsampled grid is
    classified by its transition residuals: optimal pathways satisfy both
    conditions at every transition, deterministic ones exactly one of the
    two, stochastic ones only detailed balance, and the rest are biased.
    The stochastic and deterministic contributions each include the optimal
    pathways, so the total recombines as S + D - OP + B identically.
    """
    _check_enumeration_regime(schedule)
    n_slots = schedule.s - 1
    n_states = schedule.n_max + 1
    p = max_x_points
    while n_states ** n_slots * p ** n_slots > _MAX_TUPLES and p > 2:
        p -= 1
    x = _subsample(schedule.x_grid, p)
    p = x.size
    h_sub = float(x[1] - x[0]) if p > 1 else 1.0
    beta = schedule.beta

    # per-slot discrete weights q_i[n, k] ~ Boltzmann x density x e^{-beta dW}
    slot_weight = []
    for i in range(1, schedule.s):
        spec = schedule.spectrum(i)
        w = spec.boltzmann_weights(schedule.a)
        dens = spec.all_densities(x)
        q = w[:, None] * dens * h_sub
        q /= q.sum()
        q = q * np.exp(-beta * step_work_map(schedule, i, x))[None, :]
        slot_weight.append(q)

    # pathway weight tensor over (n_1..n_T, k_1..k_T)
    weight = np.ones([1] * (2 * n_slots))
    for j, q in enumerate(slot_weight):
        shape = [1] * (2 * n_slots)
        shape[j] = q.shape[0]
        shape[n_slots + j] = q.shape[1]
        weight = weight * q.reshape(shape)

    full_shape = [n_states] * n_slots + [p] * n_slots
    pass_a = np.ones(full_shape, dtype=bool)
    pass_b = np.ones(full_shape, dtype=bool)
    pass_db = np.ones(full_shape, dtype=bool)
    for j in range(n_slots - 1):
        tab = _transition_tables(schedule, j + 2, x, x, eps_rel)
        ta = tab["ok_a"] & (np.abs(tab["r12a"]) <= tol)
        tb = tab["ok_b"] & (np.abs(tab["r12b"]) <= tol)
        tdb = tab["ok_db"] & (np.abs(tab["r13"]) <= tol)
        pass_a &= _path_axes(ta, j, n_slots)
        pass_b &= _path_axes(tb, j, n_slots)
        pass_db &= _path_axes(tdb, j, n_slots)

    opt = pass_a & pass_b
    det = (pass_a | pass_b) & ~opt
    sto = ~(pass_a | pass_b) & pass_db
    bia = ~(pass_a | pass_b) & ~pass_db

    weight = np.broadcast_to(weight, full_shape)
    c_total = float(weight.sum())
    c_op = float(weight[opt].sum())
    c_det_only = float(weight[det].sum())
    c_sto_only = float(weight[sto].sum())
    c_bia = float(weight[bia].sum())
    c_s = c_op + c_sto_only
    c_d = c_op + c_det_only
    reconstruction = (c_s + c_d - c_op + c_bia) - c_total

    def to_df(c):
        return float(-math.log(c) / beta) if c > 0.0 else math.inf

    return PathwayDecomposition(
        df_total=to_df(c_total),
        df_stochastic=to_df(c_s),
        df_deterministic=to_df(c_d),
        df_optimal=to_df(c_op),
        df_biased=to_df(c_bia),
        contributions={"total": c_total, "stochastic": c_s, "deterministic": c_d,
                       "optimal": c_op, "biased": c_bia},
        counts={"optimal": int(opt.sum()), "deterministic": int(det.sum()),
                "stochastic": int(sto.sum()), "biased": int(bia.sum())},
        reconstruction_error=abs(reconstruction) / c_total,
    )
