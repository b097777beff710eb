"""Rate-target feasibility layer: big-M bound, fixed-point association
search, and the bisection that drives the target upward.

For a fixed rate target t and fixed beamformers every constraint of the
feasibility problem is linear in the (relaxed) association entries, so
the inner loop is projected gradient ascent of the activation count over
a polytope. Beamformers and association alternate until neither moves,
then the best binary assignment under the final beams is found by
exhaustive enumeration (the big-M construction makes every non-selected
pair's constraint row hold automatically, so only active rows filter
candidate maps).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ImperfectChannelSet
from .linkmetrics import (Association, beam_gain_tables, gue_rx_power,
                          path_power_table)
from .beamforming import eig_beamformers
from .numerics import (InfeasiblePolytopeError, LinearConstraintSet,
                       enumerate_binary_assignments, project_onto_polytope)

PERFECT = "perfect"
EFFECTIVE = "effective"


def resolve_csi_mode(channels, csi_mode):
    if csi_mode is None:
        if isinstance(channels, ImperfectChannelSet) and channels.error_var > 0:
            return EFFECTIVE
        return PERFECT
    if csi_mode not in (PERFECT, EFFECTIVE):
        raise ValueError(f"unknown CSI mode {csi_mode!r}")
    if csi_mode == EFFECTIVE and not isinstance(channels, ImperfectChannelSet):
        raise ValueError("effective CSI mode needs an ImperfectChannelSet")
    return csi_mode


@dataclass
class BisectionState:
    t_low: float
    t_high: float
    t_current: float
    iteration_count: int
    eps: float


@dataclass
class ActivationResult:
    association: Association
    beamformers: object
    activated_count: int
    feasible: bool
    relaxed: np.ndarray = None
    trace: list = field(default_factory=list)


@dataclass
class BisectionResult:
    t_star: float
    association: Association
    beamformers: object
    feasible: bool
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# link statistics shared by the row builders
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _LinkStats:
    """Beam-dependent quadratic forms and power tables for one (z, heights)."""

    s_rx: np.ndarray       # (G, GK) ground-user received powers
    t_tab: np.ndarray      # (G, G, U) UAV path powers
    q_uu: np.ndarray       # (G, U, U) UAV beam vs UAV channel
    q_ug: np.ndarray       # (G, U, GK) UAV beam vs ground channels
    q_gg: np.ndarray       # (GK, GK) ground beam vs ground channels
    q_gu: np.ndarray       # (GK, U) ground beam vs UAV channels
    err_uav: np.ndarray    # (G, U) error mass sigma^2 z^H R z per UAV beam
    err_gue: np.ndarray    # (GK,) same per ground beam


def _link_stats(scenario, channels, beams, heights, mode):
    tables = beam_gain_tables(scenario, channels, beams, actual=False)
    s_rx = gue_rx_power(scenario)
    t_tab = path_power_table(scenario, heights)
    g, u = scenario.params.num_bs, scenario.params.num_uav
    num_gue = scenario.gue_xy.shape[0]
    if mode == EFFECTIVE:
        sig2 = channels.error_var
        corr = channels.corr
        err_uav = sig2 * np.einsum("iun,nm,ium->iu", beams.z_uav.conj(), corr,
                                   beams.z_uav).real
        err_gue = sig2 * np.einsum("kn,nm,km->k", beams.z_gue.conj(), corr,
                                   beams.z_gue).real
    else:
        err_uav = np.zeros((g, u))
        err_gue = np.zeros(num_gue)
    return _LinkStats(s_rx=s_rx, t_tab=t_tab,
                      q_uu=tables.uav_uav, q_ug=tables.uav_gue,
                      q_gg=tables.gue_gue, q_gu=tables.gue_uav,
                      err_uav=err_uav, err_gue=err_gue)


# ---------------------------------------------------------------------------
# big-M
# ---------------------------------------------------------------------------

def big_m_value(t, beamformers, scenario, channels, heights=None,
                csi_mode=None):
    """Upper bound on t times any reachable interference-plus-noise level.

    For every candidate (BS i, UAV u) pair: the ground-user terms are
    fixed, each other UAV contributes at most one serving-BS choice, so
    summing the U-1 largest path-power-times-beam-gain products over all
    (serving BS, other UAV) pairs bounds the UAV interference. The
    result is the maximum over all pairs. Under effective-SINR rows the
    expectation forms and the pair's own error-mass column are included.
    """
    if t <= 0:
        raise ValueError("rate target t must be positive")
    scen = scenario
    if heights is None:
        heights = scen.uav_heights
    mode = resolve_csi_mode(channels, csi_mode)
    st = _link_stats(scen, channels, beamformers, heights, mode)
    p = scen.params
    noise = p.noise_power
    g, u_count = p.num_bs, p.num_uav
    best = 0.0
    for i in range(g):
        for u in range(u_count):
            eq_ug = st.q_ug[i, u] + st.err_uav[i, u]
            d_sum = float(st.s_rx[i] @ eq_ug)
            eq_uu = st.q_uu[i, u] + st.err_uav[i, u]      # (U,)
            vals = st.t_tab[:, i, :] * eq_uu[None, :]     # (G serving, U)
            others = np.delete(vals, u, axis=1).ravel()
            if u_count > 1:
                top = np.sort(others)[::-1][:u_count - 1].sum()
            else:
                top = 0.0
            self_term = vals[:, u].max() if mode == EFFECTIVE else 0.0
            best = max(best, t * (d_sum + top + self_term + noise))
    return best


# ---------------------------------------------------------------------------
# polytope rows
# ---------------------------------------------------------------------------

def build_association_polytope(t, scenario, channels, beams, big_m,
                               heights=None, csi_mode=None):
    """All feasibility constraints as linear rows over the flattened
    association vector (index g*U + u). Returns LinearConstraintSet;
    the polytope is nonempty exactly when every row bound is >= 0
    (the zero matrix is then feasible)."""
    scen = scenario
    p = scen.params
    if heights is None:
        heights = scen.uav_heights
    mode = resolve_csi_mode(channels, csi_mode)
    st = _link_stats(scen, channels, beams, heights, mode)
    noise = p.noise_power
    g, u_count = p.num_bs, p.num_uav
    num_gue = scen.gue_xy.shape[0]
    dim = g * u_count
    gamma = p.gue_target_sinr

    rows, bounds = [], []

    # rate-target rows, one per (receiving BS, UAV) pair
    for i in range(g):
        for u in range(u_count):
            eq_uu = st.q_uu[i, u] + st.err_uav[i, u]
            eq_ug = st.q_ug[i, u] + st.err_uav[i, u]
            coherent = st.t_tab[i, i, u] * st.q_uu[i, u, u]
            coeffs = t * st.t_tab[:, i, :] * eq_uu[None, :]   # (G, U)
            if mode == PERFECT:
                coeffs[:, u] = 0.0
                coeffs[i, u] = big_m - coherent
            else:
                coeffs[i, u] += big_m - coherent * (1.0 + t)
            d_sum = float(st.s_rx[i] @ eq_ug)
            rows.append(coeffs.ravel())
            bounds.append(big_m - t * (d_sum + noise))

    # ground-user SINR-floor rows
    for k in range(num_gue):
        i = scen.gue_serving[k]
        eq_gu = st.q_gu[k] + st.err_gue[k]
        eq_gg = st.q_gg[k] + st.err_gue[k]
        num_k = st.s_rx[i, k] * st.q_gg[k, k]
        coeffs = gamma * st.t_tab[:, i, :] * eq_gu[None, :]
        rows.append(coeffs.ravel())
        if mode == PERFECT:
            interf = float(st.s_rx[i] @ eq_gg) - st.s_rx[i, k] * eq_gg[k]
            bounds.append(num_k - gamma * (interf + noise))
        else:
            e_all = float(st.s_rx[i] @ eq_gg)
            bounds.append((1.0 + gamma) * num_k - gamma * (e_all + noise))

    # per-BS beamforming capacity and per-UAV single-serving rows
    headroom = p.antennas_per_bs - p.gues_per_cell
    for i in range(g):
        coeffs = np.zeros((g, u_count))
        coeffs[i, :] = 1.0
        rows.append(coeffs.ravel())
        bounds.append(float(headroom))
    for u in range(u_count):
        coeffs = np.zeros((g, u_count))
        coeffs[:, u] = 1.0
        rows.append(coeffs.ravel())
        bounds.append(1.0)

    # box
    eye = np.eye(dim)
    rows.extend(eye)
    bounds.extend([1.0] * dim)
    rows.extend(-eye)
    bounds.extend([0.0] * dim)

    return LinearConstraintSet(dim=dim,
                               ineq_coeffs=np.array(rows, dtype=float).reshape(
                                   len(bounds), dim),
                               ineq_bounds=np.array(bounds, dtype=float))


# ---------------------------------------------------------------------------
# Algorithm: fixed-point beamformer/association iteration
# ---------------------------------------------------------------------------

def _gram(beams):
    stack = np.concatenate([beams.z_gue,
                            beams.z_uav.reshape(-1, beams.z_uav.shape[-1])],
                           axis=0)
    return stack @ stack.conj().T


def max_activation(t, scenario, channels, heights=None, csi_mode=None,
                           init=None, pgd_step=0.1, pgd_max_iter=100,
                           pgd_move_tol=1e-4, max_alternations=50,
                           converge_tol=1e-4):
    """Maximize the number of UAVs that can hit rate target t.

    Alternates generalized-eigenvector beamformer updates (relaxed
    association fixed) with projected gradient ascent of the activation
    count over the constraint polytope (beamformers fixed), then commits
    the best binary assignment under the final beams by exhaustive
    search. Feasible means every UAV is activated. An empty polytope at
    any iteration reports infeasible with an all-zero association.
    """
    if t <= 0:
        raise ValueError("rate target t must be positive")
    scen = scenario
    p = scen.params
    if heights is None:
        heights = scen.uav_heights
    mode = resolve_csi_mode(channels, csi_mode)
    robust = mode == EFFECTIVE
    g, u_count = p.num_bs, p.num_uav
    dim = g * u_count

    if init is not None:
        a_relaxed, beams = init
        a_relaxed = np.asarray(a_relaxed, dtype=float).copy()
    else:
        a_relaxed = np.zeros((g, u_count))
        beams = eig_beamformers(scen, channels,
                                Association(a_relaxed, binary=False),
                                big_m=1.0, heights=heights, robust=robust)

    trace = []

    def infeasible_result():
        return ActivationResult(
            association=Association(np.zeros((g, u_count)), binary=True),
            beamformers=beams, activated_count=0, feasible=False,
            relaxed=a_relaxed, trace=trace)

    big_m = 1.0
    for rounds in range(max_alternations):
        big_m = big_m_value(t, beams, scen, channels, heights, mode)
        polytope = build_association_polytope(t, scen, channels, beams, big_m,
                                              heights, mode)
        if polytope.ineq_bounds.min() < 0:
            return infeasible_result()
        if dim == 0:
            break

        a_prev_round = a_relaxed.copy()
        flat = a_relaxed.ravel().copy()
        for _ in range(pgd_max_iter):
            try:
                stepped = project_onto_polytope(flat + pgd_step, polytope)
            except InfeasiblePolytopeError:
                return infeasible_result()
            move = np.linalg.norm(stepped - flat)
            flat = stepped
            if move < pgd_move_tol:
                break
        a_relaxed = np.clip(flat, 0.0, 1.0).reshape(g, u_count)

        new_beams = eig_beamformers(scen, channels,
                                    Association(a_relaxed, binary=False),
                                    big_m=big_m, heights=heights, robust=robust)
        gram_old, gram_new = _gram(beams), _gram(new_beams)
        gram_delta = (np.linalg.norm(gram_new - gram_old)
                      / max(np.linalg.norm(gram_old), 1e-12))
        a_delta = (np.linalg.norm(a_relaxed - a_prev_round)
                   / max(np.linalg.norm(a_prev_round), 1e-12))
        beams = new_beams
        trace.append({"round": rounds, "t": t, "big_m": big_m,
                      "a_delta": a_delta, "gram_delta": gram_delta,
                      "relaxed_sum": float(a_relaxed.sum())})
        if gram_delta < converge_tol and a_delta < converge_tol:
            break

    # rebuild rows against the final beams before committing binaries
    big_m = big_m_value(t, beams, scen, channels, heights, mode)
    polytope = build_association_polytope(t, scen, channels, beams, big_m,
                                          heights, mode)
    if polytope.ineq_bounds.min() < 0:
        return infeasible_result()
    coeffs, limits = polytope.ineq_coeffs, polytope.ineq_bounds
    # bounds are all nonnegative here; allow only relative rounding slack
    slack = limits * (1.0 + 1e-9) + 1e-25

    def feasible_maps(choices):
        count = choices.shape[0]
        onehot = np.zeros((count, dim))
        rows_idx = np.arange(count)
        for u in range(u_count):
            sel = choices[:, u] > 0
            onehot[rows_idx[sel], (choices[sel, u] - 1) * u_count + u] = 1.0
        return (onehot @ coeffs.T <= slack[None, :]).all(axis=1)

    matrix, score = enumerate_binary_assignments(g, u_count, feasible_maps)
    activated = int(round(score))
    trace.append({"round": "binary", "t": t, "big_m": big_m,
                  "activated": activated})
    return ActivationResult(association=Association(matrix, binary=True),
                      beamformers=beams, activated_count=activated,
                      feasible=activated == u_count,
                      relaxed=a_relaxed, trace=trace)


# ---------------------------------------------------------------------------
# bisection on the rate target
# ---------------------------------------------------------------------------

def default_target_bounds(scenario, channels, heights=None):
    """(tLow, tHigh): tiny positive floor and the best interference-free
    SNR any (BS, UAV) pair could reach at the given heights."""
    scen = scenario
    p = scen.params
    if heights is None:
        heights = scen.uav_heights
    if isinstance(channels, ImperfectChannelSet):
        h_uav = channels.estimate.h_uav
    else:
        h_uav = channels.h_uav
    if p.num_uav == 0:
        return 1e-6, 1.0
    gains = channels.uav_gains(heights)           # (G, U)
    energy = (np.abs(h_uav) ** 2).sum(axis=2)     # (G, U)
    ceiling = p.max_power_uav * gains * energy / p.noise_power
    return 1e-6, float(ceiling.max())


def bisection_maximin(scenario, channels, heights=None, t_low=None,
                      t_high=None, eps=1e-2, csi_mode=None,
                      activation_kwargs=None, rel_eps=None):
    """Largest rate target every UAV can reach, by bisection.

    The floor tLow is probed first: if even that target cannot activate
    every UAV the instance is infeasible outright (feasibility is
    monotone in t) and the result says so after a single probe. From a
    verified floor, a feasible probe raises the floor and the next probe
    is halfway to the ceiling; an infeasible probe lowers the ceiling
    and the next probe is halfway to the floor. Stops when the bracket
    is within eps, or within rel_eps relative to the verified floor when
    rel_eps is given; the returned t carries the association and
    beamformers that verified it.
    """
    scen = scenario
    if heights is None:
        heights = scen.uav_heights
    lo_default, hi_default = default_target_bounds(scen, channels, heights)
    t_lo = lo_default if t_low is None else t_low
    t_hi = hi_default if t_high is None else t_high
    if not t_lo < t_hi:
        raise ValueError(f"need tLow < tHigh, got [{t_lo}, {t_hi}]")
    mode = resolve_csi_mode(channels, csi_mode)
    kwargs = activation_kwargs or {}

    trace = []
    result = max_activation(t_lo, scen, channels, heights, mode, **kwargs)
    trace.append(BisectionState(t_low=t_lo, t_high=t_hi, t_current=t_lo,
                                iteration_count=0, eps=eps))
    if not result.feasible:
        return BisectionResult(t_star=t_lo, association=result.association,
                               beamformers=result.beamformers,
                               feasible=False, trace=trace)

    best = (t_lo, result)
    init = (result.relaxed, result.beamformers)
    t_cur = 0.5 * (t_lo + t_hi)
    iteration = 0
    while t_hi - t_lo > eps and (rel_eps is None
                                 or t_hi - t_lo > rel_eps * t_lo):
        iteration += 1
        result = max_activation(t_cur, scen, channels, heights, mode,
                                        init=init, **kwargs)
        if result.relaxed is not None:
            init = (result.relaxed, result.beamformers)
        trace.append(BisectionState(t_low=t_lo, t_high=t_hi, t_current=t_cur,
                                    iteration_count=iteration, eps=eps))
        if result.feasible:
            best = (t_cur, result)
            t_lo = t_cur
            t_cur = 0.5 * (t_cur + t_hi)
        else:
            t_hi = t_cur
            t_cur = 0.5 * (t_cur + t_lo)

    t_star, result = best
    return BisectionResult(t_star=t_star, association=result.association,
                           beamformers=result.beamformers, feasible=True,
                           trace=trace)


def dump_activation_trace(result, stream):
    """Write an ActivationResult's iteration trace as CSV (debugging aid)."""
    stream.write("round,t,big_m,a_delta,gram_delta,relaxed_sum,activated\n")
    for row in result.trace:
        stream.write(",".join(str(row.get(col, "")) for col in
                              ("round", "t", "big_m", "a_delta", "gram_delta",
                               "relaxed_sum", "activated")) + "\n")
