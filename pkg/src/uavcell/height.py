"""Height control: geometric-program transform plus convex-concave
iteration, alternated with MMSE beamformer updates.

With beamformers and a binary association fixed, substituting
x_u = (h_u - h_G)^2 makes every height-dependent quantity a ratio of
polynomials in x. Desired and intra-cell received powers are constant
(power control inverts the path loss exactly while the cap is slack);
only inter-cell interference keeps an x dependence, through ratios
((r_other^2+x)/(r_serving^2+x))^(alpha/2) that get one auxiliary
log-domain variable each. The resulting program is convex except for
the ratio-definition rows, which are linearized at an expansion point
and refreshed convex-concave style.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .association import EFFECTIVE, _link_stats, resolve_csi_mode
from .beamforming import mmse_beamformers
from .numerics import (BarrierOptions, ExpSumRow, InfeasibleProgramError,
                       LogRow, SmoothConvexProgram, solve_convex_barrier)

log = logging.getLogger(__name__)


class EmptyHeightInterval(ValueError):
    """No height satisfies the power cap for this UAV's serving link."""


def height_feasible_interval(scenario, association, uav_index):
    """Eq-level box for x_u = (h_u - h_G)^2: floor from the minimum
    height, ceiling from the height cap intersected with the distance at
    which loss inversion would exceed the UAV power budget."""
    serving = association.serving()
    i = serving[uav_index]
    if i < 0:
        raise ValueError(f"UAV {uav_index} has no serving BS")
    lo, hi = _interval(scenario, int(i), uav_index)
    if hi < lo:
        raise EmptyHeightInterval(
            f"UAV {uav_index} at horizontal range "
            f"{math.sqrt(scenario.r2_bs_uav[i, uav_index]):.1f} m cannot stay "
            f"under the power cap at any allowed height")
    return lo, hi


def _interval(scenario, bs_index, uav_index):
    p = scenario.params
    lo = (p.uav_height_min - p.bs_height) ** 2
    cap = ((p.max_power_uav / p.power_scale_los) ** (2.0 / p.path_loss_exp_los)
           - scenario.r2_bs_uav[bs_index, uav_index])
    hi = min(cap, (p.uav_height_max - p.bs_height) ** 2)
    return lo, hi


# ---------------------------------------------------------------------------
# convex subproblem
# ---------------------------------------------------------------------------

@dataclass
class SubproblemLayout:
    """Variable indexing for one convexified height program."""

    free: list                    # UAV indices whose x is a variable
    frozen_x: dict                # uav -> fixed x value (empty interval)
    x_index: dict                 # uav -> variable position
    aux_index: dict               # (uav, receiving bs) -> variable position
    serving: np.ndarray
    start: np.ndarray = None
    dim: int = 0


def _lin_ratio(r2_g, r2_i, x_bar):
    """Tangent of ln(r2_g + x) at x_bar minus ln(r2_i + x), split into
    (const, slope, offset) for const + slope*x - ln(offset + x)."""
    const = math.log(r2_g + x_bar) - x_bar / (r2_g + x_bar)
    slope = 1.0 / (r2_g + x_bar)
    return const, slope, r2_i


def build_convex_subproblem(scenario, channels, association, beamformers,
                            expansion_point, csi_mode=None):
    """Convexified height program at one expansion point.

    Variables: [y_t, x for free UAVs, y ratio bounds per (free UAV,
    other-cell BS)]. Objective: maximize y_t. Rows: per served UAV the
    exp-sum rate row, per ground user the SINR-floor row, and per
    auxiliary variable the linearized ratio-definition row. The returned
    program carries a `layout` attribute (variable map and a strictly
    feasible start constructed at the expansion point).
    """
    scen = scenario
    p = scen.params
    mode = resolve_csi_mode(channels, csi_mode)
    serving = association.serving()
    if p.num_uav and (serving < 0).any():
        raise ValueError("height subproblem needs every UAV assigned")
    x_bar = np.asarray(expansion_point, dtype=float)

    free, frozen_x = [], {}
    boxes = {}
    for u in range(p.num_uav):
        lo, hi = _interval(scen, int(serving[u]), u)
        if hi < lo:
            frozen_x[u] = lo
        else:
            free.append(u)
            boxes[u] = (lo, hi)

    x_index = {u: 1 + j for j, u in enumerate(free)}
    aux_index = {}
    pos = 1 + len(free)
    for u in free:
        for i in range(p.num_bs):
            if i != serving[u]:
                aux_index[(u, i)] = pos
                pos += 1
    dim = pos
    layout = SubproblemLayout(free=free, frozen_x=frozen_x, x_index=x_index,
                              aux_index=aux_index, serving=serving, dim=dim)

    # effective x values at the expansion point (frozen ones pinned)
    x_eff = x_bar.copy() if p.num_uav else np.zeros(0)
    for u, val in frozen_x.items():
        x_eff[u] = val
    heights_eff = p.bs_height + np.sqrt(x_eff) if p.num_uav else np.zeros(0)

    st = _link_stats(scen, channels, beamformers, heights_eff, mode)
    noise = p.noise_power
    bl_al = p.power_scale_los * p.path_loss_ref_los
    gamma = p.gue_target_sinr
    num_gue = scen.gue_xy.shape[0]

    def interference_pieces(i, beam_kind, beam_idx):
        """Constant interference mass and per-free-inter-cell-UAV
        coefficients seen through one receive beam at BS i."""
        if beam_kind == "uav":
            q_u = st.q_uu[i, beam_idx[1]]          # (U,) vs UAV channels
            q_g = st.q_ug[i, beam_idx[1]]          # (GK,)
            err = st.err_uav[i, beam_idx[1]]
        else:
            q_u = st.q_gu[beam_idx]                # (U,)
            q_g = st.q_gg[beam_idx]                # (GK,)
            err = st.err_gue[beam_idx]
        const = 0.0
        # ground users (self handled by the caller)
        const += float(st.s_rx[i] @ (q_g + err))
        inter_terms = {}
        for u2 in range(p.num_uav):
            eq = q_u[u2] + err
            g2 = int(serving[u2])
            if u2 in frozen_x:
                const += st.t_tab[g2, i, u2] * eq
            elif g2 == i:
                const += bl_al * eq
            else:
                inter_terms[u2] = bl_al * eq
        return const, inter_terms

    rows = []
    lower = np.full(dim, -np.inf)
    upper = np.full(dim, np.inf)
    for u in free:
        lower[x_index[u]], upper[x_index[u]] = boxes[u]

    # per-UAV rate rows (active pairs only)
    for u in range(p.num_uav):
        i = int(serving[u])
        coh = st.q_uu[i, u, u]
        if u in frozen_x:
            desired = st.t_tab[i, i, u] * coh
        else:
            desired = bl_al * coh
        if desired <= 0:
            raise ValueError(f"UAV {u} beam is orthogonal to its channel; "
                             f"desired power coefficient is nonpositive")
        const, inter = interference_pieces(i, "uav", (i, u))
        # drop the coherent self part; the error mass of the own signal
        # stays in the denominator under effective CSI
        const -= (st.t_tab[i, i, u] if u in frozen_x else bl_al) * coh
        coefs = [(const + noise) / desired]
        expos = [_unit_expo(dim, [(0, 1.0)])]
        for u2, weight in inter.items():
            if weight <= 0:
                continue
            coefs.append(weight / desired)
            expos.append(_unit_expo(dim, [(0, 1.0), (aux_index[(u2, i)], 1.0)]))
        rows.append(ExpSumRow(const=-1.0, coefs=np.array(coefs),
                              expos=np.array(expos)))

    # ground-user floor rows
    for k in range(num_gue):
        i = int(scen.gue_serving[k])
        desired = st.s_rx[i, k] * st.q_gg[k, k]
        if desired <= 0:
            raise ValueError(f"ground user {k} beam is orthogonal to its "
                             f"channel; desired power coefficient is nonpositive")
        const, inter = interference_pieces(i, "gue", k)
        const -= st.s_rx[i, k] * st.q_gg[k, k]
        base = gamma * (const + noise) / desired - 1.0
        if base >= 0:
            raise InfeasibleProgramError(
                f"ground user {k} cannot reach its SINR floor at any height "
                f"under the current beamformers")
        coefs, expos = [], []
        for u2, weight in inter.items():
            if weight <= 0:
                continue
            coefs.append(gamma * weight / desired)
            expos.append(_unit_expo(dim, [(aux_index[(u2, i)], 1.0)]))
        if coefs:
            rows.append(ExpSumRow(const=base, coefs=np.array(coefs),
                                  expos=np.array(expos)))
        # rows with no exp terms reduce to the constant check above

    # linearized ratio-definition rows and auxiliary boxes
    alpha = p.path_loss_exp_los
    for (u, i), idx in aux_index.items():
        g = int(serving[u])
        r2_g = scen.r2_bs_uav[g, u]
        r2_i = scen.r2_bs_uav[i, u]
        xb = float(np.clip(x_bar[u], boxes[u][0], boxes[u][1]))
        const, slope, offset = _lin_ratio(r2_g, r2_i, xb)
        affine = np.zeros(dim)
        affine[x_index[u]] = slope
        affine[idx] = -2.0 / alpha
        rows.append(LogRow(const=const, affine=affine,
                           x_index=x_index[u], offset=offset))
        lo_y, hi_y = _aux_box(r2_g, r2_i, xb, boxes[u], alpha)
        lower[idx], upper[idx] = lo_y, hi_y

    program = SmoothConvexProgram(dim=dim, objective=_unit_vec(dim, 0),
                                  rows=rows, lower=lower, upper=upper)
    layout.start = _feasible_start(program, layout, x_bar, boxes,
                                   scen, alpha)
    program.layout = layout
    return program


def _unit_expo(dim, entries):
    row = np.zeros(dim)
    for idx, val in entries:
        row[idx] = val
    return row


def _unit_vec(dim, idx):
    v = np.zeros(dim)
    v[idx] = 1.0
    return v


def _aux_box(r2_g, r2_i, x_bar, box, alpha):
    """Bounds on the auxiliary log-ratio variable that can never cut the
    optimum: the linearized requirement evaluated over the x box."""
    lo, hi = box

    def lin(x):
        c, s, off = _lin_ratio(r2_g, r2_i, x_bar)
        return c + s * x - math.log(off + x)

    cands = [lin(lo), lin(hi)]
    _, s, off = _lin_ratio(r2_g, r2_i, x_bar)
    if s > 0:
        crit = 1.0 / s - off
        if lo < crit < hi:
            cands.append(lin(crit))
    return (alpha / 2.0) * min(cands) - 1.0, (alpha / 2.0) * max(cands) + 1.0


def _feasible_start(program, layout, x_bar, boxes, scenario, alpha):
    """Strictly feasible start at the expansion point: exact ratios plus
    a whisker on the auxiliaries, y_t backed off from the tightest row."""
    v = np.zeros(layout.dim)
    for u in layout.free:
        lo, hi = boxes[u]
        pad_lo = lo + 1e-9 * max(1.0, lo)
        pad_hi = hi - 1e-9 * max(1.0, hi)
        if pad_lo >= pad_hi:
            v[layout.x_index[u]] = 0.5 * (lo + hi)
        else:
            v[layout.x_index[u]] = np.clip(x_bar[u], pad_lo, pad_hi)
    for (u, i), idx in layout.aux_index.items():
        g = int(layout.serving[u])
        x = v[layout.x_index[u]]
        exact = (alpha / 2.0) * math.log(
            (scenario.r2_bs_uav[g, u] + x) / (scenario.r2_bs_uav[i, u] + x))
        v[idx] = exact + 1e-9 * max(1.0, abs(exact))
    # cap y_t below every rate row's bound
    cap = math.inf
    for row in program.rows:
        if not isinstance(row, ExpSumRow):
            continue
        has_yt = any(e[0] != 0 for e in np.atleast_2d(row.expos))
        if not has_yt:
            continue
        total = 0.0
        for coef, expo in zip(row.coefs, np.atleast_2d(row.expos)):
            rest = float(expo @ v) - expo[0] * v[0]
            total += coef * math.exp(rest)
        cap = min(cap, -math.log(total))
    v[0] = cap - 1e-6 * max(1.0, abs(cap)) if math.isfinite(cap) else 0.0
    return v


# ---------------------------------------------------------------------------
# convex-concave iteration
# ---------------------------------------------------------------------------

@dataclass
class CcpResult:
    heights: np.ndarray
    t_achieved: float
    trace: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.heights, self.t_achieved))


def ccp_solve(scenario, channels, association, beamformers, x_bar0,
              csi_mode=None, tol=1e-3, max_iter=30, barrier_options=None):
    """Refresh the linearization until the achieved log-target settles.

    Each round solves the convexified program at the current expansion
    point and re-expands at the optimizer. The previous optimum stays
    feasible after re-expansion, so the log-target is nondecreasing up
    to solver tolerance; iteration stops when it moves less than tol or
    after max_iter rounds. Returns heights (frozen UAVs pinned at their
    floor), the achieved linear target, and a per-iteration trace.
    """
    scen = scenario
    p = scen.params
    if p.num_uav == 0:
        return CcpResult(heights=np.zeros(0), t_achieved=math.inf, trace=[])
    opts = barrier_options or BarrierOptions()
    x_bar = np.asarray(x_bar0, dtype=float).copy()
    trace = []
    y_prev = None
    solution = None
    for it in range(max_iter):
        program = build_convex_subproblem(scen, channels, association,
                                          beamformers, x_bar, csi_mode)
        layout = program.layout
        try:
            result = solve_convex_barrier(program, start=layout.start,
                                          options=opts)
        except InfeasibleProgramError as exc:
            if solution is not None:
                # a refresh lost strict feasibility to rounding; the
                # previous iterate is the converged answer
                log.warning("height refresh %d infeasible (%s); stopping",
                            it, exc)
                break
            raise InfeasibleProgramError(
                f"height subproblem infeasible at refresh {it}: {exc}")
        solution = (program, result)
        y_t = result.x[0]
        for u in layout.free:
            lo, hi = _interval(scen, int(layout.serving[u]), u)
            margin = 1e-6 * max(1.0, hi - lo)
            x_bar[u] = float(np.clip(result.x[layout.x_index[u]],
                                     lo + margin, hi - margin))
        trace.append({"iteration": it, "y_t": float(y_t),
                      "newton_steps": result.newton_steps,
                      "heights": (p.bs_height + np.sqrt(
                          _x_full(layout, result.x))).tolist()})
        if y_prev is not None and abs(y_t - y_prev) < tol:
            y_prev = y_t
            break
        y_prev = y_t

    program, result = solution
    layout = program.layout
    x_full = _x_full(layout, result.x)
    heights = p.bs_height + np.sqrt(x_full)
    return CcpResult(heights=heights, t_achieved=float(math.exp(result.x[0])),
                     trace=trace)


def _x_full(layout, v):
    x = np.zeros(len(layout.serving))
    for u in layout.free:
        x[u] = v[layout.x_index[u]]
    for u, val in layout.frozen_x.items():
        x[u] = val
    return x


# ---------------------------------------------------------------------------
# Alternation of MMSE beamforming and height refresh
# ---------------------------------------------------------------------------

@dataclass
class HeightStageResult:
    heights: np.ndarray
    beamformers: object
    t_achieved: float
    trace: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.heights, self.beamformers, self.t_achieved))


def optimize_heights(scenario, channels, association, csi_mode=None,
                     move_tol=0.1, max_alternations=20, ccp_tol=1e-3,
                     ccp_max_iter=30, barrier_options=None):
    """Alternate MMSE beamformers with height refreshes from the floor.

    Heights always restart at the minimum allowed height; each round
    rebuilds the MMSE beam grid at the current heights and runs the
    convex-concave height solve from there. Stops when no height moves
    more than move_tol meters or after max_alternations rounds.
    """
    scen = scenario
    p = scen.params
    mode = resolve_csi_mode(channels, csi_mode)
    serving = association.serving()
    if p.num_uav and (serving < 0).any():
        raise ValueError("every UAV must be assigned before height control")
    heights = np.full(p.num_uav, p.uav_height_min, dtype=float)
    trace = []
    beams = None
    t_achieved = 0.0
    robust = mode == EFFECTIVE
    for rounds in range(max_alternations):
        beams = mmse_beamformers(scen, channels, association, heights=heights,
                                 robust=robust)
        x_bar = (heights - p.bs_height) ** 2
        result = ccp_solve(scen, channels, association, beams, x_bar,
                           csi_mode=mode, tol=ccp_tol, max_iter=ccp_max_iter,
                           barrier_options=barrier_options)
        move = (np.abs(result.heights - heights).max()
                if p.num_uav else 0.0)
        heights = result.heights
        t_achieved = result.t_achieved
        trace.append({"round": rounds, "move": float(move),
                      "t_achieved": t_achieved,
                      "ccp_iterations": len(result.trace)})
        if move < move_tol:
            break
    if beams is None:
        beams = mmse_beamformers(scen, channels, association, heights=heights,
                                 robust=robust)
    return HeightStageResult(heights=heights, beamformers=beams,
                      t_achieved=t_achieved, trace=trace)


def dump_ccp_trace(result, stream):
    """Per-iteration CCP log (y_t and heights) as CSV."""
    stream.write("iteration,y_t,newton_steps,heights\n")
    for row in result.trace:
        heights = ";".join(f"{h:.6f}" for h in row["heights"])
        stream.write(f"{row['iteration']},{row['y_t']!r},"
                     f"{row['newton_steps']},{heights}\n")
