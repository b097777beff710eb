"""Uplink power control, SINR and effective-SINR evaluation, rates.

Conventions used throughout the solvers:

* ground user k is always served by its fixed base station
  scenario.gue_serving[k]; UAV u is served by the base station its
  association column selects;
* transmit powers invert the large-scale path loss toward a target
  received power (power_scale_los / power_scale_nlos), clipped at the
  hardware caps;
* a "path power" T[g, i, u] is the power received at base station i
  from UAV u when g is the serving station setting u's transmit power.
  Summing a_{g,u} * T[g, i, u] over g collapses every double
  interference sum into a per-receiver weight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import ImperfectChannelSet


@dataclass(eq=False)
class Association:
    """UAV-to-BS assignment matrix of shape (G, U).

    Binary mode holds 0/1 entries with column sums at most 1 (exactly 1
    once a solve commits); relaxed mode holds [0, 1] entries during the
    feasibility search. Row sums stay within the beamforming headroom
    N - K in either mode.
    """

    matrix: np.ndarray
    binary: bool = True

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)

    def serving(self):
        """(U,) serving BS index per UAV, -1 for unassigned columns."""
        if self.matrix.shape[1] == 0:
            return np.zeros(0, dtype=int)
        idx = np.argmax(self.matrix, axis=0)
        idx = np.where(self.matrix.sum(axis=0) > 0.5, idx, -1)
        return idx.astype(int)

    def validate(self, params):
        g, u = self.matrix.shape
        if g != params.num_bs or u != params.num_uav:
            raise ValueError(f"association shape {self.matrix.shape} does not "
                             f"match (G, U)=({params.num_bs}, {params.num_uav})")
        if self.binary:
            if not np.all(np.isin(self.matrix, (0.0, 1.0))):
                raise ValueError("binary association entries must be 0 or 1")
        elif self.matrix.min() < -1e-12 or self.matrix.max() > 1 + 1e-12:
            raise ValueError("relaxed association entries must lie in [0, 1]")
        if np.any(self.matrix.sum(axis=0) > 1 + 1e-9):
            raise ValueError("each UAV may be served by at most one BS")
        headroom = params.antennas_per_bs - params.gues_per_cell
        if np.any(self.matrix.sum(axis=1) > headroom + 1e-9):
            raise ValueError(f"a BS may serve at most N-K={headroom} UAVs")
        return self


@dataclass(eq=False)
class BeamformerSet:
    """Receive beamformers: one per ground user at its serving BS, and a
    full (G, U) grid of candidate UAV beams (the serving entry is the one
    that matters once the association is fixed). All unit norm."""

    z_gue: np.ndarray  # (G*K, N) complex
    z_uav: np.ndarray  # (G, U, N) complex

    def validate(self, tol=1e-9):
        for name, z in (("z_gue", self.z_gue), ("z_uav", self.z_uav)):
            if z.size:
                norms = np.linalg.norm(z, axis=-1)
                if np.abs(norms - 1.0).max() > tol:
                    raise ValueError(f"{name} contains non-unit-norm vectors")
        return self


@dataclass
class SinrReport:
    gue: np.ndarray  # (G*K,)
    uav: np.ndarray  # (U,)


# ---------------------------------------------------------------------------
# power control
# ---------------------------------------------------------------------------

def tx_power_gue(scenario, bs_index, gue_index):
    """Uplink power of one ground user: loss inversion toward the NLoS
    target received power, clipped at the cap."""
    p = scenario.params
    d2 = scenario.r2_bs_gue[bs_index, gue_index] + p.bs_height ** 2
    return min(p.max_power_gue,
               p.power_scale_nlos * d2 ** (p.path_loss_exp_nlos / 2.0))


def tx_power_uav(scenario, bs_index, uav_index, height):
    """Uplink power of one UAV at the given height, serving BS bs_index."""
    p = scenario.params
    d2 = scenario.r2_bs_uav[bs_index, uav_index] + (height - p.bs_height) ** 2
    return min(p.max_power_uav,
               p.power_scale_los * d2 ** (p.path_loss_exp_los / 2.0))


def gue_powers(scenario):
    """(G*K,) transmit power of every ground user toward its serving BS."""
    p = scenario.params
    idx = np.arange(scenario.gue_xy.shape[0])
    d2 = scenario.r2_bs_gue[scenario.gue_serving, idx] + p.bs_height ** 2
    return np.minimum(p.max_power_gue,
                      p.power_scale_nlos * d2 ** (p.path_loss_exp_nlos / 2.0))


def uav_power_grid(scenario, heights):
    """(G, U) transmit power of UAV u if served by BS g, at `heights`."""
    p = scenario.params
    x = (np.asarray(heights, dtype=float) - p.bs_height) ** 2
    d2 = scenario.r2_bs_uav + x[None, :]
    return np.minimum(p.max_power_uav,
                      p.power_scale_los * d2 ** (p.path_loss_exp_los / 2.0))


def path_power_table(scenario, heights):
    """(G, G, U) received power T[g, i, u]: UAV u transmits at the power
    set by serving BS g and is received at BS i through the LoS gain."""
    p = scenario.params
    x = (np.asarray(heights, dtype=float) - p.bs_height) ** 2
    d2 = scenario.r2_bs_uav + x[None, :]
    power = np.minimum(p.max_power_uav,
                       p.power_scale_los * d2 ** (p.path_loss_exp_los / 2.0))
    gain = p.path_loss_ref_los * d2 ** (-p.path_loss_exp_los / 2.0)
    return power[:, None, :] * gain[None, :, :]


def gue_rx_power(scenario):
    """(G, G*K) power of ground user k received at base station i."""
    return gue_powers(scenario)[None, :] * _gue_gain_grid(scenario)


def _gue_gain_grid(scenario):
    p = scenario.params
    d2 = scenario.r2_bs_gue + p.bs_height ** 2
    return p.path_loss_ref_nlos * d2 ** (-p.path_loss_exp_nlos / 2.0)


# ---------------------------------------------------------------------------
# beamformed quadratic forms
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class BeamGainTables:
    """|z^H h|^2 for every beam/channel pair that the evaluators need.

    gue_gue[k, j]: ground user k's beam against ground user j's channel
    at k's serving BS. gue_uav[k, u]: same beam against UAV u's channel.
    uav_gue[i, u, j] and uav_uav[i, u, j]: the candidate beam for UAV u
    at BS i against ground user / UAV j's channel at BS i.
    """

    gue_gue: np.ndarray
    gue_uav: np.ndarray
    uav_gue: np.ndarray
    uav_uav: np.ndarray


def _fading(channel_set, actual):
    if isinstance(channel_set, ImperfectChannelSet):
        if actual:
            return channel_set.actual_gue, channel_set.actual_uav
        return channel_set.estimate.h_gue, channel_set.estimate.h_uav
    return channel_set.h_gue, channel_set.h_uav


def beam_gain_tables(scenario, channel_set, beamformers, actual=True):
    """All beam-against-channel powers. For imperfect CSI the realized
    (actual) channels are used unless actual=False requests the estimates."""
    h_gue, h_uav = _fading(channel_set, actual)
    serving = scenario.gue_serving
    hg_at_serv = h_gue[serving]           # (GK, GK, N)
    hu_at_serv = h_uav[serving]           # (GK, U, N)
    zg = beamformers.z_gue.conj()
    zu = beamformers.z_uav.conj()
    gue_gue = np.abs(np.einsum("kn,kjn->kj", zg, hg_at_serv)) ** 2
    gue_uav = np.abs(np.einsum("kn,kjn->kj", zg, hu_at_serv)) ** 2
    uav_gue = np.abs(np.einsum("iun,ijn->iuj", zu, h_gue)) ** 2
    uav_uav = np.abs(np.einsum("iun,ijn->iuj", zu, h_uav)) ** 2
    return BeamGainTables(gue_gue, gue_uav, uav_gue, uav_uav)


# ---------------------------------------------------------------------------
# SINR evaluation
# ---------------------------------------------------------------------------

def sinr_all(scenario, channel_set, association, beamformers, heights=None):
    """Per-user SINR under perfect CSI (expectations over data symbols
    only). For an imperfect channel set this evaluates on the realized
    actual channels. Unassigned UAVs get SINR 0."""
    tables = beam_gain_tables(scenario, channel_set, beamformers)
    return _sinr_from_tables(scenario, association, tables, heights,
                             extra_per_rx=None)


def effective_sinr_all(scenario, imperfect_set, association, beamformers,
                       heights=None):
    """Effective SINR under imperfect CSI: closed-form use-and-forget
    bound. Every channel expectation is replaced by its two moments
    (coherent part |z^H h_bar|^2 plus error mass sigma^2_ch z^H R z), so
    each denominator gains the error mass of the total received power at
    the serving BS. error_var = 0 reproduces sinr_all on the estimates."""
    if not isinstance(imperfect_set, ImperfectChannelSet):
        raise TypeError("effective_sinr_all needs an ImperfectChannelSet")
    tables = beam_gain_tables(scenario, imperfect_set, beamformers,
                              actual=False)
    sig2 = imperfect_set.error_var
    corr = imperfect_set.corr
    rq_gue = np.einsum("kn,nm,km->k", beamformers.z_gue.conj(), corr,
                       beamformers.z_gue).real
    rq_uav = np.einsum("iun,nm,ium->iu", beamformers.z_uav.conj(), corr,
                       beamformers.z_uav).real
    return _sinr_from_tables(scenario, association, tables, heights,
                             extra_per_rx=(sig2, rq_gue, rq_uav))


def _sinr_from_tables(scenario, association, tables, heights, extra_per_rx):
    p = scenario.params
    if heights is None:
        heights = scenario.uav_heights
    noise = p.noise_power
    a_mat = association.matrix
    serving = scenario.gue_serving
    num_gue = scenario.gue_xy.shape[0]

    s_rx = gue_rx_power(scenario)                    # (G, GK)
    t_tab = path_power_table(scenario, heights)      # (G, G, U)
    w_rx = np.einsum("gu,giu->iu", a_mat, t_tab)     # (G, U)

    # ground users
    s_at = s_rx[serving]                             # (GK, GK)
    gue_num = s_at[np.arange(num_gue), np.arange(num_gue)] \
        * tables.gue_gue[np.arange(num_gue), np.arange(num_gue)]
    gue_den = (np.einsum("kj,kj->k", s_at, tables.gue_gue) - gue_num
               + (w_rx[serving] * tables.gue_uav).sum(axis=1)
               + noise)

    # UAVs
    uav_serv = association.serving()
    uav_num = np.zeros(p.num_uav)
    uav_den = np.full(p.num_uav, noise)
    for u in range(p.num_uav):
        i = uav_serv[u]
        if i < 0:
            continue
        uav_num[u] = t_tab[i, i, u] * tables.uav_uav[i, u, u]
        uav_den[u] = (s_rx[i] @ tables.uav_gue[i, u]
                      + w_rx[i] @ tables.uav_uav[i, u]
                      - w_rx[i, u] * tables.uav_uav[i, u, u]
                      + noise)

    if extra_per_rx is not None:
        sig2, rq_gue, rq_uav = extra_per_rx
        total_rx = s_rx.sum(axis=1) + w_rx.sum(axis=1)   # (G,)
        gue_den = gue_den + sig2 * rq_gue * total_rx[serving]
        for u in range(p.num_uav):
            i = uav_serv[u]
            if i >= 0:
                uav_den[u] += sig2 * rq_uav[i, u] * total_rx[i]

    gue = gue_num / gue_den if num_gue else np.zeros(0)
    uav = np.where(uav_num > 0, uav_num / uav_den, 0.0)
    return SinrReport(gue=gue, uav=uav)


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------

def rates(sinr_values):
    """Spectral efficiency log2(1 + SINR) per entry."""
    return np.log2(1.0 + np.asarray(sinr_values, dtype=float))


def min_uav_rate(report):
    """Worst UAV rate of a SinrReport (infinite when there are no UAVs)."""
    if len(report.uav) == 0:
        return math.inf
    return float(rates(report.uav).min())
