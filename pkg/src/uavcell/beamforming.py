"""Receive beamformer designs.

Two closed-form families drive the solvers: generalized-eigenvector
beamformers for the feasibility subproblem (the UAV variant carries a
big-M identity term so relaxed association weights stay meaningful) and
MMSE vectors (inverse interference covariance times channel) for the
height loop. Matched-filter and partial zero-forcing baselines round
out the comparison set.

All variants share one covariance assembly. Under imperfect CSI the
beamformers see only the channel estimates; the robust flavor adds the
estimation-error mass sigma^2_ch * (total received power) * R to the
covariance, which by the use-and-forget moment identities makes the
MMSE/eigenvector outputs optimal for the effective SINR.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from .channel import ImperfectChannelSet
from .linkmetrics import (BeamformerSet, gue_rx_power, path_power_table)
from .numerics import NumericsError, leading_gen_eigpair, _fix_phase

log = logging.getLogger(__name__)

MF = "mf"
PZF = "pzf"


def _estimate_fading(channels):
    """Channels the receiver can act on: estimates under imperfect CSI."""
    if isinstance(channels, ImperfectChannelSet):
        return channels.estimate.h_gue, channels.estimate.h_uav
    return channels.h_gue, channels.h_uav


def _robust_flag(channels, robust):
    if robust is None:
        return isinstance(channels, ImperfectChannelSet) and channels.error_var > 0
    if robust and not isinstance(channels, ImperfectChannelSet):
        raise ValueError("robust beamforming needs an ImperfectChannelSet")
    return robust


def full_covariances(scenario, channels, assoc_matrix, heights=None,
                     robust=None):
    """Per-BS covariance of everything received: all ground users, all
    associated UAVs (weights summed over possible serving stations),
    optionally the CSI error mass, plus noise.

    Returns (C, S, W): C of shape (G, N, N), the ground-user received
    powers S (G, G*K) and UAV weights W (G, U). Per-user design
    covariances come from rank-1 downdates of C.
    """
    p = scenario.params
    if heights is None:
        heights = scenario.uav_heights
    robust = _robust_flag(channels, robust)
    h_gue, h_uav = _estimate_fading(channels)
    s_rx = gue_rx_power(scenario)
    t_tab = path_power_table(scenario, heights)
    w_rx = np.einsum("gu,giu->iu", np.asarray(assoc_matrix, dtype=float), t_tab)
    g, n = p.num_bs, p.antennas_per_bs
    cov = np.empty((g, n, n), dtype=complex)
    eye = np.eye(n)
    for i in range(g):
        stack = np.concatenate([h_gue[i], h_uav[i]], axis=0)
        weights = np.concatenate([s_rx[i], w_rx[i]])
        cov[i] = (stack.T * weights) @ stack.conj()
        if robust:
            cov[i] += channels.error_var * weights.sum() * channels.corr
        cov[i] += p.noise_power * eye
    return cov, s_rx, w_rx


def _downdate(cov_i, weight, h):
    return cov_i - weight * np.outer(h, h.conj())


# ---------------------------------------------------------------------------
# per-link operations
# ---------------------------------------------------------------------------

def bf_uav_bigm(scenario, channels, association, big_m, target_t, bs_index,
                uav_index, heights=None, robust=None):
    """Eigenvector beamformer for the (bs, uav) pair inside the
    feasibility subproblem.

    Maximizes the quotient of a_{i,u} * B_L*A_L * h h^H + M(1-a_{i,u}) I
    over the interference-plus-noise covariance that excludes this UAV.
    target_t is the rate-target level the surrounding bisection probes;
    the maximizing vector itself does not depend on it (the attained
    quotient against t is the caller's feasibility test).
    """
    del target_t
    if big_m < 0:
        raise ValueError("big_m must be nonnegative")
    p = scenario.params
    cov, _, w_rx = full_covariances(scenario, channels, association.matrix,
                                    heights, robust)
    _, h_uav = _estimate_fading(channels)
    h = h_uav[bs_index, uav_index]
    b_mat = _downdate(cov[bs_index], w_rx[bs_index, uav_index], h)
    a = association.matrix[bs_index, uav_index]
    num = (a * p.power_scale_los * p.path_loss_ref_los * np.outer(h, h.conj())
           + big_m * (1.0 - a) * np.eye(p.antennas_per_bs))
    _, vec = leading_gen_eigpair(num, b_mat)
    return vec


def bf_gue(scenario, channels, association, bs_index, gue_index, heights=None,
           robust=None):
    """Eigenvector beamformer for a ground user at its serving BS.

    The numerator is rank one, so the generalized eigenvector and the
    normalized covariance-inverse-times-channel closed form must agree;
    both are computed and checked against each other on every call.
    """
    if scenario.gue_serving[gue_index] != bs_index:
        raise ValueError(f"ground user {gue_index} is served by BS "
                         f"{scenario.gue_serving[gue_index]}, not {bs_index}")
    cov, s_rx, _ = full_covariances(scenario, channels, association.matrix,
                                    heights, robust)
    h_gue, _ = _estimate_fading(channels)
    h = h_gue[bs_index, gue_index]
    b_mat = _downdate(cov[bs_index], s_rx[bs_index, gue_index], h)
    num = s_rx[bs_index, gue_index] * np.outer(h, h.conj())
    _, eig_vec = leading_gen_eigpair(num, b_mat)
    closed = np.linalg.solve(b_mat, h)
    closed = _fix_phase(closed / np.linalg.norm(closed))
    overlap = abs(np.vdot(eig_vec, closed))
    if overlap < 1.0 - 1e-8:
        raise NumericsError(f"eigenvector and closed-form beamformers diverge "
                            f"(overlap {overlap})")
    return eig_vec


def bf_mmse_uav(scenario, channels, association, heights, bs_index, uav_index,
                robust=None):
    """MMSE beamformer for a served UAV: normalized inverse covariance
    times channel, with height-dependent interferer powers."""
    if association.matrix[bs_index, uav_index] < 0.5:
        raise ValueError(f"UAV {uav_index} is not served by BS {bs_index}")
    cov, _, w_rx = full_covariances(scenario, channels, association.matrix,
                                    heights, robust)
    _, h_uav = _estimate_fading(channels)
    h = h_uav[bs_index, uav_index]
    b_mat = _downdate(cov[bs_index], w_rx[bs_index, uav_index], h)
    vec = np.linalg.solve(b_mat, h)
    return _fix_phase(vec / np.linalg.norm(vec))


def bf_baseline(kind, scenario, channels, association, bs_index, user_kind,
                user_index, heights=None):
    """Matched-filter or partial zero-forcing beamformer for one user."""
    beams = baseline_beamformers(kind, scenario, channels, association, heights)
    if user_kind == "gue":
        if scenario.gue_serving[user_index] != bs_index:
            raise ValueError("ground user not served by that BS")
        return beams.z_gue[user_index]
    if user_kind == "uav":
        return beams.z_uav[bs_index, user_index]
    raise ValueError(f"unknown user kind {user_kind!r}")


# ---------------------------------------------------------------------------
# batched builders (full beam grids for the solvers)
# ---------------------------------------------------------------------------

def mmse_beamformers(scenario, channels, association, heights=None,
                     robust=None):
    """MMSE beam grid: every ground user and every (BS, UAV) pair.

    Uses the full per-BS covariance; removing the desired user's own
    rank-1 term only rescales the solve (matrix-inversion lemma), so the
    normalized directions equal the per-link closed forms.
    """
    p = scenario.params
    cov, _, _ = full_covariances(scenario, channels, association.matrix,
                                 heights, robust)
    h_gue, h_uav = _estimate_fading(channels)
    num_gue = scenario.gue_xy.shape[0]
    z_gue = np.zeros((num_gue, p.antennas_per_bs), dtype=complex)
    z_uav = np.zeros((p.num_bs, p.num_uav, p.antennas_per_bs), dtype=complex)
    for i in range(p.num_bs):
        factor = scipy.linalg.cho_factor(cov[i], check_finite=False)
        own = np.where(scenario.gue_serving == i)[0]
        targets = np.concatenate([h_gue[i, own], h_uav[i]], axis=0)
        if targets.shape[0] == 0:
            continue
        sol = scipy.linalg.cho_solve(factor, targets.T, check_finite=False).T
        sol /= np.linalg.norm(sol, axis=1, keepdims=True)
        for row, k in enumerate(own):
            z_gue[k] = _fix_phase(sol[row])
        for u in range(p.num_uav):
            z_uav[i, u] = _fix_phase(sol[len(own) + u])
    return BeamformerSet(z_gue=z_gue, z_uav=z_uav)


def _leading_vec_batch(num_batch, den_batch):
    """Unit top generalized eigenvectors for a stack of (A, B) pairs.

    Same quotient maximizer as numerics.leading_gen_eigpair, computed by
    Cholesky-whitening every pair and running one batched Hermitian
    eigendecomposition, so a full beam grid costs a handful of LAPACK
    calls instead of one per link. Phase convention matches the
    per-link op.
    """
    chol = np.linalg.cholesky(den_batch)
    white = np.linalg.solve(chol, num_batch)
    white = np.linalg.solve(chol, white.conj().transpose(0, 2, 1))
    _, vecs = np.linalg.eigh(white)
    top = np.linalg.solve(chol.conj().transpose(0, 2, 1), vecs[..., -1:])
    top = top[..., 0]
    top /= np.linalg.norm(top, axis=1, keepdims=True)
    return np.array([_fix_phase(v) for v in top])


def eig_beamformers(scenario, channels, association, big_m, heights=None,
                    robust=None):
    """Generalized-eigenvector beam grid for the feasibility alternation.

    Ground users get the rank-1-quotient eigenvector, every (BS, UAV)
    pair the big-M quotient eigenvector under the current (possibly
    relaxed) association weights. The ground-user rows go through the
    covariance-solve closed form (the rank-1 quotient maximizer, and a
    downdate only rescales the solve) and the UAV grid through one
    whitened batch, so the directions equal the per-link ops at a
    fraction of the call overhead.
    """
    p = scenario.params
    cov, s_rx, w_rx = full_covariances(scenario, channels, association.matrix,
                                       heights, robust)
    h_gue, h_uav = _estimate_fading(channels)
    num_gue = scenario.gue_xy.shape[0]
    eye = np.eye(p.antennas_per_bs)
    desired_scale = p.power_scale_los * p.path_loss_ref_los
    z_gue = np.zeros((num_gue, p.antennas_per_bs), dtype=complex)
    z_uav = np.zeros((p.num_bs, p.num_uav, p.antennas_per_bs), dtype=complex)
    for i in range(p.num_bs):
        own = np.where(scenario.gue_serving == i)[0]
        if own.size:
            factor = scipy.linalg.cho_factor(cov[i], check_finite=False)
            sol = scipy.linalg.cho_solve(factor, h_gue[i, own].T,
                                         check_finite=False).T
            sol /= np.linalg.norm(sol, axis=1, keepdims=True)
            for row, k in enumerate(own):
                z_gue[k] = _fix_phase(sol[row])
    if p.num_uav:
        a_mat = np.asarray(association.matrix, dtype=float)
        outers = h_uav[:, :, :, None] * h_uav[:, :, None, :].conj()
        dens = cov[:, None] - w_rx[..., None, None] * outers
        nums = ((a_mat * desired_scale)[..., None, None] * outers
                + (big_m * (1.0 - a_mat))[..., None, None] * eye)
        n = p.antennas_per_bs
        flat = _leading_vec_batch(nums.reshape(-1, n, n), dens.reshape(-1, n, n))
        z_uav = flat.reshape(p.num_bs, p.num_uav, n)
    return BeamformerSet(z_gue=z_gue, z_uav=z_uav)


def baseline_beamformers(kind, scenario, channels, association, heights=None):
    """Matched-filter or partial zero-forcing beam grid.

    PZF nulls every intra-cell co-served channel plus every inter-cell
    associated UAV channel, then points at the desired channel inside
    the remaining subspace. When the nulling set would eat all degrees
    of freedom, the weakest-received interferers are dropped first; a
    desired channel that lies inside the nulled span falls back to the
    matched filter with a logged diagnostic.
    """
    if kind not in (MF, PZF):
        raise ValueError(f"unknown baseline kind {kind!r}")
    p = scenario.params
    h_gue, h_uav = _estimate_fading(channels)
    num_gue = scenario.gue_xy.shape[0]
    z_gue = np.zeros((num_gue, p.antennas_per_bs), dtype=complex)
    z_uav = np.zeros((p.num_bs, p.num_uav, p.antennas_per_bs), dtype=complex)

    def unit(vec):
        return _fix_phase(vec / np.linalg.norm(vec))

    if kind == MF:
        for k in range(num_gue):
            z_gue[k] = unit(h_gue[scenario.gue_serving[k], k])
        for i in range(p.num_bs):
            for u in range(p.num_uav):
                z_uav[i, u] = unit(h_uav[i, u])
        return BeamformerSet(z_gue=z_gue, z_uav=z_uav)

    if heights is None:
        heights = scenario.uav_heights
    s_rx = gue_rx_power(scenario)
    t_tab = path_power_table(scenario, heights)
    w_rx = np.einsum("gu,giu->iu",
                     np.asarray(association.matrix, dtype=float), t_tab)
    serving = association.serving()

    def pzf_vector(i, desired, null_channels, null_weights):
        if len(null_channels) > p.antennas_per_bs - 1:
            order = np.argsort(null_weights)[::-1]
            keep = order[:p.antennas_per_bs - 1]
            null_channels = [null_channels[j] for j in keep]
        if not null_channels:
            return unit(desired)
        basis, _ = np.linalg.qr(np.array(null_channels).T)
        residual = desired - basis @ (basis.conj().T @ desired)
        norm = np.linalg.norm(residual)
        if norm < 1e-12 * np.linalg.norm(desired):
            log.warning("PZF: desired channel at BS %d lies in the nulled "
                        "span; falling back to matched filter", i)
            return unit(desired)
        return unit(residual)

    def nulling_set(i, skip_kind, skip_index):
        chans, weights = [], []
        for k in np.where(scenario.gue_serving == i)[0]:
            if skip_kind == "gue" and k == skip_index:
                continue
            chans.append(h_gue[i, k])
            weights.append(s_rx[i, k] * np.linalg.norm(h_gue[i, k]) ** 2)
        for u in range(p.num_uav):
            if serving[u] < 0 or (skip_kind == "uav" and u == skip_index):
                continue
            chans.append(h_uav[i, u])
            weights.append(w_rx[i, u] * np.linalg.norm(h_uav[i, u]) ** 2)
        return chans, np.array(weights)

    for k in range(num_gue):
        i = scenario.gue_serving[k]
        chans, weights = nulling_set(i, "gue", k)
        z_gue[k] = pzf_vector(i, h_gue[i, k], chans, weights)
    for i in range(p.num_bs):
        for u in range(p.num_uav):
            chans, weights = nulling_set(i, "uav", u)
            z_uav[i, u] = pzf_vector(i, h_uav[i, u], chans, weights)
    return BeamformerSet(z_gue=z_gue, z_uav=z_uav)
