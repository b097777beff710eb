"""Channel model: large-scale path gains, Nakagami-m fading, imperfect CSI.

Air-to-ground (UAV) links are line-of-sight with shape m_L; terrestrial
links are non-line-of-sight with shape m_N. Imperfect CSI follows the
additive model actual = estimate + R^(1/2) w with w i.i.d. complex
normal and R the per-BS receive correlation with entries rho^|m-n|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOS = "los"
NLOS = "nlos"


def path_loss_gain(horizontal_dist, ue_height, link_kind, params):
    """Large-scale power gain A_v * d^(-alpha_v), d the 3D BS-user distance.

    `horizontal_dist` and `ue_height` may be arrays (broadcast together);
    ground users pass ue_height 0. Raises ValueError when any 3D distance
    is zero.
    """
    r = np.asarray(horizontal_dist, dtype=float)
    h = np.asarray(ue_height, dtype=float)
    if link_kind == LOS:
        ref, exponent = params.path_loss_ref_los, params.path_loss_exp_los
    elif link_kind == NLOS:
        ref, exponent = params.path_loss_ref_nlos, params.path_loss_exp_nlos
    else:
        raise ValueError(f"unknown link kind {link_kind!r}")
    d2 = r ** 2 + (h - params.bs_height) ** 2
    if np.any(d2 <= 0):
        raise ValueError("BS and user coincide; path gain undefined")
    return ref * d2 ** (-exponent / 2.0)


def sample_fading_vector(rng, num_antennas, shape_m):
    """One Nakagami-m fading vector: i.i.d. entries, unit mean power.

    Entry power is Gamma(m, rate m), drawn as a sum of m exponentials
    (exact for the integer shapes used here); phase is uniform.
    """
    if shape_m < 1 or shape_m != int(shape_m):
        raise ValueError(f"Nakagami shape must be a positive integer, got {shape_m}")
    power = rng.exponential(scale=1.0 / shape_m,
                            size=(int(shape_m), num_antennas)).sum(axis=0)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=num_antennas)
    return np.sqrt(power) * np.exp(1j * phase)


def _sample_fading_block(rng, shape, num_antennas, shape_m):
    """Batch of fading vectors, shape + (num_antennas,)."""
    full = shape + (num_antennas,)
    power = rng.exponential(scale=1.0 / shape_m,
                            size=(int(shape_m),) + full).sum(axis=0)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=full)
    return np.sqrt(power) * np.exp(1j * phase)


def correlation_matrix(rho, num_antennas):
    """Receive correlation with entries rho^|m-n| (Toeplitz, Hermitian PSD)."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"correlation coefficient must lie in [0, 1], got {rho}")
    idx = np.arange(num_antennas)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def matrix_sqrt_psd(mat):
    """Principal square root of a Hermitian PSD matrix (eigendecomposition)."""
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


@dataclass(eq=False)
class ChannelSet:
    """Fading vectors and large-scale gains for every BS-user link.

    Ground-user links (NLoS) live in h_gue/gain_gue, UAV links (LoS) in
    h_uav/gain_uav; gain_uav reflects the scenario's heights at
    realization time, and uav_gains() recomputes for other heights.
    Immutable once built.
    """

    scenario: object
    h_gue: np.ndarray    # (G, G*K, N) complex
    h_uav: np.ndarray    # (G, U, N) complex
    gain_gue: np.ndarray  # (G, G*K)
    gain_uav: np.ndarray  # (G, U)

    def uav_gains(self, heights):
        scen = self.scenario
        return path_loss_gain(np.sqrt(scen.r2_bs_uav),
                              np.asarray(heights)[None, :], LOS, scen.params)


@dataclass(eq=False)
class ImperfectChannelSet:
    """Estimated channels plus the realized actual channels.

    The estimate carries the Nakagami draw; the actual channel adds a
    correlated complex-normal error with per-entry variance error_var.
    Large-scale gains are those of the underlying estimate set.
    """

    estimate: ChannelSet
    actual_gue: np.ndarray
    actual_uav: np.ndarray
    error_var: float
    rho: float
    corr: np.ndarray       # (N, N)
    corr_sqrt: np.ndarray  # (N, N)

    @property
    def scenario(self):
        return self.estimate.scenario

    @property
    def gain_gue(self):
        return self.estimate.gain_gue

    @property
    def gain_uav(self):
        return self.estimate.gain_uav

    def uav_gains(self, heights):
        return self.estimate.uav_gains(heights)


def realize_channels(scenario, seed):
    """Draw one fading realization for every link. Deterministic per seed."""
    p = scenario.params
    rng = np.random.default_rng(seed)
    g, n = p.num_bs, p.antennas_per_bs
    num_gue, num_uav = scenario.gue_xy.shape[0], p.num_uav
    h_gue = _sample_fading_block(rng, (g, num_gue), n, p.nakagami_shape_nlos)
    h_uav = _sample_fading_block(rng, (g, num_uav), n, p.nakagami_shape_los)
    gain_gue = path_loss_gain(np.sqrt(scenario.r2_bs_gue), 0.0, NLOS, p)
    gain_uav = path_loss_gain(np.sqrt(scenario.r2_bs_uav),
                              scenario.uav_heights[None, :], LOS, p)
    return ChannelSet(scenario, h_gue, h_uav, gain_gue, gain_uav)


def corrupt_channels(channel_set, error_var, rho, seed):
    """Imperfect-CSI view: treat the realization as the estimate and add
    a fresh correlated error. error_var = 0 returns the estimate intact."""
    if error_var < 0:
        raise ValueError("channel error variance must be nonnegative")
    n = channel_set.scenario.params.antennas_per_bs
    corr = correlation_matrix(rho, n)
    corr_sqrt = matrix_sqrt_psd(corr)
    if error_var == 0.0:
        return ImperfectChannelSet(channel_set, channel_set.h_gue,
                                   channel_set.h_uav, 0.0, rho, corr, corr_sqrt)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(error_var / 2.0)

    def draw(shape):
        w = scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        return np.einsum("mn,...n->...m", corr_sqrt, w)

    actual_gue = channel_set.h_gue + draw(channel_set.h_gue.shape)
    actual_uav = channel_set.h_uav + draw(channel_set.h_uav.shape)
    return ImperfectChannelSet(channel_set, actual_gue, actual_uav,
                               float(error_var), float(rho), corr, corr_sqrt)


def dump_channels(channel_set, stream):
    """Write per-link fading vectors as CSV rows of re/im pairs.

    Columns: bs, user_kind, user_index, antenna, re, im, gain. Meant for
    building small frozen test fixtures, not for bulk storage.
    """
    stream.write("bs,user_kind,user_index,antenna,re,im,gain\n")
    blocks = (("gue", channel_set.h_gue, channel_set.gain_gue),
              ("uav", channel_set.h_uav, channel_set.gain_uav))
    for kind, h, gain in blocks:
        g, count, n = h.shape
        for i in range(g):
            for j in range(count):
                for a in range(n):
                    z = h[i, j, a]
                    stream.write(f"{i},{kind},{j},{a},{z.real!r},{z.imag!r},"
                                 f"{gain[i, j]!r}\n")
