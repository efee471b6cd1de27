"""Free-space channel gains, link rates, and worst-case disk extrema.

Everything here is closed-form numpy on raw arrays; no solver involvement.
These functions double as the independent oracles the certifiers use, so they
must stay decoupled from the optimization modules.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "channel_gain",
    "link_rate",
    "worst_case_gain",
    "worst_case_interference",
    "average_secrecy_rate",
]


def channel_gain(q_xy, node_xy, altitude_m: float, beta0: float):
    """Line-of-sight gain beta0 / (||q - node||^2 + H^2); broadcasts over leading dims."""
    q = np.asarray(q_xy, dtype=float)
    node = np.asarray(node_xy, dtype=float)
    d2 = np.sum((q - node) ** 2, axis=-1)
    return beta0 / (d2 + altitude_m**2)


def link_rate(power_w, gain, noise_w):
    """Spectral efficiency log2(1 + P * g / sigma^2) in b/s/Hz."""
    return np.log2(1.0 + np.asarray(power_w, dtype=float) * np.asarray(gain, dtype=float) / noise_w)


def worst_case_gain(q_xy, center_xy, radius_m: float, altitude_m: float, beta0: float):
    """Largest gain over all node positions within radius_m of center_xy.

    The disk point maximizing the gain is the one nearest the UAV's ground
    projection, so the extremal horizontal distance is max(||q - center|| -
    radius, 0).  Broadcasts over leading dims of q_xy.
    """
    if radius_m < 0:
        raise ValueError("radius_m must be nonnegative")
    q = np.asarray(q_xy, dtype=float)
    center = np.asarray(center_xy, dtype=float)
    d = np.linalg.norm(q - center, axis=-1)
    d_wc = np.maximum(d - radius_m, 0.0)
    return beta0 / (d_wc**2 + altitude_m**2)


def worst_case_interference(q_xy, power_w, center_xy, radius_m: float, altitude_m: float, beta0: float):
    """Largest received interference power (W) over the node's error disk."""
    return np.asarray(power_w, dtype=float) * worst_case_gain(
        q_xy, center_xy, radius_m, altitude_m, beta0
    )


def average_secrecy_rate(
    waypoints_m,
    powers_w,
    eve_positions_m,
    su_xy_m,
    altitude_m: float,
    beta0: float,
    noise_su_w: float,
    noise_eve_w,
) -> float:
    """Average over slots of [R_su - max_k R_eve_k]^+ for given true Eve positions.

    waypoints_m: (N, 2); powers_w: (N,); eve_positions_m: (K, 2) fixed true
    positions, or (N, K, 2) to evaluate per-slot positions (the worst-case
    certifier moves each Eve adversarially per slot).
    """
    q = np.atleast_2d(np.asarray(waypoints_m, dtype=float))
    p = np.asarray(powers_w, dtype=float)
    eves = np.asarray(eve_positions_m, dtype=float)
    noise_eve = np.asarray(noise_eve_w, dtype=float)

    g_su = channel_gain(q, su_xy_m, altitude_m, beta0)
    r_su = link_rate(p, g_su, noise_su_w)

    if eves.ndim == 2:
        eves = np.broadcast_to(eves, (q.shape[0],) + eves.shape)
    g_eve = channel_gain(q[:, None, :], eves, altitude_m, beta0)  # (N, K)
    r_eve = np.log2(1.0 + p[:, None] * g_eve / noise_eve[None, :])
    secrecy = np.maximum(r_su - r_eve.max(axis=1), 0.0)
    return float(secrecy.mean())
