"""Spatial, temporal and spatiotemporal encodings.

Time is measured in days: the daily pair cycles with period 1 and the
seasonal pair with period 365. An hourly lead index ``n`` maps to
``t = t0_days + n / 24``.
"""

import math

import numpy as np
import torch

N_SPATIAL = 6
N_TEMPORAL = 4
N_EMBEDDING = N_SPATIAL + N_TEMPORAL + N_SPATIAL * N_TEMPORAL  # 34


def spatial_encoding(grid, dtype=torch.float64):
    """(6, H, W): [sin h, cos h, sin w, cos w, sin h cos w, sin h sin w]."""
    h = np.deg2rad(grid.latitudes)[:, None] * np.ones((1, grid.width))
    w = np.deg2rad(grid.longitudes)[None, :] * np.ones((grid.height, 1))
    enc = np.stack([
        np.sin(h), np.cos(h), np.sin(w), np.cos(w),
        np.sin(h) * np.cos(w), np.sin(h) * np.sin(w),
    ])
    return torch.as_tensor(enc, dtype=dtype)


def temporal_encoding(t_days, dtype=torch.float64):
    """(..., 4): daily and seasonal sin/cos pairs of ``t_days``."""
    t = torch.as_tensor(t_days, dtype=dtype)
    daily = 2.0 * math.pi * t
    seasonal = daily / 365.0
    return torch.stack([torch.sin(daily), torch.cos(daily),
                        torch.sin(seasonal), torch.cos(seasonal)], dim=-1)


def spatiotemporal_embedding(grid, t_days, dtype=torch.float64, spatial=None):
    """(..., 34, H, W) = [phi_s, phi_t, phi_s (x) phi_t].

    The product block is the flattened outer product, channel ``i * 4 + j``
    holding ``phi_s[i] * phi_t[j]``. ``t_days`` may be a scalar or a batch of
    times; ``spatial`` lets callers reuse a cached spatial encoding.
    """
    phi_s = spatial_encoding(grid, dtype) if spatial is None else spatial.to(dtype)
    phi_t = temporal_encoding(t_days, dtype)
    batch = phi_t.shape[:-1]
    H, W = grid.shape
    s = phi_s.expand(*batch, N_SPATIAL, H, W)
    tt = phi_t[..., :, None, None].expand(*batch, N_TEMPORAL, H, W)
    prod = (phi_s[:, None] * phi_t[..., None, :, None, None])  # (..., 6, 4, H, W)
    prod = prod.reshape(*batch, N_SPATIAL * N_TEMPORAL, H, W)
    return torch.cat([s, tt, prod], dim=-3)
