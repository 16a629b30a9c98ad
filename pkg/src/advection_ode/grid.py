"""Lat-lon grid geometry and finite-difference operators.

Fields are torch tensors laid out as ``(..., C, H, W)``: rows follow
latitude (the ``y`` axis) and columns follow longitude (the ``x`` axis).
Velocity fields carry two components per scalar channel, interleaved as
``[vx_1, vy_1, ..., vx_K, vy_K]``; gradient fields use the same layout.

Space is treated as a flat rectangle with unit cell spacing unless the grid
says otherwise. No spherical metric terms are applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch

from .errors import DomainError, IntegrationError, ShapeError

BOUNDARY_POLICIES = ("periodic", "clamp", "reflect")


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Raster geometry.

    ``lat_boundary`` is ``clamp`` (one-sided second-order differences at the
    first/last rows), ``reflect`` (mirror ghost rows) or ``periodic``.
    ``periodic`` latitude is only meant for synthetic test problems.
    Longitude is periodic for global grids; regional grids cut out of a
    global one use ``lon_boundary="clamp"``.
    """

    latitudes: np.ndarray
    longitudes: np.ndarray
    dx: float = 1.0
    dy: float = 1.0
    lat_boundary: str = "clamp"
    lon_boundary: str = "periodic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lat = np.asarray(self.latitudes, dtype=np.float64)
        lon = np.asarray(self.longitudes, dtype=np.float64)
        object.__setattr__(self, "latitudes", lat)
        object.__setattr__(self, "longitudes", lon)
        if lat.ndim != 1 or lon.ndim != 1:
            raise ShapeError("latitudes and longitudes must be 1-D")
        if lat.size < 2 or lon.size < 2:
            raise ShapeError(f"grid must be at least 2x2, got {lat.size}x{lon.size}")
        if np.any(np.abs(lat) >= 90.0):
            raise DomainError("latitudes must lie strictly inside (-90, 90)")
        d = np.diff(lat)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("latitudes must be strictly monotone")
        for name in ("lat_boundary", "lon_boundary"):
            if getattr(self, name) not in BOUNDARY_POLICIES:
                raise DomainError(f"{name} must be one of {BOUNDARY_POLICIES}")
        if self.dx <= 0 or self.dy <= 0:
            raise DomainError("dx and dy must be positive")
        if self.lon_boundary == "periodic":
            step = 360.0 / lon.size
            if not np.allclose(np.diff(lon), step, atol=1e-9):
                raise DomainError("periodic longitudes need uniform step 360/W")
            if lon.min() < 0 or lon.max() >= 360.0:
                raise DomainError("periodic longitudes must cover [0, 360)")

    @classmethod
    def regular(cls, height, width, lat_boundary="clamp", dx=1.0, dy=1.0):
        """Global equiangular grid with cell-centred latitudes.

        For 32x64 this is the 5.625 degree layout: latitudes -87.1875 ...
        87.1875, longitudes 0 ... 354.375.
        """
        dlat = 180.0 / height
        lat = -90.0 + dlat * (np.arange(height) + 0.5)
        lon = 360.0 / width * np.arange(width)
        return cls(lat, lon, dx=dx, dy=dy, lat_boundary=lat_boundary)

    @property
    def shape(self):
        return (self.latitudes.size, self.longitudes.size)

    @property
    def height(self):
        return self.latitudes.size

    @property
    def width(self):
        return self.longitudes.size

    @property
    def fully_periodic(self):
        return self.lat_boundary == "periodic" and self.lon_boundary == "periodic"

    def with_boundary(self, lat_boundary):
        return replace(self, lat_boundary=lat_boundary)

    def to_dict(self):
        return {
            "latitudes": self.latitudes.tolist(),
            "longitudes": self.longitudes.tolist(),
            "dx": self.dx,
            "dy": self.dy,
            "lat_boundary": self.lat_boundary,
            "lon_boundary": self.lon_boundary,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["latitudes"]),
            np.asarray(d["longitudes"]),
            dx=d.get("dx", 1.0),
            dy=d.get("dy", 1.0),
            lat_boundary=d.get("lat_boundary", "clamp"),
            lon_boundary=d.get("lon_boundary", "periodic"),
            meta=dict(d.get("meta", {})),
        )


def latitude_weights(grid_or_lats) -> np.ndarray:
    """alpha(h) = cos(lat_h) / mean(cos(lat)), so the weights average to one."""
    lats = grid_or_lats.latitudes if isinstance(grid_or_lats, GridSpec) else grid_or_lats
    lats = np.atleast_1d(np.asarray(lats, dtype=np.float64))
    if np.any(np.abs(lats) >= 90.0):
        raise DomainError("latitude weights undefined at or beyond the poles")
    c = np.cos(np.deg2rad(lats))
    return c / c.mean()


def _diff(f, axis, spacing, policy):
    """Centred second-order derivative of ``f`` along ``axis``."""
    n = f.shape[axis]
    if policy == "periodic":
        return (torch.roll(f, -1, axis) - torch.roll(f, 1, axis)) / (2.0 * spacing)

    def sl(start, stop=None):
        return f.narrow(axis, start, (stop if stop is not None else n) - start)

    if policy == "reflect":
        # mirror ghost cells f[-1] = f[1], f[n] = f[n-2]; edge derivative is zero
        padded = torch.cat([sl(1, 2), f, sl(n - 2, n - 1)], dim=axis)
        return (padded.narrow(axis, 2, n) - padded.narrow(axis, 0, n)) / (2.0 * spacing)

    # clamp: one-sided at the edges
    if n == 2:
        d = (sl(1, 2) - sl(0, 1)) / spacing
        return torch.cat([d, d], dim=axis)
    interior = (sl(2) - sl(0, n - 2)) / (2.0 * spacing)
    first = (-3.0 * sl(0, 1) + 4.0 * sl(1, 2) - sl(2, 3)) / (2.0 * spacing)
    last = (3.0 * sl(n - 1) - 4.0 * sl(n - 2, n - 1) + sl(n - 3, n - 2)) / (2.0 * spacing)
    return torch.cat([first, interior, last], dim=axis)


def ddx(f, grid: GridSpec):
    return _diff(f, -1, grid.dx, grid.lon_boundary)


def ddy(f, grid: GridSpec):
    return _diff(f, -2, grid.dy, grid.lat_boundary)


def _as_tensor(a):
    return a if isinstance(a, torch.Tensor) else torch.as_tensor(np.asarray(a))


def _check_grid(t, grid):
    if tuple(t.shape[-2:]) != grid.shape:
        raise ShapeError(f"field spatial shape {tuple(t.shape[-2:])} != grid {grid.shape}")


def spatial_gradient(u, grid: GridSpec):
    """(..., K, H, W) -> (..., 2K, H, W) as [du1/dx, du1/dy, du2/dx, ...]."""
    u = _as_tensor(u)
    _check_grid(u, grid)
    g = torch.stack([ddx(u, grid), ddy(u, grid)], dim=-3)
    return g.reshape(*u.shape[:-3], 2 * u.shape[-3], *u.shape[-2:])


def _split_components(v):
    if v.dim() < 3 or v.shape[-3] % 2:
        raise ShapeError(f"velocity needs an even channel count, got shape {tuple(v.shape)}")
    k = v.shape[-3] // 2
    v = v.reshape(*v.shape[:-3], k, 2, *v.shape[-2:])
    return v[..., 0, :, :], v[..., 1, :, :]


def divergence(v, grid: GridSpec):
    """(..., 2K, H, W) -> (..., K, H, W)."""
    v = _as_tensor(v)
    _check_grid(v, grid)
    vx, vy = _split_components(v)
    return ddx(vx, grid) + ddy(vy, grid)


def first_nonfinite(t):
    """Index tuple of the first non-finite entry, or None."""
    bad = ~torch.isfinite(t)
    if not bool(bad.any()):
        return None
    return tuple(int(i) for i in torch.nonzero(bad)[0])


def advection_tendency(u, v, grid: GridSpec, check_finite=True):
    """Flux-form advection tendency -div(u * v), channel by channel."""
    u, v = _as_tensor(u), _as_tensor(v)
    _check_grid(u, grid)
    if v.shape[-3] != 2 * u.shape[-3]:
        raise ShapeError(f"velocity has {v.shape[-3]} channels, expected {2 * u.shape[-3]}")
    if check_finite:
        for name, t in (("u", u), ("v", v)):
            idx = first_nonfinite(t)
            if idx is not None:
                raise IntegrationError(f"non-finite {name} at index {idx} (..., channel, row, col)", index=idx)
    vx, vy = _split_components(v)
    return -(ddx(u * vx, grid) + ddy(u * vy, grid))


def expanded_advection_tendency(u, v, grid: GridSpec):
    """-(v . grad u) - u div v; cross-check for the flux form."""
    u, v = _as_tensor(u), _as_tensor(v)
    vx, vy = _split_components(v)
    return -(vx * ddx(u, grid) + vy * ddy(u, grid)) - u * divergence(v, grid)
