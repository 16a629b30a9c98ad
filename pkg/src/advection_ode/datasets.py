"""Trajectory datasets: synthetic advection problems with closed-form
solutions, WeatherBench ERA5 ingestion, normalization and regional cut-outs.

All arrays here are numpy float64. A dataset holds, per sample, the state at
``t0`` (``inputs``, K x H x W), the hourly targets at ``t0 + 1 .. t0 + N``
(``targets``, N x K x H x W) and optionally a history state at
``t0 - history_dt`` used by the finite-difference velocity inputs.
"""

from __future__ import annotations

import glob
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DataError, IngestionError, RegionError
from .grid import GridSpec

KINDS = ("constant", "surface", "atmospheric")

ERA5_LEVELS = (50, 250, 500, 600, 700, 850, 925)
ERA5_ATMOSPHERIC = ("z", "u", "v", "t", "q", "r")
ERA5_SURFACE = ("t2m", "u10", "v10")
ERA5_CONSTANT = ("lsm", "orography", "lat2d")
TARGET_VARIABLES = ("z_500", "t_850", "t2m", "u10", "v10")

SPLIT_YEARS = {
    "train": ("1979-01-01T00", "2015-12-31T23"),
    "val": ("2016-01-01T00", "2016-12-31T23"),
    "test": ("2017-01-01T00", "2018-12-31T23"),
}

EPOCH = np.datetime64("1970-01-01T00", "h")


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    level: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown variable kind {self.kind!r}", path=self.name)
        if (self.kind == "atmospheric") != (self.level is not None):
            raise ConfigError("pressure level required for atmospheric variables only", path=self.name)

    @property
    def key(self):
        return self.name if self.level is None else f"{self.name}_{self.level}"


class VariableCatalog:
    """Ordered channel list. Channel keys are ``name`` or ``name_level``."""

    def __init__(self, variables):
        self.variables = tuple(variables)
        keys = [v.key for v in self.variables]
        if len(set(keys)) != len(keys):
            raise ConfigError(f"duplicate channels in catalog: {keys}")

    @classmethod
    def era5(cls, atmospheric=ERA5_ATMOSPHERIC, levels=ERA5_LEVELS,
             surface=ERA5_SURFACE, constant=ERA5_CONSTANT):
        vs = [Variable(n, "constant") for n in constant]
        vs += [Variable(n, "surface") for n in surface]
        vs += [Variable(n, "atmospheric", lev) for n in atmospheric for lev in levels]
        return cls(vs)

    @classmethod
    def synthetic(cls, k):
        return cls([Variable(f"q{i}", "surface") for i in range(k)])

    def __len__(self):
        return len(self.variables)

    def __iter__(self):
        return iter(self.variables)

    @property
    def keys(self):
        return [v.key for v in self.variables]

    def index(self, key):
        return self.keys.index(key)

    @property
    def constant_mask(self):
        return np.array([v.kind == "constant" for v in self.variables])

    def to_list(self):
        return [asdict(v) for v in self.variables]

    @classmethod
    def from_list(cls, items):
        return cls([Variable(**d) for d in items])

    def __eq__(self, other):
        return isinstance(other, VariableCatalog) and self.variables == other.variables


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float),
                   np.asarray(d["constant"], bool))

    def _bcast(self, a, like):
        # channel axis is -3
        a = np.asarray(a)[:, None, None]
        try:
            import torch
            if isinstance(like, torch.Tensor):
                return torch.as_tensor(a, dtype=like.dtype, device=like.device)
        except ImportError:  # pragma: no cover
            pass
        return a


def fit_norm_stats(fields, catalog=None):
    """Per-channel mean / population std over every axis except the channel one.

    ``fields`` is (..., K, H, W) or a TrajectoryDataset (its inputs are used).
    Constant channels are flagged and left unscaled (mean 0, std 1).
    """
    if isinstance(fields, TrajectoryDataset):
        catalog = catalog or fields.catalog
        fields = fields.inputs
    x = np.asarray(fields, dtype=np.float64)
    if x.ndim < 3 or x.size == 0:
        raise DataError("cannot fit normalization statistics on an empty split")
    k = x.shape[-3]
    flat = np.moveaxis(x, -3, 0).reshape(k, -1)
    mean = flat.mean(axis=1)
    std = flat.std(axis=1)
    const = catalog.constant_mask if catalog is not None else np.zeros(k, bool)
    if len(const) != k:
        raise DataError(f"catalog has {len(const)} channels, data has {k}")
    bad = (~const) & (std <= 0)
    if bad.any():
        names = [catalog.keys[i] for i in np.flatnonzero(bad)] if catalog else list(np.flatnonzero(bad))
        raise DataError(f"zero variance in non-constant channel(s) {names}")
    mean = np.where(const, 0.0, mean)
    std = np.where(const, 1.0, std)
    return NormStats(mean, std, const)


def normalize(u, stats: NormStats):
    return (u - stats._bcast(stats.mean, u)) / stats._bcast(stats.std, u)


def denormalize(u, stats: NormStats):
    return u * stats._bcast(stats.std, u) + stats._bcast(stats.mean, u)


# ---------------------------------------------------------------------------
# samples and containers
# ---------------------------------------------------------------------------

@dataclass
class TrajectorySample:
    u0: np.ndarray
    targets: np.ndarray
    t0: float  # hours since 1970-01-01
    history: np.ndarray | None = None

    @property
    def lead(self):
        return self.targets.shape[0]


@dataclass
class TrajectoryDataset:
    inputs: np.ndarray          # (S, K, H, W)
    targets: np.ndarray         # (S, N, K, H, W)
    t0: np.ndarray              # (S,) hours
    grid: GridSpec
    catalog: VariableCatalog
    history: np.ndarray | None = None  # (S, K, H, W) at t0 - history_dt
    history_dt: float | None = None
    stats: NormStats | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = len(self.t0)
        if self.inputs.shape[0] != s or self.targets.shape[0] != s:
            raise DataError("inputs, targets and t0 disagree on sample count")
        if s and self.targets.shape[1] < 1:
            raise DataError("lead count N must be >= 1")
        for name in ("inputs", "targets"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"non-finite values in {name}")

    def __len__(self):
        return len(self.t0)

    def __getitem__(self, i):
        hist = None if self.history is None else self.history[i]
        return TrajectorySample(self.inputs[i], self.targets[i], float(self.t0[i]), hist)

    @property
    def lead(self):
        return self.targets.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return TrajectoryDataset(
            self.inputs[idx], self.targets[idx], self.t0[idx], self.grid, self.catalog,
            None if self.history is None else self.history[idx], self.history_dt,
            self.stats, dict(self.meta))

    def region(self, region: "RegionSpec", patch=2):
        sub = lambda a: None if a is None else extract_region(a, region, self.grid, patch)[0]
        _, g = extract_region(self.inputs[:1], region, self.grid, patch)
        return TrajectoryDataset(sub(self.inputs), sub(self.targets), self.t0, g, self.catalog,
                                 sub(self.history), self.history_dt, self.stats, dict(self.meta))

    # persistence: one NetCDF file per split
    def save(self, path):
        import xarray as xr

        meta = {
            "grid": self.grid.to_dict(),
            "catalog": self.catalog.to_list(),
            "stats": None if self.stats is None else self.stats.to_dict(),
            "history_dt": self.history_dt,
            "meta": self.meta,
        }
        data = {
            "inputs": (("sample", "channel", "lat", "lon"), self.inputs),
            "targets": (("sample", "lead", "channel", "lat", "lon"), self.targets),
            "t0": (("sample",), np.asarray(self.t0, dtype=np.float64)),
        }
        if self.history is not None:
            data["history"] = (("sample", "channel", "lat", "lon"), self.history)
        ds = xr.Dataset(data, attrs={"metadata": json.dumps(meta, sort_keys=True)})
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        ds.to_netcdf(path, engine="netcdf4")

    @classmethod
    def load(cls, path):
        import xarray as xr

        if not os.path.exists(path):
            raise DataError(f"dataset file not found: {path}")
        with xr.open_dataset(path, engine="netcdf4") as ds:
            meta = json.loads(ds.attrs["metadata"])
            arrays = {k: ds[k].values.astype(np.float64) for k in ds.data_vars}
        return cls(
            arrays["inputs"], arrays["targets"], arrays["t0"],
            GridSpec.from_dict(meta["grid"]), VariableCatalog.from_list(meta["catalog"]),
            arrays.get("history"), meta["history_dt"],
            None if meta["stats"] is None else NormStats.from_dict(meta["stats"]),
            meta["meta"])


def concat_datasets(parts):
    parts = [p for p in parts if len(p)]
    if not parts:
        raise DataError("nothing to concatenate")
    first = parts[0]
    hist = None if first.history is None else np.concatenate([p.history for p in parts])
    return TrajectoryDataset(
        np.concatenate([p.inputs for p in parts]), np.concatenate([p.targets for p in parts]),
        np.concatenate([p.t0 for p in parts]), first.grid, first.catalog, hist,
        first.history_dt, first.stats, dict(first.meta))


# ---------------------------------------------------------------------------
# synthetic advection problems
# ---------------------------------------------------------------------------

VELOCITY_FAMILIES = ("uniform", "rotational")
SOURCE_FAMILIES = ("none", "periodic")


@dataclass
class SynthConfig:
    """Synthetic problem on a fully periodic grid with unit cell spacing.

    ``uniform`` flow moves channel k at (speed_x[k], speed_y[k]) cells/hour.
    ``rotational`` flow is the divergence-free zonal shear
    ``vx = shear[k] * sin(2 pi y / H)``, ``vy = 0``.
    The ``periodic`` source is ``s = cos(2 pi t / period) * g_k(y)`` with
    ``g_k(y) = amp[k] * cos(2 pi m y / H + phase[k])`` and ``t`` absolute hours.
    """

    height: int = 16
    width: int = 32
    channels: int = 2
    velocity: str = "uniform"
    speed_x: tuple = (0.5, -0.25)
    speed_y: tuple = (0.0, 0.0)
    shear: tuple = (0.5, 0.5)
    source: str = "periodic"
    source_amplitude: tuple = (0.3, 0.3)
    source_phase: tuple = (0.0, 1.0)
    source_wavenumber: int = 1
    source_period: float = 24.0
    n_bumps: int = 3
    bump_sigma: float = 2.5
    bump_amplitude: float = 1.0
    background: tuple = (2.0, -1.0)
    lead: int = 6
    history_dt: float = 1.0
    n_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.velocity not in VELOCITY_FAMILIES:
            raise ConfigError(f"unknown velocity family {self.velocity!r}", "velocity")
        if self.source not in SOURCE_FAMILIES:
            raise ConfigError(f"unknown source family {self.source!r}", "source")
        if self.lead < 1:
            raise ConfigError("lead must be >= 1", "lead")
        if self.n_samples < 0:
            raise ConfigError("n_samples must be >= 0", "n_samples")
        if self.height < 2 or self.width < 2:
            raise ConfigError("grid must be at least 2x2", "height")
        for name in ("speed_x", "speed_y", "shear", "source_amplitude", "source_phase", "background"):
            setattr(self, name, _per_channel(getattr(self, name), self.channels, name))

    def grid(self):
        return GridSpec.regular(self.height, self.width, lat_boundary="periodic")


def _per_channel(value, k, name):
    vals = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if vals.size == 1:
        vals = np.repeat(vals, k)
    if vals.size < k:
        raise ConfigError(f"needs {k} per-channel values, got {vals.size}", name)
    return tuple(float(v) for v in vals[:k])


@dataclass
class BumpField:
    """Sum of periodic Gaussian bumps, evaluable at arbitrary coordinates."""

    centers: np.ndarray     # (n, 2) as (x, y) in cells
    amplitudes: np.ndarray  # (n,)
    sigma: float
    width: int
    height: int

    def __call__(self, x, y):
        out = np.zeros(np.broadcast(x, y).shape)
        for (cx, cy), a in zip(self.centers, self.amplitudes):
            gx = sum(np.exp(-((x - cx - i * self.width) ** 2) / (2 * self.sigma ** 2)) for i in range(-2, 3))
            gy = sum(np.exp(-((y - cy - j * self.height) ** 2) / (2 * self.sigma ** 2)) for j in range(-2, 3))
            out = out + a * gx * gy
        return out


def velocity_field(cfg: SynthConfig, k, y):
    """(vx, vy) of channel k at row coordinate(s) y, cells/hour."""
    if cfg.velocity == "uniform":
        return cfg.speed_x[k] + 0.0 * y, cfg.speed_y[k] + 0.0 * y
    return cfg.shear[k] * np.sin(2 * np.pi * y / cfg.height), 0.0 * y


def velocity_array(cfg: SynthConfig):
    """True velocity as a (2K, H, W) array in the interleaved layout."""
    y = np.arange(cfg.height, dtype=float)[:, None] * np.ones((1, cfg.width))
    out = []
    for k in range(cfg.channels):
        vx, vy = velocity_field(cfg, k, y)
        out += [vx, vy]
    return np.stack(out)


def source_field(cfg: SynthConfig, k, y, t):
    """Instantaneous source s_k(y, t) (t in absolute hours)."""
    if cfg.source == "none":
        return 0.0 * y
    kappa = 2 * np.pi * cfg.source_wavenumber / cfg.height
    omega = 2 * np.pi / cfg.source_period
    return np.cos(omega * t) * cfg.source_amplitude[k] * np.cos(kappa * y + cfg.source_phase[k])


def _integral_cos(alpha, gamma, t_a, t_b):
    """Integral of cos(alpha + gamma * tau) for tau from t_a to t_b."""
    if abs(gamma) < 1e-14:
        return (t_b - t_a) * np.cos(alpha)
    return (np.sin(alpha + gamma * t_b) - np.sin(alpha + gamma * t_a)) / gamma


def accumulated_source(cfg: SynthConfig, k, x, y, t0, t):
    """Source accumulated along characteristics from t0 to t.

    Integral of cos(omega tau) g(y - vy (t - tau)) d tau. Only meridional
    motion transports the y-dependent pattern; zonal motion leaves it fixed.
    """
    if cfg.source == "none":
        return np.zeros(np.broadcast(x, y).shape)
    kappa = 2 * np.pi * cfg.source_wavenumber / cfg.height
    omega = 2 * np.pi / cfg.source_period
    vy = cfg.speed_y[k] if cfg.velocity == "uniform" else 0.0
    alpha = kappa * (y - vy * t) + cfg.source_phase[k]
    beta = kappa * vy
    total = 0.5 * (_integral_cos(alpha, beta + omega, t0, t) + _integral_cos(alpha, beta - omega, t0, t))
    return cfg.source_amplitude[k] * total + 0.0 * x


def analytic_solution(cfg: SynthConfig, bumps, t0, t):
    """Exact field (K, H, W) at absolute hour ``t`` given bumps placed at ``t0``."""
    y, x = np.meshgrid(np.arange(cfg.height, dtype=float), np.arange(cfg.width, dtype=float), indexing="ij")
    out = np.empty((cfg.channels, cfg.height, cfg.width))
    for k in range(cfg.channels):
        vx, vy = velocity_field(cfg, k, y)
        dt = t - t0
        out[k] = (cfg.background[k] + bumps[k](x - vx * dt, y - vy * dt)
                  + accumulated_source(cfg, k, x, y, t0, t))
    return out


def _random_bumps(cfg: SynthConfig, rng):
    out = []
    for _ in range(cfg.channels):
        centers = np.column_stack([rng.uniform(0, cfg.width, cfg.n_bumps),
                                   rng.uniform(0, cfg.height, cfg.n_bumps)])
        amps = cfg.bump_amplitude * rng.uniform(0.5, 1.5, cfg.n_bumps)
        out.append(BumpField(centers, amps, cfg.bump_sigma, cfg.width, cfg.height))
    return out


def make_synthetic_dataset(cfg: SynthConfig):
    """Draw ``n_samples`` trajectories; targets are the closed-form solution."""
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid()
    K, H, W, N = cfg.channels, cfg.height, cfg.width, cfg.lead
    inputs = np.empty((cfg.n_samples, K, H, W))
    targets = np.empty((cfg.n_samples, N, K, H, W))
    history = np.empty((cfg.n_samples, K, H, W))
    t0 = rng.integers(0, 365 * 24, size=cfg.n_samples).astype(np.float64)
    for i in range(cfg.n_samples):
        bumps = _random_bumps(cfg, rng)
        inputs[i] = analytic_solution(cfg, bumps, t0[i], t0[i])
        for n in range(1, N + 1):
            targets[i, n - 1] = analytic_solution(cfg, bumps, t0[i], t0[i] + n)
        history[i] = analytic_solution(cfg, bumps, t0[i], t0[i] - cfg.history_dt)
    meta = {"kind": "synthetic", "seed": cfg.seed, "synth": _jsonable(asdict(cfg))}
    return TrajectoryDataset(inputs, targets, t0, grid, VariableCatalog.synthetic(K),
                             history, cfg.history_dt, None, meta)


def _jsonable(d):
    return json.loads(json.dumps(d, default=lambda o: list(o) if isinstance(o, tuple) else str(o)))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionSpec:
    name: str
    lat_range: tuple
    lon_range: tuple
    expected_shape: tuple | None = None


REGIONS = {
    "north_america": RegionSpec("north_america", (15, 65), (220, 300), (8, 14)),
    "south_america": RegionSpec("south_america", (-55, 20), (270, 330), (14, 10)),
    "australia": RegionSpec("australia", (-50, 10), (100, 180), (10, 14)),
    "global": RegionSpec("global", (-90, 90), (0, 360), (32, 64)),
}


# the bounding-box shapes above refer to this 5.625 degree grid
REFERENCE_GRID = (32, 64)


def get_region(name):
    key = name.lower().replace("-", "_").replace(" ", "_")
    if key not in REGIONS:
        raise ConfigError(f"unknown region {name!r}; choose from {sorted(REGIONS)}", "region")
    return REGIONS[key]


def _select(coords, lo, hi, patch):
    # whole patch blocks, aligned to the parent grid, whose cell centres all
    # fall inside [lo, hi)
    inside = (coords >= lo) & (coords < hi)
    keep = []
    for start in range(0, len(coords) - patch + 1, patch):
        if inside[start:start + patch].all():
            keep.extend(range(start, start + patch))
    return np.asarray(keep, dtype=int)


def extract_region(field, region: RegionSpec, grid: GridSpec, patch=2):
    """Cut a bounding box out of ``field`` (..., H, W).

    Cells are kept when their centres lie in ``[lat_lo, lat_hi) x
    [lon_lo, lon_hi)``, in whole ``patch`` x ``patch`` blocks aligned with
    the parent grid, so the result stays divisible by the patch size.
    """
    rows = _select(grid.latitudes, *region.lat_range, patch)
    cols = _select(np.mod(grid.longitudes, 360.0), *region.lon_range, patch)
    if rows.size == 0 or cols.size == 0:
        raise RegionError(f"region {region.name!r} selects no cells on this grid")
    shape = (rows.size, cols.size)
    if (region.expected_shape is not None and grid.shape == REFERENCE_GRID
            and tuple(region.expected_shape) != shape):
        raise RegionError(f"region {region.name!r} gave {shape}, expected {tuple(region.expected_shape)}")
    sub = field[..., rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
    full_lon = cols.size == grid.width and grid.lon_boundary == "periodic"
    full_lat = rows.size == grid.height
    meta = dict(grid.meta)
    meta.update({"region": region.name, "selection": f"half-open [lo, hi), {patch}x{patch} aligned blocks",
                 "parent_rows": [int(rows[0]), int(rows[-1]) + 1],
                 "parent_cols": [int(cols[0]), int(cols[-1]) + 1]})
    sub_grid = GridSpec(
        grid.latitudes[rows], grid.longitudes[cols], dx=grid.dx, dy=grid.dy,
        lat_boundary=grid.lat_boundary if full_lat else ("clamp" if grid.lat_boundary == "periodic" else grid.lat_boundary),
        lon_boundary="periodic" if full_lon else "clamp", meta=meta)
    return sub, sub_grid


# ---------------------------------------------------------------------------
# ERA5 (WeatherBench 5.625 deg NetCDF)
# ---------------------------------------------------------------------------

def _hours(times):
    return ((np.asarray(times).astype("datetime64[h]") - EPOCH) / np.timedelta64(1, "h")).astype(np.float64)


def _index_files(path):
    import xarray as xr

    files = sorted(glob.glob(os.path.join(path, "**", "*.nc"), recursive=True)) if os.path.isdir(path) else [path]
    if not files:
        raise IngestionError(f"no NetCDF files under {path}")
    by_var = {}
    for f in files:
        with xr.open_dataset(f, engine="netcdf4") as ds:
            for name in ds.data_vars:
                by_var.setdefault(name, []).append(f)
    return by_var


def _read_variable(files, var, time_range):
    import xarray as xr

    pieces = []
    for f in files:
        with xr.open_dataset(f, engine="netcdf4") as ds:
            da = ds[var]
            if "time" in da.dims:
                da = da.sel(time=slice(*time_range)) if time_range else da
                if da.sizes["time"] == 0:
                    continue
            pieces.append(da.load())
    if not pieces:
        raise IngestionError("no data in requested time range", variable=var)
    if "time" in pieces[0].dims:
        da = xr.concat(pieces, dim="time").sortby("time")
    else:
        da = pieces[0]
    return da


def load_era5_subset(path, catalog: VariableCatalog, time_range=None, lead=1,
                     history_dt=None, stride=1):
    """Window hourly WeatherBench NetCDF files into trajectory samples.

    ``time_range`` is a split name (train/val/test) or an inclusive
    ``(start, end)`` pair of datetime strings. Channels follow ``catalog``
    order; atmospheric entries select their pressure level from a ``level``
    coordinate. Constant fields (no time axis) are broadcast over time.
    """
    if isinstance(time_range, str):
        if time_range not in SPLIT_YEARS:
            raise ConfigError(f"unknown split {time_range!r}", "time_range")
        time_range = SPLIT_YEARS[time_range]
    if lead < 1:
        raise ConfigError("lead must be >= 1", "lead")
    by_var = _index_files(path)

    times = lat = lon = None
    channels = []
    for v in catalog:
        if v.name not in by_var:
            raise IngestionError("variable missing from dataset", variable=v.key)
        da = _read_variable(by_var[v.name], v.name, time_range)
        if v.level is not None:
            if "level" not in da.dims:
                raise IngestionError("no level dimension for atmospheric variable", variable=v.key)
            levels = list(np.asarray(da["level"].values).tolist())
            if v.level not in levels:
                raise IngestionError(f"pressure level {v.level} not available", variable=v.key)
            da = da.sel(level=v.level)
        spatial = [d for d in da.dims if d != "time"]
        if spatial != ["lat", "lon"]:
            raise IngestionError(f"expected dims (time, lat, lon), got {da.dims}", variable=v.key)
        if lat is None:
            lat, lon = da["lat"].values, da["lon"].values
        elif da.sizes["lat"] != len(lat) or da.sizes["lon"] != len(lon):
            raise IngestionError(f"shape mismatch: {da.sizes['lat']}x{da.sizes['lon']} vs "
                                 f"{len(lat)}x{len(lon)}", variable=v.key)
        if "time" in da.dims:
            t = _hours(da["time"].values)
            if len(t) > 1 and not np.all(np.diff(t) == 1.0):
                gap = int(np.flatnonzero(np.diff(t) != 1.0)[0])
                raise IngestionError(f"time axis is not hourly near index {gap}", variable=v.key)
            if times is None:
                times = t
            elif len(t) != len(times) or not np.array_equal(t, times):
                raise IngestionError("time axis differs from other variables", variable=v.key)
        channels.append((v, da))

    if times is None:
        raise IngestionError("catalog has no time-varying variable")
    T = len(times)
    data = np.empty((T, len(catalog), len(lat), len(lon)))
    for k, (v, da) in enumerate(channels):
        arr = np.asarray(da.values, dtype=np.float64)
        data[:, k] = arr if "time" in da.dims else arr[None]

    if not np.all(np.isfinite(data)):
        k = int(np.flatnonzero(~np.isfinite(data).all(axis=(0, 2, 3)))[0])
        raise IngestionError("non-finite values", variable=catalog.keys[k])

    h = 0 if history_dt is None else int(round(history_dt))
    starts = np.arange(h, T - lead, stride)
    grid = GridSpec(lat, lon, lat_boundary="clamp")
    inputs = data[starts] if len(starts) else np.empty((0, *data.shape[1:]))
    targets = (np.stack([data[s + 1:s + lead + 1] for s in starts]) if len(starts)
               else np.empty((0, lead, *data.shape[1:])))
    hist = data[starts - h] if history_dt is not None and len(starts) else None
    meta = {"kind": "era5", "path": os.path.abspath(path),
            "time_range": list(time_range) if time_range else None}
    return TrajectoryDataset(inputs, targets, times[starts], grid, catalog, hist,
                             None if history_dt is None else float(h), None, meta)


def synthetic_config_from_dict(d):
    try:
        return SynthConfig(**d)
    except TypeError as e:
        raise ConfigError(str(e), "data.synth") from None
