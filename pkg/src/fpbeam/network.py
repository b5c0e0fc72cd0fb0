"""Network topology, channel generation and physical-layer constants.

Layout is a cluster of hexagonal cells with the BS at each hexagon
center.  Users are dropped uniformly over the network area and associate
with the geographically closest BS (wraparound metric when enabled).
Channels combine a distance-based pathloss with i.i.d. Rayleigh fading
per antenna and per band.
"""

import dataclasses
import json
import warnings

import numpy as np

# Thermal noise floor, -174 dBm/Hz in W/Hz.
THERMAL_PSD_W_PER_HZ = 10.0 ** (-174.0 / 10.0) * 1e-3


def dbm_to_watts(dbm):
    return 10.0 ** (dbm / 10.0) * 1e-3


def watts_to_dbm(watts):
    return 10.0 * np.log10(watts * 1e3)


@dataclasses.dataclass
class NetworkConfig:
    """Static description of the network and its physical constants."""

    num_cells: int = 7
    antennas_M: int = 2
    users_per_cell_K: int = 5
    bands_F: int = 1
    bandwidth_W: float = 20e6           # Hz per band
    power_PT: float = dbm_to_watts(43.0)  # average per-band BS budget, W
    noise_figure: float = 9.0           # dB
    pathloss_exponent: float = 3.76
    reference_distance: float = 0.392   # m
    cell_radius: float = 400.0          # m, BS to hexagon vertex
    wraparound: bool = True
    rng_seed: int = 0

    def validate(self):
        if self.antennas_M < 1:
            raise ValueError("antennas_M must be >= 1")
        if self.users_per_cell_K < self.antennas_M:
            raise ValueError("users_per_cell_K must be >= antennas_M")
        if self.users_per_cell_K < 2 * self.antennas_M:
            warnings.warn(
                "users_per_cell_K < 2*antennas_M; the scheduling gain "
                "assumes many more users than antennas", stacklevel=2)
        if self.bands_F < 1:
            raise ValueError("bands_F must be >= 1")
        for name in ("bandwidth_W", "power_PT", "pathloss_exponent",
                     "reference_distance", "cell_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.num_cells < 1:
            raise ValueError("num_cells must be >= 1")
        if self.wraparound and self.num_cells != 7:
            raise ValueError("wraparound is only defined for the 7-cell layout")
        return self

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data).validate()


@dataclasses.dataclass
class Topology:
    bs_pos: np.ndarray        # (B, 2)
    user_pos: np.ndarray      # (B, K, 2), user k of cell b
    cell_radius: float
    wrap_shifts: np.ndarray   # (S, 2) translation images, row 0 is zero


@dataclasses.dataclass
class ChannelTensor:
    """h[b, k, b', f, :]: channel from BS b' to user k served by BS b."""

    h: np.ndarray             # (B, K, B, F, M) complex

    @property
    def shape(self):
        return self.h.shape

    def save(self, path):
        np.savez_compressed(path, h=self.h)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            return cls(h=data["h"])

    def to_json(self):
        return json.dumps({
            "shape": list(self.h.shape),
            "real": self.h.real.ravel().tolist(),
            "imag": self.h.imag.ravel().tolist(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        shape = tuple(data["shape"])
        h = (np.array(data["real"]) + 1j * np.array(data["imag"])).reshape(shape)
        return cls(h=h)


@dataclasses.dataclass
class NoiseModel:
    sigma2: np.ndarray        # (B, K, F), W


def _hex_centers(num_cells, radius):
    """BS positions: origin plus rings of hexagon centers, spacing sqrt(3)R."""
    d = np.sqrt(3.0) * radius
    centers = [np.zeros(2)]
    # first ring at angles 0, 60, ..., 300 degrees
    ring = 1
    while len(centers) < num_cells:
        for i in range(6 * ring):
            ang = np.pi / 3.0 * (i / ring)
            # axial ring walk: corners at multiples of 60 deg, interpolate
            corner = i // ring
            step = i % ring
            a0 = np.pi / 3.0 * corner
            a1 = np.pi / 3.0 * (corner + 2)
            p = ring * d * np.array([np.cos(a0), np.sin(a0)]) + \
                step * d * np.array([np.cos(a1), np.sin(a1)])
            centers.append(p)
            if len(centers) == num_cells:
                break
        ring += 1
    return np.array(centers[:num_cells])


def _wrap_shifts(radius, enabled):
    if not enabled:
        return np.zeros((1, 2))
    # 7-cell cluster tiling: nearest cluster images are one lattice vector
    # (length sqrt(7) * cell spacing) away, rotated by multiples of 60 deg.
    d = np.sqrt(3.0) * radius
    v1 = 2.0 * d * np.array([1.0, 0.0]) + d * np.array([0.5, np.sqrt(3.0) / 2.0])
    shifts = [np.zeros(2)]
    for k in range(6):
        ang = np.pi / 3.0 * k
        rot = np.array([[np.cos(ang), -np.sin(ang)],
                        [np.sin(ang), np.cos(ang)]])
        shifts.append(rot @ v1)
    return np.array(shifts)


def wrap_distance(points, bs_pos, shifts):
    """Min distance from each point to each BS over all layout images.

    points: (..., 2); bs_pos: (B, 2); returns (..., B).
    """
    p = np.asarray(points)[..., None, None, :]          # (..., 1, 1, 2)
    targets = bs_pos[:, None, :] + shifts[None, :, :]   # (B, S, 2)
    dist = np.linalg.norm(p - targets, axis=-1)         # (..., B, S)
    return dist.min(axis=-1)


def _in_hexagon(points, center, radius):
    """Hexagon with circumradius R, edge normals at 0/60/120 degrees."""
    rel = np.asarray(points) - center
    apothem = np.sqrt(3.0) / 2.0 * radius
    for ang in (0.0, np.pi / 3.0, 2.0 * np.pi / 3.0):
        n = np.array([np.cos(ang), np.sin(ang)])
        if np.any(np.abs(rel @ n) > apothem + 1e-12):
            return False
    return True


def build_topology(cfg: NetworkConfig) -> Topology:
    """Drop K users per cell, associated with the closest BS.

    Draws are rejected until every cell holds exactly K associated users,
    so per-cell loads stay equal. Equidistant users go to the lowest BS
    index (argmin tie-break).
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0x70B0]))
    bs_pos = _hex_centers(cfg.num_cells, cfg.cell_radius)
    shifts = _wrap_shifts(cfg.cell_radius, cfg.wraparound)
    B, K = cfg.num_cells, cfg.users_per_cell_K

    user_pos = np.zeros((B, K, 2))
    counts = np.zeros(B, dtype=int)
    while counts.min() < K:
        cell = int(rng.integers(B))
        # uniform point in that cell's hexagon via bounding-box rejection
        while True:
            p = bs_pos[cell] + cfg.cell_radius * rng.uniform(-1, 1, size=2)
            if _in_hexagon(p, bs_pos[cell], cfg.cell_radius):
                break
        b = int(np.argmin(wrap_distance(p, bs_pos, shifts)))
        if counts[b] < K:
            user_pos[b, counts[b]] = p
            counts[b] += 1
    return Topology(bs_pos=bs_pos, user_pos=user_pos,
                    cell_radius=cfg.cell_radius, wrap_shifts=shifts)


def pathloss(dist, cfg: NetworkConfig):
    """(d/d_ref)^(-alpha), clamped at d >= d_ref so gain never exceeds 1."""
    d = np.maximum(np.asarray(dist, dtype=float), cfg.reference_distance)
    return (d / cfg.reference_distance) ** (-cfg.pathloss_exponent)


def generate_channels(topo: Topology, cfg: NetworkConfig, seed: int) -> ChannelTensor:
    """Pathloss times i.i.d. CN(0, 1) fading per antenna, band and BS pair."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC4A7]))
    B, K, F, M = cfg.num_cells, cfg.users_per_cell_K, cfg.bands_F, cfg.antennas_M
    dist = wrap_distance(topo.user_pos, topo.bs_pos, topo.wrap_shifts)  # (B,K,B)
    gain = pathloss(dist, cfg)
    g = (rng.standard_normal((B, K, B, F, M)) +
         1j * rng.standard_normal((B, K, B, F, M))) / np.sqrt(2.0)
    h = np.sqrt(gain)[:, :, :, None, None] * g
    return ChannelTensor(h=h)


def noise_power(cfg: NetworkConfig) -> NoiseModel:
    """Thermal floor times bandwidth and noise figure, flat over the network."""
    cfg.validate()
    sigma2 = THERMAL_PSD_W_PER_HZ * cfg.bandwidth_W * 10.0 ** (cfg.noise_figure / 10.0)
    full = np.full((cfg.num_cells, cfg.users_per_cell_K, cfg.bands_F), sigma2)
    return NoiseModel(sigma2=full)
