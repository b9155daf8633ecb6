"""Deterministic geometry: AP layout, UPA steering vectors, SSB codebook, voxel grid
and the symbol-to-voxel schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ContractError, GeometryError

SYMBOLS_PER_BLOCK = 4


@dataclass(frozen=True)
class ArrayGeometry:
    """Square uniform planar array with half-wavelength spacing."""

    m_v: int
    m_h: int

    def __post_init__(self):
        if int(self.m_v) != self.m_v or int(self.m_h) != self.m_h:
            raise ConfigError("array dimensions must be integers", key="m_v")
        if self.m_v < 1:
            raise ConfigError("must be >= 1", key="m_v")
        if self.m_h < 1:
            raise ConfigError("must be >= 1", key="m_h")
        if self.m_v != self.m_h:
            raise ConfigError("panels are square: m_v must equal m_h", key="m_h")

    @property
    def m(self) -> int:
        return self.m_v * self.m_h


@dataclass(frozen=True)
class ApNode:
    position: tuple
    boresight_sign: int
    role: int | str  # illuminator index 1..J, or "rx"

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if self.boresight_sign not in (1, -1):
            raise ContractError("boresight_sign must be +1 or -1")

    @property
    def pos(self) -> np.ndarray:
        return np.array(self.position)

    @property
    def is_receiver(self) -> bool:
        return self.role == "rx"


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    centers: np.ndarray
    spacing: float
    shape: tuple

    @property
    def count(self) -> int:
        return len(self.centers)


@dataclass(frozen=True, eq=False)
class SsbCodebook:
    columns: np.ndarray  # (M, R), unit-norm columns
    angle_pairs: tuple  # one (theta, phi) per block

    @property
    def block_count(self) -> int:
        return len(self.angle_pairs)

    @property
    def symbol_count(self) -> int:
        return self.columns.shape[1]

    def column(self, r: int) -> np.ndarray:
        return self.columns[:, r]


@dataclass(frozen=True)
class SymbolSchedule:
    entries: tuple  # (voxel index, codebook column index) per symbol

    def __len__(self):
        return len(self.entries)

    def column_for(self, q: int) -> int:
        return self.entries[q][1]


@dataclass(frozen=True, eq=False)
class Scene:
    geometry: ArrayGeometry
    illuminators: tuple
    receiver: ApNode
    grid: VoxelGrid
    codebook: SsbCodebook
    schedule: SymbolSchedule
    metadata: dict = field(default_factory=dict)

    @property
    def n_aps(self) -> int:
        return len(self.illuminators)

    def ssb_column(self, q: int) -> np.ndarray:
        """The SSB precoder column ``f_q`` transmitted on symbol ``q``."""
        return self.codebook.column(self.schedule.column_for(q))


class BistaticAngles(NamedTuple):
    theta_tx: float
    phi_tx: float
    theta_rx: float
    phi_rx: float
    l_tx: float
    l_rx: float


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def upa_steering(theta, phi, geom: ArrayGeometry) -> np.ndarray:
    """Far-field UPA response ``a_V(phi) (x) a_H(theta, phi)``.

    Element ``v * m_h + h`` carries the phase of row ``v`` and column ``h``.
    """
    if abs(phi) > math.pi / 2 + 1e-12:
        raise ContractError(f"elevation {phi!r} outside [-pi/2, pi/2]")
    a_v = np.exp(-1j * np.pi * np.arange(geom.m_v) * np.sin(phi))
    a_h = np.exp(-1j * np.pi * np.arange(geom.m_h) * np.sin(theta) * np.cos(phi))
    return np.kron(a_v, a_h)


def ssb_angle_grid(geom: ArrayGeometry, exclude_endpoints: bool = False) -> list:
    """SSB beam directions on the ``arcsin(2i / sqrt(M))`` grid.

    Elevation-major: every azimuth for elevation index 0, then -1, and so on.
    Azimuth indices follow the listing ``0, 1, -1, 2, -2, ...``, so block 0 is
    broadside. With ``exclude_endpoints`` the
    indices where ``|2i / sqrt(M)| == 1`` (endfire / nadir) are dropped.
    """
    side = math.isqrt(geom.m)
    if side * side != geom.m:
        raise ConfigError(f"M={geom.m} is not a perfect square", key="m_v")
    k = side // 2
    az_order = [0] + [s * i for i in range(1, k + 1) for s in (1, -1)]
    az_idx = [i for i in az_order if not (exclude_endpoints and 2 * abs(i) == side)]
    el_idx = [i for i in range(0, -k - 1, -1) if not (exclude_endpoints and 2 * abs(i) == side)]
    pairs = []
    for ie in el_idx:
        phi = math.asin(2 * ie / side)
        for ia in az_idx:
            pairs.append((math.asin(2 * ia / side), phi))
    return pairs


def build_codebook(geom: ArrayGeometry, exclude_endpoints: bool = False) -> SsbCodebook:
    pairs = ssb_angle_grid(geom, exclude_endpoints)
    scale = 1.0 / math.sqrt(geom.m)
    blocks = [upa_steering(th, ph, geom) * scale for th, ph in pairs]
    cols = np.repeat(np.stack(blocks, axis=1), SYMBOLS_PER_BLOCK, axis=1)
    return SsbCodebook(columns=_readonly(cols), angle_pairs=tuple(pairs))


# Neighbour directions around the receiver cell, in illuminator order.
_RING_DEG = (180.0, 240.0, 0.0, 60.0, 120.0, 300.0)


def hex_layout(r: float, n_aps: int = 3, ap_height: float = 10.0) -> list:
    """Illuminators on the first hexagonal ring around the receiver at the origin.

    Returns ``[AP_1, ..., AP_J, AP_rx]``. Adjacent cell centres are ``2 r``
    apart. APs left of the receiver face +x, the rest (and the receiver) -x.
    """
    if r <= 0:
        raise ConfigError("must be > 0", key="r")
    if not 1 <= n_aps <= len(_RING_DEG):
        raise ConfigError(f"supported range is 1..{len(_RING_DEG)}", key="n_aps")
    nodes = []
    for j in range(n_aps):
        ang = math.radians(_RING_DEG[j])
        x, y = 2 * r * math.cos(ang), 2 * r * math.sin(ang)
        x = 0.0 if abs(x) < 1e-9 else x
        y = 0.0 if abs(y) < 1e-9 else y
        nodes.append(ApNode((x, y, ap_height), 1 if x < 0 else -1, j + 1))
    nodes.append(ApNode((0.0, 0.0, ap_height), -1, "rx"))
    return nodes


def voxel_grid(center, dims, d: float) -> VoxelGrid:
    """Cells of edge ``d`` tiling a box; centres at cell midpoints.

    Each axis holds ``max(1, round(L / d))`` cells.
    """
    dims = tuple(float(x) for x in dims)
    if len(dims) != 3 or min(dims) <= 0:
        raise ConfigError("volume dimensions must be three positive lengths", key="volume")
    if d <= 0:
        raise ConfigError("must be > 0", key="d")
    center = np.asarray(center, dtype=float)
    counts = [max(1, int(math.floor(L / d + 0.5))) for L in dims]
    axes = [center[k] + (np.arange(n) - (n - 1) / 2.0) * d for k, n in enumerate(counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    if np.any(centers[:, 2] < 0):
        raise GeometryError("voxel centres below ground level")
    return VoxelGrid(centers=_readonly(centers), spacing=float(d), shape=tuple(counts))


def bistatic_angles(b_j, p_q, b_rx) -> BistaticAngles:
    """Departure angles AP_j -> voxel, arrival angles voxel -> AP_rx, and both ranges."""
    b_j, p_q, b_rx = (np.asarray(x, dtype=float) for x in (b_j, p_q, b_rx))
    l_tx = float(np.linalg.norm(p_q - b_j))
    l_rx = float(np.linalg.norm(p_q - b_rx))
    if l_tx == 0.0 or l_rx == 0.0:
        raise GeometryError("voxel coincides with an AP")
    theta_tx = math.atan2(p_q[1] - b_j[1], p_q[0] - b_j[0])
    phi_tx = math.asin(np.clip((p_q[2] - b_j[2]) / l_tx, -1.0, 1.0))
    theta_rx = math.atan2(b_rx[1] - p_q[1], b_rx[0] - p_q[0])
    phi_rx = math.asin(np.clip((b_rx[2] - p_q[2]) / l_rx, -1.0, 1.0))
    return BistaticAngles(theta_tx, phi_tx, theta_rx, phi_rx, l_tx, l_rx)


def symbol_schedule(grid: VoxelGrid, book: SsbCodebook) -> SymbolSchedule:
    """Symbol ``q`` illuminates voxel ``q`` alongside codebook column ``q``."""
    if grid.count >= book.symbol_count:
        raise ConfigError(
            f"sweep cannot cover volume within one burst set (Q={grid.count}, R={book.symbol_count})",
            key="volume",
        )
    return SymbolSchedule(tuple((q, q) for q in range(grid.count)))


def build_scene(geom: ArrayGeometry, nodes, grid: VoxelGrid, exclude_endpoints: bool = False,
                metadata: dict | None = None) -> Scene:
    rx = [n for n in nodes if n.is_receiver]
    tx = [n for n in nodes if not n.is_receiver]
    if len(rx) != 1:
        raise ConfigError("exactly one receiver AP is required", key="aps")
    if not tx:
        raise ConfigError("at least one illuminator is required", key="n_aps")
    book = build_codebook(geom, exclude_endpoints)
    meta = dict(metadata or {})
    meta.setdefault("baseline_configuration", len(tx) == 3)
    return Scene(geom, tuple(tx), rx[0], grid, book, symbol_schedule(grid, book), meta)
