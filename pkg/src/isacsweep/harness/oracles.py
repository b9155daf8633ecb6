"""Random toy scenes for oracle cross-checks."""
from __future__ import annotations

import math

import numpy as np

from ..channel import RcsModel, StochasticParams, build_channels
from ..precoder import UeScenario
from ..scene import ApNode, ArrayGeometry, build_scene, voxel_grid

_MIN_SEPARATION = 25.0  # m


def random_scene(rng: np.random.Generator, m_side: int, n_aps: int, *, fc: float = 15e9,
                 clutter_gain: float = 1e-9, noise_power: float = 1e-6, rcs_variance: float = 0.1,
                 shared_rcs: bool = True):
    """One-voxel scene with illuminators scattered in a 500 m disk around the receiver.

    Returns ``(scene, channels)``. Draws are rejected until every AP is at least
    25 m from the voxel and from every other AP.
    """
    geom = ArrayGeometry(m_side, m_side)
    rx = np.array([0.0, 0.0, 10.0])
    while True:
        rad = 500.0 * np.sqrt(rng.random(n_aps))
        ang = rng.uniform(0.0, 2 * math.pi, n_aps)
        aps = np.stack([rad * np.cos(ang), rad * np.sin(ang), np.full(n_aps, 10.0)], axis=1)
        voxel = np.array([*rng.uniform(-300.0, 300.0, 2), rng.uniform(1.0, 60.0)])
        pts = np.vstack([aps, rx[None, :]])
        pair = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        pair[np.diag_indices_from(pair)] = np.inf
        if pair.min() > _MIN_SEPARATION and np.linalg.norm(pts - voxel, axis=1).min() > _MIN_SEPARATION:
            break
    nodes = [ApNode(tuple(p), 1 if p[0] < 0 else -1, j + 1) for j, p in enumerate(aps)]
    nodes.append(ApNode(tuple(rx), -1, "rx"))
    scene = build_scene(geom, nodes, voxel_grid(voxel, (2.0, 2.0, 2.0), 2.0))
    channels = build_channels(scene, fc, StochasticParams(clutter_gain, noise_power),
                              RcsModel.swerling2(rcs_variance), shared_rcs=shared_rcs)
    return scene, channels


def toy_user(n_aps: int, r: float = 250.0, gamma_req: float = 10 ** 0.2, noise_power: float = 1e-6) -> UeScenario:
    """Cell-edge user with up to two interferers, capped at ``n_aps - 1``."""
    k = min(2, n_aps - 1)
    return UeScenario(2 * r / math.sqrt(3.0), (4 * r / math.sqrt(3.0),) * k, gamma_req, noise_power)
