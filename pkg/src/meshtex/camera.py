"""Spherical viewpoints and look-at perspective cameras.

Angles are degrees. theta is azimuth measured from +Z toward +X, phi is
elevation from the XZ plane toward +Y, r is distance from the origin:

    eye = (r cos(phi) sin(theta), r sin(phi), r cos(phi) cos(theta))

Cameras look at the origin with +Y up; at the poles (phi = +-90) the up
vector switches to +Z. Camera space is right-handed looking down -Z.
Stored depth is linear in camera-forward distance, normalized over
[near, far] with background = 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidRange

DEFAULT_DISTANCE = 1.8
DEFAULT_FOV_DEG = 50.0
DEFAULT_NEAR = 0.1
DEFAULT_FAR = 4.0

# Generation presets, in synthesis order.
PRESET_ANGLES = (
    ("front", 0.0, 0.0),
    ("back", 180.0, 0.0),
    ("left", 90.0, 0.0),
    ("right", 270.0, 0.0),
    ("top", 0.0, 90.0),
    ("bottom", 0.0, -90.0),
)

REFINE_RING_ELEVATIONS = (10.0, 40.0, 70.0)
REFINE_AZIMUTH_STEP = 30.0


@dataclass(frozen=True)
class Viewpoint:
    theta: float  # azimuth, degrees, wrapped to [0, 360)
    phi: float    # elevation, degrees, in [-90, 90]
    r: float      # distance, > 0

    def __post_init__(self):
        if not self.r > 0:
            raise InvalidRange(f"viewpoint distance must be positive, got {self.r}")
        if not -90.0 <= self.phi <= 90.0:
            raise InvalidRange(f"elevation must be in [-90, 90], got {self.phi}")
        object.__setattr__(self, "theta", float(self.theta) % 360.0)

    def eye(self) -> np.ndarray:
        th = math.radians(self.theta)
        ph = math.radians(self.phi)
        return np.array([
            self.r * math.cos(ph) * math.sin(th),
            self.r * math.sin(ph),
            self.r * math.cos(ph) * math.cos(th),
        ])


@dataclass(frozen=True)
class Camera:
    eye: np.ndarray            # (3,)
    view_transform: np.ndarray  # (4, 4) world -> camera
    projection: np.ndarray     # (4, 4) camera -> clip
    image_resolution: int
    near: float = DEFAULT_NEAR
    far: float = DEFAULT_FAR


def viewpoint_to_camera(
    viewpoint: Viewpoint,
    image_resolution: int,
    fov_deg: float = DEFAULT_FOV_DEG,
    near: float = DEFAULT_NEAR,
    far: float = DEFAULT_FAR,
) -> Camera:
    """Build a look-at-origin perspective camera for a viewpoint.

    Raises:
        InvalidRange: fov outside (10, 120) degrees or bad resolution.
    """
    if not 10.0 < fov_deg < 120.0:
        raise InvalidRange(f"fov must be in (10, 120) degrees, got {fov_deg}")
    if image_resolution <= 0:
        raise InvalidRange("image_resolution must be positive")

    eye = viewpoint.eye()
    forward = -eye / np.linalg.norm(eye)
    up = np.array([0.0, 1.0, 0.0])
    if np.linalg.norm(np.cross(forward, up)) < 1e-8:
        up = np.array([0.0, 0.0, 1.0])  # pole view
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    true_up = np.cross(right, forward)

    view = np.eye(4)
    view[0, :3] = right
    view[1, :3] = true_up
    view[2, :3] = -forward
    view[:3, 3] = -view[:3, :3] @ eye

    f = 1.0 / math.tan(math.radians(fov_deg) * 0.5)
    proj = np.zeros((4, 4))
    proj[0, 0] = f  # square images, aspect 1
    proj[1, 1] = f
    proj[2, 2] = (far + near) / (near - far)
    proj[2, 3] = 2.0 * far * near / (near - far)
    proj[3, 2] = -1.0
    for arr in (eye, view, proj):
        arr.flags.writeable = False
    return Camera(eye, view, proj, image_resolution, near, far)


def project_points(camera: Camera, points: np.ndarray):
    """Project (N, 3) world points to continuous pixel coordinates.

    Returns:
        px, py: (N,) pixel coordinates, x right, y down, pixel i covers
            [i, i+1) so centers sit at i + 0.5.
        depth: (N,) linear normalized depth over [near, far], unclamped.
        z_cam: (N,) camera-forward distance (positive in front).
    """
    pts = np.asarray(points, dtype=np.float64)
    hom = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    cam = hom @ camera.view_transform.T
    z_cam = -cam[:, 2]
    clip = cam @ camera.projection.T
    w = clip[:, 3]
    # guard: points at the eye plane would divide by zero
    w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    ndc = clip[:, :2] / w[:, None]
    res = camera.image_resolution
    px = (ndc[:, 0] * 0.5 + 0.5) * res
    py = (0.5 - ndc[:, 1] * 0.5) * res
    depth = (z_cam - camera.near) / (camera.far - camera.near)
    return px, py, depth, z_cam


def preset_generation_views(r: float = DEFAULT_DISTANCE) -> list[Viewpoint]:
    """The six axis-aligned generation viewpoints, synthesis order."""
    return [Viewpoint(theta, phi, r) for _, theta, phi in PRESET_ANGLES]


def candidate_refinement_views(r: float = DEFAULT_DISTANCE) -> list[Viewpoint]:
    """36 upper-hemisphere refinement candidates.

    Ring-major: all azimuths of phi=10 first, then phi=40, then phi=70,
    azimuth ascending 0, 30, ..., 330 within each ring.
    """
    views = []
    for phi in REFINE_RING_ELEVATIONS:
        theta = 0.0
        while theta < 360.0:
            views.append(Viewpoint(theta, phi, r))
            theta += REFINE_AZIMUTH_STEP
    return views
