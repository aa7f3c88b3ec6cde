"""Analytic surfaces with exact normals and exact point distances.

These stand in for mesh data: ground truth sampled from them is exact,
and point-to-surface distance needs no mesh machinery. Sampling is
stratified-jittered in parameter space: a deterministic grid of cells,
one uniform draw inside each cell.

Surface ids are underscore-joined, e.g. "plane", "sphere_1.0",
"torus_1.0_0.4", "bump_0.5_0.5"; they double as dataset directory names.
"""

import numpy as np
from scipy.optimize import minimize_scalar

from .core import SparseCloud
from .errors import ContractError, RangeError

BUMP_GRID = 512  # coarse bracketing grid for the 1-D distance search


def _stratified_cells(count, lo_u, hi_u, lo_v, hi_v, rng):
    """count jittered samples from a grid over the (u, v) rectangle."""
    g1 = int(np.ceil(np.sqrt(count)))
    g2 = int(np.ceil(count / g1))
    iu, iv = np.divmod(np.arange(count), g2)
    jitter = rng.random((count, 2))
    u = lo_u + (hi_u - lo_u) * (iu + jitter[:, 0]) / g1
    v = lo_v + (hi_v - lo_v) * (iv + jitter[:, 1]) / g2
    return u, v


class Plane:
    """The z = 0 plane, sampled on [-1, 1]^2."""

    def spec_id(self):
        return "plane"

    def sample(self, count, seed):
        if count < 1:
            raise RangeError("sample count must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        u, v = _stratified_cells(count, -1.0, 1.0, -1.0, 1.0, rng)
        pts = np.stack([u, v, np.zeros_like(u)], axis=1)
        nrm = np.broadcast_to([0.0, 0.0, 1.0], pts.shape).copy()
        return SparseCloud(pts, nrm)

    def distance(self, point):
        return abs(float(point[2]))


class Sphere:
    def __init__(self, radius=1.0):
        if radius <= 0:
            raise ContractError(f"sphere radius {radius} must be positive")
        self.radius = float(radius)

    def spec_id(self):
        return f"sphere_{self.radius:g}"

    def sample(self, count, seed):
        if count < 1:
            raise RangeError("sample count must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        # area-uniform: azimuth x cos(polar)
        u, w = _stratified_cells(count, 0.0, 2.0 * np.pi, -1.0, 1.0, rng)
        s = np.sqrt(np.maximum(0.0, 1.0 - w * w))
        nrm = np.stack([s * np.cos(u), s * np.sin(u), w], axis=1)
        return SparseCloud(self.radius * nrm, nrm)

    def distance(self, point):
        return abs(float(np.linalg.norm(point)) - self.radius)


class Torus:
    def __init__(self, major=1.0, minor=0.4):
        if minor <= 0 or major <= minor:
            raise ContractError(
                f"torus needs 0 < minor < major, got {major}, {minor}")
        self.major = float(major)
        self.minor = float(minor)

    def spec_id(self):
        return f"torus_{self.major:g}_{self.minor:g}"

    def sample(self, count, seed):
        if count < 1:
            raise RangeError("sample count must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        u, v = _stratified_cells(count, 0.0, 2.0 * np.pi, 0.0, 2.0 * np.pi, rng)
        ring = self.major + self.minor * np.cos(v)
        pts = np.stack([ring * np.cos(u), ring * np.sin(u),
                        self.minor * np.sin(v)], axis=1)
        nrm = np.stack([np.cos(v) * np.cos(u), np.cos(v) * np.sin(u),
                        np.sin(v)], axis=1)
        return SparseCloud(pts, nrm)

    def distance(self, point):
        x, y, z = (float(c) for c in point)
        ring = np.hypot(np.hypot(x, y) - self.major, z)
        return abs(float(ring) - self.minor)


class GaussianBump:
    """z = a * exp(-(x^2 + y^2) / sigma^2) over the unit disk.

    The surface is rotationally symmetric, so point distance reduces to a
    1-D problem in the radial coordinate t of the surface point: grid
    bracketing plus a bounded scalar minimization.
    """

    def __init__(self, amplitude=0.5, sigma=0.5):
        if sigma <= 0:
            raise ContractError(f"bump sigma {sigma} must be positive")
        if amplitude < 0:
            raise ContractError(f"bump amplitude {amplitude} must be >= 0")
        self.amplitude = float(amplitude)
        self.sigma = float(sigma)

    def spec_id(self):
        return f"bump_{self.amplitude:g}_{self.sigma:g}"

    def height(self, rho2):
        return self.amplitude * np.exp(-rho2 / (self.sigma ** 2))

    def sample(self, count, seed):
        if count < 1:
            raise RangeError("sample count must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        # rho = sqrt(w) makes the planar footprint area-uniform
        w, phi = _stratified_cells(count, 0.0, 1.0, 0.0, 2.0 * np.pi, rng)
        rho = np.sqrt(w)
        x = rho * np.cos(phi)
        y = rho * np.sin(phi)
        z = self.height(rho * rho)
        pts = np.stack([x, y, z], axis=1)
        # normal ~ (-dz/dx, -dz/dy, 1)
        factor = 2.0 * z / (self.sigma ** 2)
        nrm = np.stack([factor * x, factor * y, np.ones_like(x)], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return SparseCloud(pts, nrm)

    def _radial_gap2(self, t, rho, z):
        return (t - rho) ** 2 + (self.height(t * t) - z) ** 2

    def distance(self, point, grid=BUMP_GRID):
        x, y, z = (float(c) for c in point)
        rho = float(np.hypot(x, y))
        ts = np.linspace(0.0, 1.0, grid + 1)
        gaps = self._radial_gap2(ts, rho, z)
        extra = min(max(rho, 0.0), 1.0)  # exact for on-surface queries
        candidates = [(float(self._radial_gap2(extra, rho, z)), extra)]
        best_i = int(np.argmin(gaps))
        candidates.append((float(gaps[best_i]), float(ts[best_i])))
        lo = float(ts[max(0, best_i - 1)])
        hi = float(ts[min(grid, best_i + 1)])
        if hi > lo:
            res = minimize_scalar(
                lambda t: self._radial_gap2(t, rho, z),
                bounds=(lo, hi), method="bounded",
                options={"xatol": 1e-12})
            candidates.append((float(res.fun), float(res.x)))
        return float(np.sqrt(min(c[0] for c in candidates)))

    def distance_bruteforce(self, point, grid=200000):
        """Dense-grid oracle for the 1-D search, no polishing."""
        x, y, z = (float(c) for c in point)
        rho = float(np.hypot(x, y))
        ts = np.linspace(0.0, 1.0, grid + 1)
        return float(np.sqrt(np.min(self._radial_gap2(ts, rho, z))))


class TransformedSurface:
    """A base surface under rotation followed by isotropic scaling."""

    def __init__(self, base, rotation, scale):
        self.base = base
        self.rotation = np.asarray(rotation, dtype=np.float64)
        if self.rotation.shape != (3, 3):
            raise ContractError("rotation must be a 3x3 matrix")
        if scale <= 0:
            raise ContractError(f"scale {scale} must be positive")
        self.scale = float(scale)

    def spec_id(self):
        return f"transformed({self.base.spec_id()})"

    def sample(self, count, seed):
        cloud = self.base.sample(count, seed)
        pts = self.scale * (cloud.points @ self.rotation.T)
        nrm = cloud.normals @ self.rotation.T
        return SparseCloud(pts, nrm)

    def distance(self, point):
        local = self.rotation.T @ (np.asarray(point, dtype=np.float64) / self.scale)
        return self.scale * self.base.distance(local)


def parse_surface(text):
    """Build a surface from its id string; see module docstring for the
    grammar. Unknown kinds or bad parameter counts raise ContractError."""
    parts = str(text).strip().split("_")
    kind, args = parts[0], parts[1:]
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise ContractError(f"bad surface parameter in {text!r}") from None
    if kind == "plane":
        if values:
            raise ContractError("plane takes no parameters")
        return Plane()
    if kind == "sphere":
        if len(values) > 1:
            raise ContractError("sphere takes at most one parameter (radius)")
        return Sphere(*values)
    if kind == "torus":
        if len(values) not in (0, 2):
            raise ContractError("torus takes zero or two parameters")
        return Torus(*values)
    if kind == "bump":
        if len(values) not in (0, 2):
            raise ContractError("bump takes zero or two parameters")
        return GaussianBump(*values)
    raise ContractError(f"unknown surface kind {kind!r}")


def sample_surface(spec, count, seed):
    """Sample `count` points with exact normals from a surface given as
    an object or an id string."""
    surface = parse_surface(spec) if isinstance(spec, str) else spec
    return surface.sample(count, seed)
