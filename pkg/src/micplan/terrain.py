"""Safe contact surfaces and their friction geometry.

A terrain scene is a list of convex planar polygons embedded in 3D, each
carrying a half-space representation, a unit normal, a friction
coefficient and an inscribed polyhedral friction cone. The module also
provides the exact polyhedral margin computation used to validate plans
independently of the planner's constraint encoding.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError

COPLANAR_TOL = 1e-9
DEFAULT_GRAVITY = (0.0, 0.0, -9.81)
DEFAULT_CONE_EDGES = 4


def _unit(v):
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero vector has no direction")
    return v / n


def tangent_frame(normal):
    """Deterministic orthonormal tangent pair (t1, t2) for a unit normal.

    Chosen so that for normal +z the frame is (+x, +y).
    """
    normal = np.asarray(normal, dtype=float)
    seed = np.array([1.0, 0.0, 0.0])
    if abs(normal @ seed) > 0.9:
        seed = np.array([0.0, 1.0, 0.0])
    t2 = _unit(np.cross(normal, seed))
    t1 = np.cross(t2, normal)
    return t1, t2


def cone_edges(normal, mu, n_edges=DEFAULT_CONE_EDGES):
    """Edge rays of the friction pyramid inscribed in the exact cone.

    Edge k is (n + mu * t_k) / sqrt(1 + mu^2) for tangents t_k evenly
    rotated about the normal, so every edge satisfies
    <edge, n> = 1 / sqrt(1 + mu^2). A zero friction coefficient collapses
    the pyramid onto the normal ray; that is legal but flagged.
    """
    normal = np.asarray(normal, dtype=float)
    if n_edges < 3:
        raise ValueError(f"need at least 3 cone edges, got {n_edges}")
    if mu < 0.0:
        raise ValueError(f"friction coefficient must be >= 0, got {mu}")
    if abs(np.linalg.norm(normal) - 1.0) > 1e-9:
        raise ValueError("normal must be a unit vector")
    if mu == 0.0:
        warnings.warn("mu = 0 gives a degenerate cone (all edges equal "
                      "the normal)", RuntimeWarning, stacklevel=2)
        return np.tile(normal, (n_edges, 1))
    t1, t2 = tangent_frame(normal)
    angles = 2.0 * np.pi * np.arange(n_edges) / n_edges
    tangents = np.outer(np.cos(angles), t1) + np.outer(np.sin(angles), t2)
    edges = (normal[None, :] + mu * tangents) / np.sqrt(1.0 + mu * mu)
    return edges


def cone_facets(edges, normal):
    """Inward facet matrix D of the pyramid: y in cone  <=>  D y <= 0.

    Row k is the unit normal of the facet spanned by edges k and k+1,
    oriented so D @ normal < 0. Degenerate (frictionless) pyramids have
    no facet representation.
    """
    edges = np.asarray(edges, dtype=float)
    n_e = edges.shape[0]
    rows = np.zeros((n_e, 3))
    for k in range(n_e):
        d = np.cross(edges[k], edges[(k + 1) % n_e])
        nd = np.linalg.norm(d)
        if nd < 1e-12:
            raise ValueError("degenerate friction pyramid has no facets")
        d = d / nd
        if d @ normal > 0.0:
            d = -d
        rows[k] = d
    return rows


@dataclass(frozen=True)
class SafeRegion:
    """One convex safe contact surface."""

    id: int
    vertices: np.ndarray          # (V, 3)
    normal: np.ndarray            # unit
    halfspaces_A: np.ndarray      # (K, 3); {c | A c <= b} pins the plane too
    halfspaces_b: np.ndarray
    friction_coeff: float
    cone_edges: np.ndarray        # (N_e, 3)
    cone_facets: np.ndarray | None  # (N_e, 3) or None when mu == 0

    def contains(self, point, tol=1e-9) -> bool:
        return bool(np.all(self.halfspaces_A @ np.asarray(point, float)
                           <= self.halfspaces_b + tol))

    def plane_height(self, xy) -> float:
        """z of the region plane at horizontal position (x, y)."""
        n = self.normal
        if abs(n[2]) < 1e-12:
            raise ValueError("region plane is vertical")
        d = n @ self.vertices[0]
        return (d - n[0] * xy[0] - n[1] * xy[1]) / n[2]


@dataclass(frozen=True)
class TerrainScene:
    regions: list[SafeRegion]
    gravity: np.ndarray = field(
        default_factory=lambda: np.array(DEFAULT_GRAVITY))

    def region(self, rid: int) -> SafeRegion:
        return self.regions[rid]

    def region_containing(self, point, tol=1e-6) -> SafeRegion | None:
        for reg in self.regions:
            if reg.contains(point, tol=tol):
                return reg
        return None

    def bbox(self):
        """(lo, hi) corners of the axis-aligned box around all vertices."""
        pts = np.vstack([r.vertices for r in self.regions])
        return pts.min(axis=0), pts.max(axis=0)


def _polygon_normal(vertices):
    # Newell's method; robust for any simple polygon
    n = np.zeros(3)
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        n += np.cross(a, b)
    if np.linalg.norm(n) < 1e-12:
        raise SchemaError("polygon vertices are collinear")
    n = _unit(n)
    # orient the dominant component positive (flat ground gets +z)
    if n[np.argmax(np.abs(n))] < 0:
        n = -n
    return n


def _check_convex(vertices, normal):
    m = len(vertices)
    signs = []
    for k in range(m):
        e0 = vertices[(k + 1) % m] - vertices[k]
        e1 = vertices[(k + 2) % m] - vertices[(k + 1) % m]
        signs.append(np.cross(e0, e1) @ normal)
    signs = np.asarray(signs)
    scale = max(1.0, np.abs(signs).max())
    if np.any(signs < -1e-12 * scale) and np.any(signs > 1e-12 * scale):
        raise SchemaError("region polygon is not convex")
    if np.all(np.abs(signs) <= 1e-12 * scale):
        raise SchemaError("region polygon is degenerate")
    # normalize winding to counterclockwise about the normal
    if signs.sum() < 0:
        return vertices[::-1].copy()
    return vertices


def make_region(rid, vertices, mu, n_edges=DEFAULT_CONE_EDGES) -> SafeRegion:
    """Build and validate one safe region from its vertex loop."""
    vertices = np.asarray(vertices, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 3 or len(vertices) < 3:
        raise SchemaError(f"region {rid}: need >= 3 3D vertices")
    if mu < 0.0:
        raise SchemaError(f"region {rid}: mu must be >= 0, got {mu}")
    normal = _polygon_normal(vertices)
    plane_off = normal @ vertices[0]
    dev = np.abs(vertices @ normal - plane_off)
    if dev.max() > COPLANAR_TOL:
        raise SchemaError(
            f"region {rid}: vertices deviate {dev.max():.3e} m from their "
            f"plane (tolerance {COPLANAR_TOL:g})")
    vertices = _check_convex(vertices, normal)

    centroid = vertices.mean(axis=0)
    rows_a = [normal, -normal]
    rows_b = [plane_off, -plane_off]
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        out = np.cross(b - a, normal)
        nn = np.linalg.norm(out)
        if nn < 1e-12:
            raise SchemaError(f"region {rid}: duplicate vertices")
        out = out / nn
        if out @ (centroid - a) > 0.0:
            out = -out
        rows_a.append(out)
        rows_b.append(out @ a)
    A = np.asarray(rows_a)
    b = np.asarray(rows_b)

    if np.any(A @ vertices.T > b[:, None] + 1e-9):
        raise SchemaError(f"region {rid}: half-space form rejects a vertex")

    if mu > 0.0:
        edges = cone_edges(normal, mu, n_edges)
        facets = cone_facets(edges, normal)
        tgt = 1.0 / np.sqrt(1.0 + mu * mu)
        if np.abs(edges @ normal - tgt).max() > 1e-9:
            raise SchemaError(f"region {rid}: cone edges off the cone")
    else:
        edges = cone_edges(normal, mu, n_edges)
        facets = None

    region = SafeRegion(int(rid), vertices, normal, A, b, float(mu),
                        edges, facets)
    for arr in (region.vertices, region.normal, region.halfspaces_A,
                region.halfspaces_b, region.cone_edges):
        arr.setflags(write=False)
    return region


def load_terrain(document) -> TerrainScene:
    """Parse and validate a terrain document (dict, JSON text, or path)."""
    doc = _as_dict(document)
    if "regions" not in doc or not doc["regions"]:
        raise SchemaError("terrain document needs a non-empty 'regions' list")
    gravity = np.asarray(doc.get("gravity", DEFAULT_GRAVITY), dtype=float)
    if gravity.shape != (3,):
        raise SchemaError("gravity must be a 3-vector")
    regions = []
    for spec in doc["regions"]:
        try:
            rid = spec["id"]
            verts = spec["vertices"]
            mu = spec["mu"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"region entry missing field: {exc}") from exc
        regions.append(make_region(rid, verts, mu,
                                   n_edges=spec.get("n_edges",
                                                    DEFAULT_CONE_EDGES)))
    ids = sorted(r.id for r in regions)
    if ids != list(range(len(regions))):
        raise SchemaError(f"region ids must be unique and dense from 0, "
                          f"got {ids}")
    regions.sort(key=lambda r: r.id)
    gravity.setflags(write=False)
    return TerrainScene(regions=regions, gravity=gravity)


def _as_dict(document):
    if isinstance(document, dict):
        return document
    if isinstance(document, Path):
        text = document.read_text()
    elif isinstance(document, str):
        # JSON documents are objects; anything else is a file path
        text = document if document.lstrip().startswith("{") \
            else Path(document).read_text()
    else:
        raise SchemaError(f"cannot parse document of type {type(document)}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc


def exact_margin(force, region: SafeRegion) -> float:
    """Largest pullback of `force` along the normal staying in the pyramid.

    Solves max alpha s.t. force - alpha * n in FC over the polyhedral
    cone. With inward facets D (D y <= 0 inside) each facet row caps
    alpha at (d.force)/(d.n) since d.n < 0, so the optimum of this 1-D
    LP is the smallest ratio. Forces outside the cone get the negative
    margin of the most violated facet. Positively homogeneous in force.
    """
    force = np.asarray(force, dtype=float)
    n = region.normal
    if region.cone_facets is None:
        # frictionless: cone is the normal ray
        axial = force @ n
        perp = force - axial * n
        pn = np.linalg.norm(perp)
        if pn <= 1e-9 * max(1.0, np.linalg.norm(force)):
            return float(axial)
        return float(-pn)
    num = region.cone_facets @ force
    den = region.cone_facets @ n
    return float(np.min(num / den))
