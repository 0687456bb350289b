"""Building footprints: loading, statistics, LOS ray casting and empirical P_LOS.

Polygons are planar (meters). Segment tests treat polygons as closed sets, so
a segment that only touches a boundary counts as blocked. A uniform grid over
polygon edges accelerates the test; ``segments_blocked_bruteforce`` checks
every edge and is the reference the index must agree with.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .blockage import BuildingStats, EmpiricalTable

_EPS = 1e-9


class GeometryError(ValueError):
    """A polygon failed validation; ``index`` names the offending polygon."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"polygon {index}: {message}")
        self.index = index


def _signed_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_box(ax, ay, bx, by, px, py):
    """p within the bounding box of ab (used for collinear cases)."""
    return (
        (np.minimum(ax, bx) <= px) & (px <= np.maximum(ax, bx)) & (np.minimum(ay, by) <= py) & (py <= np.maximum(ay, by))
    )


def segments_intersect(p1, p2, q1, q2):
    """Closed segment intersection test, broadcast over leading axes (..., 2)."""
    ax, ay = p1[..., 0], p1[..., 1]
    bx, by = p2[..., 0], p2[..., 1]
    cx, cy = q1[..., 0], q1[..., 1]
    dx, dy = q2[..., 0], q2[..., 1]
    o1 = np.sign(_orient(ax, ay, bx, by, cx, cy))
    o2 = np.sign(_orient(ax, ay, bx, by, dx, dy))
    o3 = np.sign(_orient(cx, cy, dx, dy, ax, ay))
    o4 = np.sign(_orient(cx, cy, dx, dy, bx, by))
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    touch = (
        ((o1 == 0) & _on_box(ax, ay, bx, by, cx, cy))
        | ((o2 == 0) & _on_box(ax, ay, bx, by, dx, dy))
        | ((o3 == 0) & _on_box(cx, cy, dx, dy, ax, ay))
        | ((o4 == 0) & _on_box(cx, cy, dx, dy, bx, by))
    )
    return proper | touch


def _validate_polygon(verts, index):
    poly = np.asarray(verts, dtype=float)
    if poly.ndim != 2 or poly.shape[1] != 2:
        raise GeometryError("vertices must be [x, y] pairs", index)
    if not np.all(np.isfinite(poly)):
        raise GeometryError("non-finite vertex coordinate", index)
    if len(poly) > 1 and np.array_equal(poly[0], poly[-1]):
        poly = poly[:-1]  # explicit ring closure
    if len(poly) < 3:
        raise GeometryError("fewer than 3 distinct vertices", index)
    if len(np.unique(poly, axis=0)) != len(poly):
        raise GeometryError("repeated vertex", index)
    area = _signed_area(poly)
    if area == 0:
        raise GeometryError("zero area", index)
    k = len(poly)
    if k > 3:
        a, b = poly, np.roll(poly, -1, axis=0)
        i, j = np.triu_indices(k, 2)
        adjacent = (i == 0) & (j == k - 1)
        i, j = i[~adjacent], j[~adjacent]
        hit = segments_intersect(a[i], b[i], a[j], b[j])
        if hit.any():
            n = int(np.argmax(hit))
            raise GeometryError(f"self-intersection between edges {i[n]} and {j[n]}", index)
    return poly if area > 0 else poly[::-1].copy()


@dataclass(frozen=True, eq=False)
class BuildingSet:
    """Simple polygons (counter-clockwise) inside a rectangular region."""

    polygons: tuple
    region: tuple  # ((xmin, ymin), (xmax, ymax))
    _index: dict = field(default=None, repr=False)

    @classmethod
    def from_polygons(cls, polygons, region):
        (x0, y0), (x1, y1) = [[float(v) for v in p] for p in region]
        if not (x1 > x0 and y1 > y0):
            raise GeometryError("region must be [[xmin, ymin], [xmax, ymax]] with positive extent")
        polys = tuple(_validate_polygon(p, i) for i, p in enumerate(polygons))
        return cls(polys, ((x0, y0), (x1, y1)))

    def __post_init__(self):
        object.__setattr__(self, "_index", _build_index(self.polygons, self.region))

    @property
    def region_area(self):
        (x0, y0), (x1, y1) = self.region
        return (x1 - x0) * (y1 - y0)

    def __len__(self):
        return len(self.polygons)

    def translated(self, dx, dy):
        off = np.array([dx, dy], float)
        (x0, y0), (x1, y1) = self.region
        return BuildingSet(tuple(p + off for p in self.polygons), ((x0 + dx, y0 + dy), (x1 + dx, y1 + dy)))

    # point and segment queries ------------------------------------------------

    def contains(self, points):
        """True where a point lies inside or on the boundary of some polygon."""
        return _points_in_polygons(self._index, np.atleast_2d(np.asarray(points, float)))

    def segments_blocked(self, p1, p2, chunk=4096):
        p1 = np.atleast_2d(np.asarray(p1, float))
        p2 = np.atleast_2d(np.asarray(p2, float))
        p1, p2 = np.broadcast_arrays(p1, p2)
        out = np.zeros(len(p1), bool)
        if not self.polygons:
            return out
        for s in range(0, len(p1), chunk):
            out[s : s + chunk] = _grid_blocked(self._index, p1[s : s + chunk], p2[s : s + chunk])
        out |= self.contains(p1)
        return out


def _build_index(polygons, region):
    idx = {"n_poly": len(polygons)}
    if not polygons:
        return idx
    a = np.concatenate(polygons)
    b = np.concatenate([np.roll(p, -1, axis=0) for p in polygons])
    owner = np.concatenate([np.full(len(p), i) for i, p in enumerate(polygons)])
    idx.update(a=a, b=b, owner=owner)
    idx["bbox"] = np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()] for p in polygons])
    idx["edge_start"] = np.cumsum([0] + [len(p) for p in polygons])

    lengths = np.hypot(*(b - a).T)
    cell = 4.0 * float(lengths.mean())
    (rx0, ry0), (rx1, ry1) = region
    lo = np.minimum(np.minimum(a, b).min(axis=0), [rx0, ry0])
    hi = np.maximum(np.maximum(a, b).max(axis=0), [rx1, ry1])
    span = hi - lo
    while np.prod(np.ceil(span / cell) + 1) > 4e6:
        cell *= 2.0
    shape = (np.ceil(span / cell) + 1).astype(int)
    emin = np.floor((np.minimum(a, b) - lo - _EPS * cell) / cell).astype(int)
    emax = np.floor((np.maximum(a, b) - lo + _EPS * cell) / cell).astype(int)
    emin = np.clip(emin, 0, shape - 1)
    emax = np.clip(emax, 0, shape - 1)
    # every edge is registered in all cells its bounding box overlaps
    edge_ids, cells = [], []
    nx_ = emax[:, 0] - emin[:, 0] + 1
    ny_ = emax[:, 1] - emin[:, 1] + 1
    for e in range(len(a)):
        gx, gy = np.meshgrid(np.arange(emin[e, 0], emax[e, 0] + 1), np.arange(emin[e, 1], emax[e, 1] + 1), indexing="ij")
        cells.append((gx * shape[1] + gy).ravel())
        edge_ids.append(np.full(nx_[e] * ny_[e], e))
    cells = np.concatenate(cells)
    edge_ids = np.concatenate(edge_ids)
    order = np.argsort(cells, kind="stable")
    # polygons registered by bounding box, for point-in-polygon candidates
    bb = idx["bbox"]
    pmin = np.clip(np.floor((bb[:, :2] - lo - _EPS * cell) / cell).astype(int), 0, shape - 1)
    pmax = np.clip(np.floor((bb[:, 2:] - lo + _EPS * cell) / cell).astype(int), 0, shape - 1)
    pcells, pids = [], []
    for i in range(len(bb)):
        gx, gy = np.meshgrid(np.arange(pmin[i, 0], pmax[i, 0] + 1), np.arange(pmin[i, 1], pmax[i, 1] + 1), indexing="ij")
        pcells.append((gx * shape[1] + gy).ravel())
        pids.append(np.full(pcells[-1].size, i))
    pcells, pids = np.concatenate(pcells), np.concatenate(pids)
    porder = np.argsort(pcells, kind="stable")
    idx.update(
        cell_polys=pids[porder],
        poly_ptr=np.searchsorted(pcells[porder], np.arange(shape[0] * shape[1] + 1)),
    )
    idx.update(
        cell=cell,
        origin=lo,
        shape=shape,
        cell_edges=edge_ids[order],
        cell_ptr=np.searchsorted(cells[order], np.arange(shape[0] * shape[1] + 1)),
    )
    return idx


def _segment_cells(idx, p1, p2):
    """(segment, cell) pairs covering every cell each segment passes through."""
    cell, lo, shape = idx["cell"], idx["origin"], idx["shape"]
    u1 = (p1 - lo) / cell
    u2 = (p2 - lo) / cell
    xlo = np.minimum(u1[:, 0], u2[:, 0])
    xhi = np.maximum(u1[:, 0], u2[:, 0])
    c0 = np.floor(xlo - _EPS).astype(int)
    c1 = np.floor(xhi + _EPS).astype(int)
    ncol = c1 - c0 + 1
    seg = np.repeat(np.arange(len(p1)), ncol)
    col = c0[seg] + (np.arange(ncol.sum()) - np.repeat(np.cumsum(ncol) - ncol, ncol))
    # y-range of each segment restricted to the column's x-interval
    dx = u2[seg, 0] - u1[seg, 0]
    dy = u2[seg, 1] - u1[seg, 1]
    xa = np.maximum(col, xlo[seg])
    xb = np.minimum(col + 1, xhi[seg])
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.where(dx != 0, dy / dx, 0.0)
    vertical = dx == 0
    ya = np.where(vertical, u1[seg, 1], u1[seg, 1] + slope * (xa - u1[seg, 0]))
    yb = np.where(vertical, u2[seg, 1], u1[seg, 1] + slope * (xb - u1[seg, 0]))
    r0 = np.floor(np.minimum(ya, yb) - _EPS).astype(int)
    r1 = np.floor(np.maximum(ya, yb) + _EPS).astype(int)
    inside = (col >= 0) & (col < shape[0])
    r0 = np.clip(r0, 0, shape[1] - 1)
    r1 = np.clip(r1, 0, shape[1] - 1)
    nrow = np.where(inside & (r1 >= r0), r1 - r0 + 1, 0)
    seg2 = np.repeat(seg, nrow)
    row = np.repeat(r0, nrow) + (np.arange(nrow.sum()) - np.repeat(np.cumsum(nrow) - nrow, nrow))
    return seg2, np.repeat(col, nrow) * shape[1] + row


def _grid_blocked(idx, p1, p2):
    seg, cells = _segment_cells(idx, p1, p2)
    ptr = idx["cell_ptr"]
    counts = ptr[cells + 1] - ptr[cells]
    seg = np.repeat(seg, counts)
    starts = np.repeat(ptr[cells] - (np.cumsum(counts) - counts), counts)
    edges = idx["cell_edges"][starts + np.arange(counts.sum())]
    pair = np.unique(seg.astype(np.int64) * len(idx["a"]) + edges)
    seg, edges = pair // len(idx["a"]), pair % len(idx["a"])
    hit = segments_intersect(p1[seg], p2[seg], idx["a"][edges], idx["b"][edges])
    out = np.zeros(len(p1), bool)
    out[seg[hit]] = True
    return out


def _points_in_polygons(idx, pts):
    out = np.zeros(len(pts), bool)
    if idx["n_poly"] == 0:
        return out
    bb = idx["bbox"]
    a, b, start = idx["a"], idx["b"], idx["edge_start"]
    cell, lo, shape = idx["cell"], idx["origin"], idx["shape"]
    for s in range(0, len(pts), 65536):
        p = pts[s : s + 65536]
        ij = np.floor((p - lo) / cell).astype(int)
        ok = np.all((ij >= 0) & (ij < shape), axis=1)
        cid = np.where(ok, ij[:, 0] * shape[1] + ij[:, 1], 0)
        ptr = idx["poly_ptr"]
        cnt = np.where(ok, ptr[cid + 1] - ptr[cid], 0)
        pi = np.repeat(np.arange(len(p)), cnt)
        poly = idx["cell_polys"][np.repeat(ptr[cid] - (np.cumsum(cnt) - cnt), cnt) + np.arange(cnt.sum())]
        keep = (
            (p[pi, 0] >= bb[poly, 0]) & (p[pi, 0] <= bb[poly, 2]) & (p[pi, 1] >= bb[poly, 1]) & (p[pi, 1] <= bb[poly, 3])
        )
        pi, poly = pi[keep], poly[keep]
        if pi.size == 0:
            continue
        n_e = start[poly + 1] - start[poly]
        pe = np.repeat(pi, n_e)
        e = np.repeat(start[poly] - (np.cumsum(n_e) - n_e), n_e) + np.arange(n_e.sum())
        pair = np.repeat(np.arange(len(pi)), n_e)
        px, py = p[pe, 0], p[pe, 1]
        ax, ay, bx, by = a[e, 0], a[e, 1], b[e, 0], b[e, 1]
        # crossing number with a rightward ray, plus an on-boundary test
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = ax + (py - ay) * (bx - ax) / (by - ay)
        crossing = straddle & (px < xcross)
        on_edge = (_orient(ax, ay, bx, by, px, py) == 0) & _on_box(ax, ay, bx, by, px, py)
        parity = np.bincount(pair, crossing, minlength=len(pi)) % 2 == 1
        boundary = np.bincount(pair, on_edge, minlength=len(pi)) > 0
        inside = parity | boundary
        out[s + pi[inside]] = True
    return out


def segment_blocked(bset, p1, p2):
    """True if the closed segment p1-p2 meets any polygon (interior or boundary)."""
    return bool(bset.segments_blocked(np.asarray(p1, float)[None], np.asarray(p2, float)[None])[0])


def segments_blocked_bruteforce(bset, p1, p2):
    """Reference implementation: every segment against every edge."""
    p1 = np.atleast_2d(np.asarray(p1, float))
    p2 = np.atleast_2d(np.asarray(p2, float))
    if not bset.polygons:
        return np.zeros(len(p1), bool)
    a, b = bset._index["a"], bset._index["b"]
    out = np.empty(len(p1), bool)
    for s in range(len(p1)):
        out[s] = segments_intersect(p1[s], p2[s], a, b).any()
    return out | bset.contains(p1)


# statistics -----------------------------------------------------------------


def building_stats(bset):
    """Density, mean perimeter and area, and covered fraction of the region."""
    from shapely import box, union_all
    from shapely.geometry import Polygon

    n = len(bset)
    if n == 0:
        return BuildingStats(0.0, 0.0, 0.0, 0.0)
    perim = [float(np.hypot(*(np.roll(p, -1, axis=0) - p).T).sum()) for p in bset.polygons]
    areas = [_signed_area(p) for p in bset.polygons]
    (x0, y0), (x1, y1) = bset.region
    covered = union_all([Polygon(p) for p in bset.polygons]).intersection(box(x0, y0, x1, y1)).area
    return BuildingStats(
        lambda_bldg=n / bset.region_area,
        mean_perimeter=float(np.mean(perim)),
        mean_area=float(np.mean(areas)),
        kappa=covered / bset.region_area,
    )


# sampling -------------------------------------------------------------------


def central_rectangle(bset):
    """The central half-width, half-height rectangle of the region."""
    (x0, y0), (x1, y1) = bset.region
    w, h = x1 - x0, y1 - y0
    return (x0 + w / 4, y0 + h / 4), (x1 - w / 4, y1 - h / 4)


def sample_outdoor(bset, n, rng, rect=None, max_rounds=10_000):
    """n points uniform over the outdoor part of ``rect`` (default: the region)."""
    (x0, y0), (x1, y1) = bset.region if rect is None else rect
    out = np.empty((0, 2))
    for _ in range(max_rounds):
        need = n - len(out)
        if need <= 0:
            break
        pts = np.column_stack([rng.uniform(x0, x1, 2 * need + 8), rng.uniform(y0, y1, 2 * need + 8)])
        out = np.vstack([out, pts[~bset.contains(pts)]])
    else:
        raise GeometryError("could not find outdoor points (region fully covered?)")
    return out[:n]


def _in_region(bset, pts):
    (x0, y0), (x1, y1) = bset.region
    return (pts[:, 0] >= x0) & (pts[:, 0] <= x1) & (pts[:, 1] >= y0) & (pts[:, 1] <= y1)


def empirical_p_los(bset, sample_pairs, bin_width=10.0, rng=None, d_max=None):
    """LOS fraction against link length from random outdoor point pairs.

    The first point is uniform over the outdoor part of the central rectangle;
    the second lies at a uniform distance in (0, d_max] and uniform bearing and
    is redrawn until it is outdoors and inside the region. Pairs are binned by
    distance (bin centres reported, with per-bin counts).
    """
    if sample_pairs < 10_000:
        raise ValueError("sample_pairs must be at least 10^4")
    rng = np.random.default_rng(rng)
    (x0, y0), (x1, y1) = bset.region
    if d_max is None:
        d_max = min(x1 - x0, y1 - y0) / 4.0
    p1 = sample_outdoor(bset, sample_pairs, rng, central_rectangle(bset))
    p2 = np.empty_like(p1)
    dist = np.empty(sample_pairs)
    todo = np.arange(sample_pairs)
    for _ in range(10_000):
        if todo.size == 0:
            break
        d = rng.uniform(0.0, d_max, todo.size)
        d = np.where(d == 0.0, d_max, d)
        th = rng.uniform(0.0, 2 * math.pi, todo.size)
        cand = p1[todo] + d[:, None] * np.column_stack([np.cos(th), np.sin(th)])
        ok = _in_region(bset, cand) & ~bset.contains(cand)
        p2[todo[ok]] = cand[ok]
        dist[todo[ok]] = d[ok]
        todo = todo[~ok]
    else:
        raise GeometryError("could not place outdoor pair endpoints")
    los = ~bset.segments_blocked(p1, p2)
    edges = np.arange(0.0, d_max + bin_width, bin_width)
    which = np.minimum(np.digitize(dist, edges) - 1, len(edges) - 2)
    counts = np.bincount(which, minlength=len(edges) - 1)
    hits = np.bincount(which, los, minlength=len(edges) - 1)
    keep = counts > 0
    centres = 0.5 * (edges[:-1] + edges[1:])
    return EmpiricalTable(
        tuple(centres[keep].tolist()), tuple((hits[keep] / counts[keep]).tolist()), tuple(counts[keep].tolist())
    )


def fit_p_l(bset, r_b, sample_users, rng=None, points_per_user=256):
    """Mean over outdoor users of the LOS share of outdoor area within r_b."""
    if r_b <= 0:
        raise ValueError("r_b must be positive")
    rng = np.random.default_rng(rng)
    users = sample_outdoor(bset, sample_users, rng, central_rectangle(bset))
    fracs = []
    for u in users:
        rad = r_b * np.sqrt(rng.random(points_per_user))
        th = rng.uniform(0.0, 2 * math.pi, points_per_user)
        pts = u + rad[:, None] * np.column_stack([np.cos(th), np.sin(th)])
        pts = pts[_in_region(bset, pts)]
        pts = pts[~bset.contains(pts)]
        if len(pts) == 0:
            continue
        fracs.append(1.0 - bset.segments_blocked(np.broadcast_to(u, pts.shape), pts).mean())
    if not fracs:
        raise GeometryError("no outdoor samples around any user")
    return float(np.mean(fracs))


def boolean_rectangle_field(region, lambda_bldg, length_range, width_range, rng=None):
    """Rectangles with uniform sizes and orientations centred on a PPP.

    Centres are drawn over the region grown by the largest half-diagonal so
    that coverage near the border is not thinned.
    """
    rng = np.random.default_rng(rng)
    (x0, y0), (x1, y1) = region
    pad = 0.5 * math.hypot(length_range[1], width_range[1])
    area = (x1 - x0 + 2 * pad) * (y1 - y0 + 2 * pad)
    n = rng.poisson(lambda_bldg * area)
    cx = rng.uniform(x0 - pad, x1 + pad, n)
    cy = rng.uniform(y0 - pad, y1 + pad, n)
    length = rng.uniform(*length_range, n)
    width = rng.uniform(*width_range, n)
    th = rng.uniform(0.0, math.pi, n)
    corners = np.array([[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]])
    polys = []
    for i in range(n):
        local = corners * [length[i], width[i]]
        c, s = math.cos(th[i]), math.sin(th[i])
        rot = local @ np.array([[c, s], [-s, c]])
        polys.append(rot + [cx[i], cy[i]])
    return BuildingSet.from_polygons(polys, region)


# file format ----------------------------------------------------------------


def load_buildings(path):
    """Read a YAML document with ``region`` and ``buildings`` keys."""
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "region" not in doc:
        raise GeometryError("building file must be a mapping with 'region' and 'buildings'")
    extra = set(doc) - {"region", "buildings"}
    if extra:
        raise GeometryError(f"unknown keys in building file: {sorted(extra)}")
    return BuildingSet.from_polygons(doc.get("buildings") or [], doc["region"])


def save_buildings(bset, path):
    doc = {
        "region": [list(bset.region[0]), list(bset.region[1])],
        "buildings": [p.tolist() for p in bset.polygons],
    }
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, default_flow_style=None, sort_keys=False)
