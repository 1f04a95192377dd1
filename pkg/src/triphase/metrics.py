"""Microstructural metrics over segmented three-phase volumes.

Computes, per subvolume: phase volume fractions, volume-weighted particle
sizes from a covering-sphere thickness map, interfacial area densities,
geometric tortuosity factors, formation factors, and total/active triple
phase boundary densities.

Conventions (pinned so the brute-force test oracles agree):
  - phase connectivity for components and geodesics: 26 (configurable 6);
  - interfacial areas count voxel faces (6-neighborhood) with an optional
    constant correction factor;
  - a lattice edge is a TPB edge when its adjacent voxels (up to 4) carry
    all three phases; lengths are edge counts times spacing;
  - geodesic tortuosity along an axis is the mean over reachable
    outlet-face voxels of (graph distance + one spacing) / (axis length),
    where the extra spacing accounts for the half-voxel entry and exit;
  - local thickness treats domain faces as phase boundaries: spheres may
    not extend outside the volume.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

try:
    import numba
except ImportError:  # pragma: no cover - slower pure-numpy painting
    numba = None

from .volume import PHASE_NAMES, PHASES, SegmentedVolume

FACE_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")

PAIR_NAMES = {(1, 2): "pore_ni", (1, 3): "pore_ysz", (2, 3): "ni_ysz"}


@dataclass(frozen=True)
class MetricOptions:
    """Knobs shared by the connectivity-sensitive metrics.

    `active_policy` is either "any_face" (a phase network is active when
    its component touches any domain face) or a mapping phase -> list of
    face names from FACE_NAMES.
    """

    connectivity: int = 26
    active_policy: object = "any_face"
    area_correction: float = 1.0

    def __post_init__(self):
        if self.connectivity not in (6, 26):
            raise ValueError(f"connectivity must be 6 or 26, got {self.connectivity}")
        if self.active_policy != "any_face":
            for p, faces in dict(self.active_policy).items():
                if int(p) not in PHASES or not set(faces) <= set(FACE_NAMES):
                    raise ValueError(f"bad active policy entry {p}: {faces}")

    def as_dict(self) -> dict:
        policy = self.active_policy
        if policy != "any_face":
            policy = {str(p): list(v) for p, v in dict(policy).items()}
        return {
            "connectivity": self.connectivity,
            "active_policy": policy,
            "area_correction": self.area_correction,
        }


@dataclass(frozen=True)
class ComponentLabeling:
    """Connected components of one phase: ids (0 outside the phase,
    1..count inside), per-component voxel counts, per-component face-touch
    flags ordered as FACE_NAMES."""

    ids: np.ndarray
    count: int
    sizes: np.ndarray
    touches: np.ndarray


@dataclass(frozen=True)
class TortuosityResult:
    """Per-axis geodesic tortuosity factors (None = non-percolating) and
    their mean over the percolating axes (None if none percolate)."""

    axes: tuple
    mean: float | None


@dataclass
class MetricsRecord:
    """All metrics of one subvolume; non-percolating entries are None."""

    volume_id: str
    dims: tuple
    spacing: float
    volume_fraction: dict
    particle_size_mean: dict
    particle_size_std: dict
    tortuosity: dict
    tortuosity_axes: dict
    formation_factor: dict
    interfacial_area: dict
    tpb_total: float
    tpb_active: float
    options: dict = field(default_factory=dict)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 26:
        return np.ones((3, 3, 3), dtype=bool)
    return ndimage.generate_binary_structure(3, 1)


# ---------------------------------------------------------------------------
# Fractions, components, areas
# ---------------------------------------------------------------------------

def volume_fractions(seg: SegmentedVolume) -> dict:
    """Fraction of voxels per phase; sums to 1 by construction."""
    counts = np.bincount(seg.data.ravel(), minlength=4)
    total = seg.data.size
    return {p: counts[p] / total for p in PHASES}


def connected_components(
    seg: SegmentedVolume, phase: int, connectivity: int = 26
) -> ComponentLabeling:
    """Label the connected components of one phase and flag face contact."""
    mask = seg.data == phase
    ids, count = ndimage.label(mask, structure=_structure(connectivity))
    sizes = np.bincount(ids.ravel(), minlength=count + 1)
    sizes[0] = 0
    touches = np.zeros((count + 1, 6), dtype=bool)
    faces = (
        ids[0, :, :], ids[-1, :, :],
        ids[:, 0, :], ids[:, -1, :],
        ids[:, :, 0], ids[:, :, -1],
    )
    for f, face in enumerate(faces):
        for cid in np.unique(face):
            if cid > 0:
                touches[cid, f] = True
    return ComponentLabeling(ids, int(count), sizes, touches)


def active_phase_mask(seg: SegmentedVolume, phase: int, options: MetricOptions) -> np.ndarray:
    """Voxels of `phase` whose component is boundary-connected under the
    active-connectivity policy."""
    comp = connected_components(seg, phase, options.connectivity)
    if options.active_policy == "any_face":
        wanted = np.arange(6)
    else:
        names = dict(options.active_policy).get(phase) or dict(options.active_policy).get(
            str(phase), []
        )
        wanted = np.array([FACE_NAMES.index(n) for n in names], dtype=int)
    if wanted.size == 0:
        active_ids = np.zeros(comp.count + 1, dtype=bool)
    else:
        active_ids = comp.touches[:, wanted].any(axis=1)
    active_ids[0] = False
    return active_ids[comp.ids]


def interfacial_face_count(seg: SegmentedVolume, phase_a: int, phase_b: int) -> int:
    """Number of voxel faces separating phases a and b (6-neighborhood)."""
    if phase_a == phase_b:
        raise ValueError("interfacial area requires two distinct phases")
    data = seg.data
    count = 0
    for axis in range(3):
        left = np.moveaxis(data, axis, 0)[:-1]
        right = np.moveaxis(data, axis, 0)[1:]
        count += int(np.sum((left == phase_a) & (right == phase_b)))
        count += int(np.sum((left == phase_b) & (right == phase_a)))
    return count


def interfacial_area(
    seg: SegmentedVolume, phase_a: int, phase_b: int, correction: float = 1.0
) -> float:
    """Interfacial area density between two phases (um^2 / um^3)."""
    count = interfacial_face_count(seg, phase_a, phase_b)
    total_volume = seg.data.size * seg.spacing ** 3
    return count * seg.spacing ** 2 * correction / total_volume


# ---------------------------------------------------------------------------
# Local thickness / particle size
# ---------------------------------------------------------------------------

def _fine_interior(mask: np.ndarray) -> np.ndarray:
    """Indicator of half-grid points strictly inside the phase region.

    The half grid holds points at integer multiples of half a voxel; a
    point is interior when every incident voxel cube is phase and the
    point is off the domain boundary.  Separable per axis: odd planes copy
    the cube values, even planes require both straddling cubes.
    """
    out = mask
    for axis in range(3):
        m = np.moveaxis(out, axis, 0)
        n = m.shape[0]
        fine = np.zeros((2 * n + 1,) + m.shape[1:], dtype=bool)
        fine[1::2] = m
        fine[2:-1:2] = m[:-1] & m[1:]
        out = np.moveaxis(fine, 0, axis)
    return out


def local_thickness(seg: SegmentedVolume, phase: int) -> np.ndarray:
    """Covering-sphere diameter (um) for every voxel of `phase`, 0 elsewhere.

    Candidate sphere centers live on the half grid (integer multiples of
    half a voxel), which keeps slabs of both parities exact.  A candidate
    carries two exact Euclidean distances, both from distance transforms
    on the refined lattice:

      - its diameter value, twice the distance to the background region
        (voxels as unit cubes, domain faces as boundaries), so a slab of
        thickness t scores exactly t and an isolated voxel exactly 1;
      - its covering radius, the distance to the nearest background voxel
        center (capped half a voxel outside domain faces), the classical
        center-membership reach, so a digitized ball is covered wall to
        wall by its inscribed sphere.

    A voxel's thickness is the largest diameter among candidates covering
    its center.  Candidates whose coverage and value are both dominated by
    a neighbor are pruned before painting; all geometric comparisons run
    in exact integer arithmetic on squared fine-lattice distances.
    """
    mask = seg.data == phase
    if not mask.any():
        return np.zeros(seg.dims, dtype=np.float64)
    # diameter: distance to the cube-union boundary (zero outside interior)
    region = ndimage.distance_transform_edt(_fine_interior(mask))
    value2 = np.rint(region * region).astype(np.int64)
    # coverage: distance to nearest background voxel center, one-step pad
    # so the border shell sits half a voxel outside the domain faces
    padded_shape = tuple(2 * n + 3 for n in mask.shape)
    ok = np.zeros(padded_shape, dtype=bool)
    ok[1:-1, 1:-1, 1:-1] = True
    ok[2:-2:2, 2:-2:2, 2:-2:2] = mask
    reach = ndimage.distance_transform_edt(ok)[1:-1, 1:-1, 1:-1]
    reach2 = np.rint(reach * reach).astype(np.int64)

    keep = value2 > 0
    # a candidate must cover at least one voxel center (odd-index point)
    parity = np.ogrid[0 : keep.shape[0], 0 : keep.shape[1], 0 : keep.shape[2]]
    nearest2 = sum(((p + 1) % 2) ** 2 for p in parity)
    keep &= nearest2 <= reach2

    coords = np.argwhere(keep)
    # fine-lattice region distance equals the diameter in voxel units
    diameters = np.sqrt(value2[keep].astype(np.float64))
    reach2 = reach2[keep]

    thickness = np.zeros(seg.dims, dtype=np.float64)
    _paint_covering_spheres(thickness, coords, reach2, diameters)
    thickness[~mask] = 0.0
    return thickness * seg.spacing


def _paint_spheres_py(thickness, coords, reach2, diameters):
    nx, ny, nz = thickness.shape
    for (cx, cy, cz), k, diam in zip(coords, reach2, diameters):
        r = math.sqrt(k)
        spans = []
        for c, n in zip((cx, cy, cz), (nx, ny, nz)):
            lo = max(0, math.ceil((c - r - 1) / 2))
            hi = min(n - 1, math.floor((c + r - 1) / 2))
            if lo > hi:
                spans = None
                break
            spans.append((lo, hi))
        if spans is None:
            continue
        (xl, xh), (yl, yh), (zl, zh) = spans
        dx2 = (2 * np.arange(xl, xh + 1) + 1 - cx) ** 2
        dy2 = (2 * np.arange(yl, yh + 1) + 1 - cy) ** 2
        dz2 = (2 * np.arange(zl, zh + 1) + 1 - cz) ** 2
        inside = (
            dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
        ) <= k
        box = thickness[xl : xh + 1, yl : yh + 1, zl : zh + 1]
        np.maximum(box, np.where(inside, diam, 0.0), out=box)


if numba is not None:

    @numba.njit(cache=True)
    def _paint_spheres_jit(thickness, coords, reach2, diameters):  # pragma: no cover
        nx, ny, nz = thickness.shape
        for i in range(coords.shape[0]):
            cx, cy, cz = coords[i, 0], coords[i, 1], coords[i, 2]
            k = reach2[i]
            diam = diameters[i]
            r = math.sqrt(k)
            xl = max(0, int(math.ceil((cx - r - 1) / 2)))
            xh = min(nx - 1, int(math.floor((cx + r - 1) / 2)))
            yl = max(0, int(math.ceil((cy - r - 1) / 2)))
            yh = min(ny - 1, int(math.floor((cy + r - 1) / 2)))
            zl = max(0, int(math.ceil((cz - r - 1) / 2)))
            zh = min(nz - 1, int(math.floor((cz + r - 1) / 2)))
            for vx in range(xl, xh + 1):
                dx2 = (2 * vx + 1 - cx) ** 2
                for vy in range(yl, yh + 1):
                    dy2 = (2 * vy + 1 - cy) ** 2
                    if dx2 + dy2 > k:
                        continue
                    for vz in range(zl, zh + 1):
                        dz2 = (2 * vz + 1 - cz) ** 2
                        if dx2 + dy2 + dz2 <= k and thickness[vx, vy, vz] < diam:
                            thickness[vx, vy, vz] = diam


def _paint_covering_spheres(thickness, coords, reach2, diameters):
    """Max-paint each candidate's diameter onto the voxel centers it covers."""
    if numba is not None:
        _paint_spheres_jit(
            thickness,
            np.ascontiguousarray(coords, dtype=np.int64),
            np.ascontiguousarray(reach2, dtype=np.int64),
            np.ascontiguousarray(diameters, dtype=np.float64),
        )
    else:
        _paint_spheres_py(thickness, coords, reach2, diameters)


def particle_size(seg: SegmentedVolume, phase: int) -> tuple[float, float]:
    """Volume-weighted mean and standard deviation of the covering-sphere
    diameter over the voxels of `phase` (um)."""
    mask = seg.data == phase
    if not mask.any():
        raise ValueError(f"phase {phase} is empty")
    values = local_thickness(seg, phase)[mask]
    return float(values.mean()), float(values.std())


# ---------------------------------------------------------------------------
# Tortuosity and formation factor
# ---------------------------------------------------------------------------

# lexicographically positive half of the 26-neighborhood (13 offsets)
_HALF_OFFSETS_26 = [
    (0, 0, 1), (0, 1, -1), (0, 1, 0), (0, 1, 1),
    (1, -1, -1), (1, -1, 0), (1, -1, 1),
    (1, 0, -1), (1, 0, 0), (1, 0, 1),
    (1, 1, -1), (1, 1, 0), (1, 1, 1),
]
_HALF_OFFSETS_6 = [(0, 0, 1), (0, 1, 0), (1, 0, 0)]


def _phase_graph(mask: np.ndarray, connectivity: int):
    """Sparse within-phase voxel graph, edge weights in voxel units.

    Weights are the Euclidean step lengths {1, sqrt 2, sqrt 3}; keeping
    them unit-spacing makes axis-aligned path sums float-exact, so
    straight channels score tortuosity 1 exactly.
    """
    ids = -np.ones(mask.shape, dtype=np.int64)
    ids[mask] = np.arange(int(mask.sum()))
    offsets = _HALF_OFFSETS_26 if connectivity == 26 else _HALF_OFFSETS_6
    rows, cols, weights = [], [], []
    for off in offsets:
        src = tuple(slice(max(o, 0), d + min(o, 0)) for o, d in zip(off, mask.shape))
        dst = tuple(slice(max(-o, 0), d + min(-o, 0)) for o, d in zip(off, mask.shape))
        both = mask[src] & mask[dst]
        if not both.any():
            continue
        rows.append(ids[src][both])
        cols.append(ids[dst][both])
        w = math.sqrt(off[0] ** 2 + off[1] ** 2 + off[2] ** 2)
        weights.append(np.full(int(both.sum()), w))
    n = int(mask.sum())
    if rows:
        graph = csr_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
    else:
        graph = csr_matrix((n, n))
    return ids, graph


def tortuosity_factor(
    seg: SegmentedVolume, phase: int, connectivity: int = 26
) -> TortuosityResult:
    """Geodesic tortuosity of a phase along each axis.

    Along an axis, each flow direction scores the mean over reachable
    exit-face voxels of (within-phase graph distance from the entry face,
    in voxel units, + 1) / (axis voxel count); the +1 covers the
    half-voxel entry and exit segments, so a straight channel scores 1
    exactly.  The axis factor is the average of the two directions, which
    makes the per-axis values permute covariantly under cube symmetries.
    Axes without a reachable exit report None.
    """
    mask = seg.data == phase
    if not mask.any():
        return TortuosityResult((None, None, None), None)
    ids, graph = _phase_graph(mask, connectivity)

    def directed_tau(axis: int, forward: bool) -> float | None:
        n = mask.shape[axis]
        planes = np.moveaxis(ids, axis, 0)
        entry, exit_ = (planes[0], planes[-1]) if forward else (planes[-1], planes[0])
        sources = entry[entry >= 0]
        targets = exit_[exit_ >= 0]
        if sources.size == 0 or targets.size == 0:
            return None
        dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
        reached = dist[targets]
        reached = reached[np.isfinite(reached)]
        if reached.size == 0:
            return None
        return float(np.mean((reached + 1.0) / n))

    out = []
    for axis in range(3):
        fwd = directed_tau(axis, True)
        bwd = directed_tau(axis, False)
        # reachability is symmetric on an undirected graph
        out.append(None if fwd is None else (fwd + bwd) / 2.0)
    defined = [t for t in out if t is not None]
    return TortuosityResult(tuple(out), float(np.mean(defined)) if defined else None)


def formation_factor(theta: float, tau: float | None) -> float | None:
    """Phase fraction over geodesic tortuosity; None for non-percolating."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"volume fraction {theta} outside [0, 1]")
    if theta == 0.0:
        return 0.0
    if tau is None:
        return None
    if tau < 1.0:
        raise ValueError(f"tortuosity factor {tau} below 1")
    return theta / tau


# ---------------------------------------------------------------------------
# Triple phase boundary density
# ---------------------------------------------------------------------------

def _edge_quads(data: np.ndarray, axis: int):
    """The four transverse-shifted views adjacent to interior lattice edges
    parallel to `axis`; each view has shape (n_axis, n_t1 - 1, n_t2 - 1)."""
    m = np.moveaxis(data, axis, 0)
    return (m[:, :-1, :-1], m[:, 1:, :-1], m[:, :-1, 1:], m[:, 1:, 1:])


def tpb_counts(seg: SegmentedVolume, options: MetricOptions = MetricOptions()) -> tuple[int, int]:
    """Counts of (total, active) triple-phase-boundary lattice edges.

    An edge qualifies when the voxels sharing it include all three phases;
    it is active when each phase is represented at the edge by at least
    one voxel from a boundary-connected component under the policy.
    """
    data = seg.data
    active = {p: active_phase_mask(seg, p, options) for p in PHASES}
    total = 0
    active_count = 0
    for axis in range(3):
        quads = _edge_quads(data, axis)
        act_quads = {p: _edge_quads(active[p], axis) for p in PHASES}
        has = {p: np.zeros(quads[0].shape, dtype=bool) for p in PHASES}
        has_active = {p: np.zeros(quads[0].shape, dtype=bool) for p in PHASES}
        for i, q in enumerate(quads):
            for p in PHASES:
                here = q == p
                has[p] |= here
                has_active[p] |= here & act_quads[p][i]
        is_tpb = has[1] & has[2] & has[3]
        total += int(is_tpb.sum())
        active_count += int((is_tpb & has_active[1] & has_active[2] & has_active[3]).sum())
    return total, active_count


def tpb_density(
    seg: SegmentedVolume, options: MetricOptions = MetricOptions()
) -> tuple[float, float]:
    """Total and active TPB length density (um / um^3)."""
    total, active = tpb_counts(seg, options)
    volume = seg.data.size * seg.spacing ** 3
    return total * seg.spacing / volume, active * seg.spacing / volume


# ---------------------------------------------------------------------------
# Full record
# ---------------------------------------------------------------------------

def metrics_report(
    seg: SegmentedVolume,
    options: MetricOptions = MetricOptions(),
    volume_id: str = "volume",
) -> MetricsRecord:
    """Assemble every metric for one subvolume.

    Non-percolating or absent phases flag their tortuosity and particle
    size as None instead of failing the whole record.
    """
    theta = volume_fractions(seg)
    size_mean, size_std, tau_mean, tau_axes, kform = {}, {}, {}, {}, {}
    for p in PHASES:
        if theta[p] > 0:
            m, s = particle_size(seg, p)
            size_mean[p], size_std[p] = m, s
        else:
            size_mean[p], size_std[p] = None, None
        tort = tortuosity_factor(seg, p, options.connectivity)
        tau_mean[p] = tort.mean
        tau_axes[p] = tort.axes
        kform[p] = formation_factor(theta[p], tort.mean)
    areas = {
        pair: interfacial_area(seg, pair[0], pair[1], options.area_correction)
        for pair in PAIR_NAMES
    }
    tpb_tot, tpb_act = tpb_density(seg, options)
    return MetricsRecord(
        volume_id=volume_id,
        dims=seg.dims,
        spacing=seg.spacing,
        volume_fraction=theta,
        particle_size_mean=size_mean,
        particle_size_std=size_std,
        tortuosity=tau_mean,
        tortuosity_axes=tau_axes,
        formation_factor=kform,
        interfacial_area=areas,
        tpb_total=tpb_tot,
        tpb_active=tpb_act,
        options=options.as_dict(),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    ["id", "nx", "ny", "nz", "spacing"]
    + [f"vf_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"size_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"size_std_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"tau_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"k_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"area_{PAIR_NAMES[pair]}" for pair in PAIR_NAMES]
    + ["tpb_total", "tpb_active"]
)

HEADLINE_METRICS = (
    [f"vf_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"size_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"tau_{PHASE_NAMES[p]}" for p in PHASES]
    + [f"area_{PAIR_NAMES[pair]}" for pair in PAIR_NAMES]
    + [f"k_{PHASE_NAMES[p]}" for p in PHASES]
    + ["tpb_total"]
)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def record_to_csv_row(rec: MetricsRecord) -> list[str]:
    row = [rec.volume_id, str(rec.dims[0]), str(rec.dims[1]), str(rec.dims[2]), repr(rec.spacing)]
    row += [_fmt(rec.volume_fraction[p]) for p in PHASES]
    row += [_fmt(rec.particle_size_mean[p]) for p in PHASES]
    row += [_fmt(rec.particle_size_std[p]) for p in PHASES]
    row += [_fmt(rec.tortuosity[p]) for p in PHASES]
    row += [_fmt(rec.formation_factor[p]) for p in PHASES]
    row += [_fmt(rec.interfacial_area[pair]) for pair in PAIR_NAMES]
    row += [_fmt(rec.tpb_total), _fmt(rec.tpb_active)]
    return row


def records_to_csv(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(",".join(record_to_csv_row(rec)))
    return "\n".join(lines) + "\n"


def record_to_json(rec: MetricsRecord) -> str:
    d = {
        "id": rec.volume_id,
        "dims": list(rec.dims),
        "spacing": rec.spacing,
        "volume_fraction": {PHASE_NAMES[p]: rec.volume_fraction[p] for p in PHASES},
        "particle_size_mean": {PHASE_NAMES[p]: rec.particle_size_mean[p] for p in PHASES},
        "particle_size_std": {PHASE_NAMES[p]: rec.particle_size_std[p] for p in PHASES},
        "tortuosity": {PHASE_NAMES[p]: rec.tortuosity[p] for p in PHASES},
        "tortuosity_axes": {
            PHASE_NAMES[p]: list(rec.tortuosity_axes[p]) for p in PHASES
        },
        "formation_factor": {PHASE_NAMES[p]: rec.formation_factor[p] for p in PHASES},
        "interfacial_area": {PAIR_NAMES[pair]: rec.interfacial_area[pair] for pair in PAIR_NAMES},
        "tpb_density": {"total": rec.tpb_total, "active": rec.tpb_active},
        "percolating": {PHASE_NAMES[p]: rec.tortuosity[p] is not None for p in PHASES},
        "options": rec.options,
    }
    return json.dumps(d, indent=2) + "\n"
