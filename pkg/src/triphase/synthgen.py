"""Baseline synthetic three-phase microstructures by ellipsoid packing.

Solid phases (Ni=2, YSZ=3) are built from ellipsoids whose
equivalent-sphere diameters follow per-phase log-normal distributions
given by their arithmetic mean and standard deviation; pores are the
unpacked complement.  Placement is sequential (largest first) with a
soft-overlap acceptance rule, and the voxelizer assigns contested voxels
to the ellipsoid whose normalized signed distance is smallest.

`grayscale_render` closes the loop back to the segmentation pipeline by
mapping phase labels to configurable grayscale intensities plus optional
Gaussian noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .volume import DEFAULT_SPACING_UM, GrayscaleVolume, SegmentedVolume

SOLID_PHASES = (2, 3)


@dataclass(frozen=True)
class SynthConfig:
    """Targets and knobs for one synthetic volume."""

    fractions: tuple = (0.21, 0.37, 0.42)  # pore, Ni, YSZ
    size_moments: dict = field(
        default_factory=lambda: {2: (0.55, 0.15), 3: (0.50, 0.12)}
    )  # phase -> (arithmetic mean um, std um) of the log-normal diameters
    dims: tuple = (96, 96, 96)
    spacing: float = DEFAULT_SPACING_UM
    aspect_range: tuple = (0.7, 1.3)
    seed: int = 0
    overlap_threshold: float = 0.3
    max_retries: int = 64
    overlap_samples: int = 96
    fill_rounds: int = 12
    repair_rounds: int = 4

    def __post_init__(self):
        f = self.fractions
        if len(f) != 3 or any(not 0 < x < 1 for x in f):
            raise ValueError(f"fractions must be three values in (0,1), got {f}")
        if abs(sum(f) - 1.0) > 1e-9:
            raise ValueError(f"fractions must sum to 1, got sum {sum(f)}")
        for p in SOLID_PHASES:
            mean, std = self.size_moments[p]
            if mean <= 0 or std < 0:
                raise ValueError(f"phase {p} moments must be positive (std >= 0)")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.dims, dtype=float) * self.spacing


@dataclass
class Ellipsoid:
    """One grain: semi-axes and orientation in um; center None until placed."""

    axes: np.ndarray
    rotation: np.ndarray  # rows are the principal directions (world -> body)
    phase: int
    center: np.ndarray | None = None
    overlap_est: float = 0.0
    inside_est: float = 1.0

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.axes))

    @property
    def net_volume(self) -> float:
        """Placed volume net of domain clipping and prior-solid overlap."""
        return self.volume * self.inside_est * (1.0 - self.overlap_est)


@dataclass
class EllipsoidPack:
    ellipsoids: list
    extent: np.ndarray

    def solid_volume(self, phase: int) -> float:
        return sum(e.volume for e in self.ellipsoids if e.phase == phase)

    def net_solid_volume(self, phase: int) -> float:
        return sum(e.net_volume for e in self.ellipsoids if e.phase == phase)


def _lognormal_params(mean: float, std: float) -> tuple[float, float]:
    """Underlying normal (mu, sigma) matching arithmetic mean and std."""
    if std == 0.0:
        return math.log(mean), 0.0
    sigma2 = math.log(1.0 + (std / mean) ** 2)
    return math.log(mean) - sigma2 / 2.0, math.sqrt(sigma2)


def _random_rotation(rng) -> np.ndarray:
    """Haar-uniform rotation matrix from a QR decomposition."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q.T


def sample_ellipsoids(
    cfg: SynthConfig, rng, targets: dict | None = None
) -> EllipsoidPack:
    """Draw unplaced ellipsoids until each solid phase reaches its target volume.

    Diameters are log-normal with the configured arithmetic moments; two
    axes get aspect ratios uniform in `aspect_range`, volume preserved.
    Each draw's phase is chosen with probability proportional to the
    remaining volume deficit, so expected phase volumes track the targets.
    """
    domain = float(np.prod(cfg.extent))
    if targets is None:
        targets = {p: cfg.fractions[p - 1] * domain for p in SOLID_PHASES}
    remaining = {p: float(v) for p, v in targets.items() if v > 0}
    out = []
    while remaining:
        phases = sorted(remaining)
        weights = np.array([remaining[p] for p in phases])
        phase = int(rng.choice(phases, p=weights / weights.sum()))
        mean, std = cfg.size_moments[phase]
        if std == 0.0:
            diameter = mean
        else:
            mu, sigma = _lognormal_params(mean, std)
            diameter = float(rng.lognormal(mu, sigma))
        alpha, beta = rng.uniform(*cfg.aspect_range, size=2)
        axes = 0.5 * diameter * np.array([alpha, beta, 1.0 / (alpha * beta)])
        ell = Ellipsoid(axes=axes, rotation=_random_rotation(rng), phase=phase)
        out.append(ell)
        remaining[phase] -= ell.volume
        if remaining[phase] <= 0:
            del remaining[phase]
    return EllipsoidPack(out, cfg.extent.copy())


def _unit_ball_points(rng, n: int) -> np.ndarray:
    """Uniform sample points inside the unit ball."""
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * rng.uniform(0.0, 1.0, size=(n, 1)) ** (1.0 / 3.0)


class _PlacedIndex:
    """Growing arrays of placed ellipsoids for vectorized overlap queries."""

    def __init__(self, ellipsoids=()):
        self.centers = np.zeros((0, 3))
        self.axes = np.zeros((0, 3))
        self.rotations = np.zeros((0, 3, 3))
        self.reach = np.zeros(0)
        self.phases = np.zeros(0, dtype=int)
        for e in ellipsoids:
            self.add(e)

    def add(self, e: Ellipsoid) -> None:
        self.centers = np.concatenate([self.centers, e.center[None]])
        self.axes = np.concatenate([self.axes, e.axes[None]])
        self.rotations = np.concatenate([self.rotations, e.rotation[None]])
        self.reach = np.concatenate([self.reach, [float(e.axes.max())]])
        self.phases = np.concatenate([self.phases, [e.phase]])

    def estimate(self, candidate, center, extent, rng, samples):
        """Monte-Carlo overlap estimates for a candidate placement.

        Points are sampled uniformly inside the candidate; returns
        (overlap fraction vs any placed solid, overlap fraction vs placed
        solids of other phases, in-domain fraction).
        """
        pts = _unit_ball_points(rng, samples) * candidate.axes
        pts = pts @ candidate.rotation + center
        inside_frac = float(np.mean(np.all((pts >= 0) & (pts <= extent), axis=1)))
        if len(self.centers) == 0:
            return 0.0, 0.0, inside_frac
        reach = float(candidate.axes.max())
        near = np.flatnonzero(
            np.linalg.norm(self.centers - center, axis=1) <= reach + self.reach
        )
        if near.size == 0:
            return 0.0, 0.0, inside_frac
        rel = pts[None, :, :] - self.centers[near, None, :]
        body = np.einsum("kij,kpj->kpi", self.rotations[near], rel)
        body /= self.axes[near, None, :]
        inside = (body * body).sum(axis=-1) <= 1.0
        covered = inside.any(axis=0)
        cross = inside[self.phases[near] != candidate.phase].any(axis=0)
        return float(covered.mean()), float(cross.mean()), inside_frac


def overlap_fraction(
    candidate: Ellipsoid, center: np.ndarray, placed: list, extent: np.ndarray, rng,
    samples: int,
) -> tuple[float, float]:
    """Monte-Carlo (overlap fraction vs placed solids, in-domain fraction)."""
    any_ov, _, inside = _PlacedIndex(placed).estimate(
        candidate, center, extent, rng, samples
    )
    return any_ov, inside


def pack(
    sized: EllipsoidPack, cfg: SynthConfig, rng, placed: EllipsoidPack | None = None
) -> EllipsoidPack:
    """Place ellipsoids sequentially, largest first.

    Candidate centers are uniform over the domain; a candidate is accepted
    once its soft overlap against previously placed solids of the *other*
    phase is at or below the threshold (same-phase contact merges grains
    and is free), and after the retry budget the best candidate seen is
    taken (dense packings require tolerated overlap).
    """
    extent = cfg.extent
    largest = max((float(e.axes.max()) for e in sized.ellipsoids), default=0.0)
    if largest > float(extent.min()):
        raise ValueError(
            f"domain extent {tuple(extent)} um cannot fit an ellipsoid with "
            f"semi-axis {largest:.3f} um"
        )
    out = list(placed.ellipsoids) if placed is not None else []
    index = _PlacedIndex(out)
    order = sorted(sized.ellipsoids, key=lambda e: e.volume, reverse=True)
    for ell in order:
        best = None
        for _ in range(cfg.max_retries):
            center = rng.uniform(0.0, 1.0, 3) * extent
            any_ov, cross_ov, inside = index.estimate(
                ell, center, extent, rng, cfg.overlap_samples
            )
            if best is None or cross_ov < best[1]:
                best = (any_ov, cross_ov, inside, center)
            if cross_ov <= cfg.overlap_threshold:
                break
        any_ov, cross_ov, inside, center = best
        done = replace(ell, center=center, overlap_est=any_ov, inside_est=inside)
        out.append(done)
        index.add(done)
    return EllipsoidPack(out, extent.copy())


def voxelize(pack_: EllipsoidPack, cfg: SynthConfig) -> SegmentedVolume:
    """Rasterize a placed pack; unclaimed voxels become pore (phase 1).

    A voxel takes the phase of the ellipsoid with the smallest normalized
    signed distance at its center; earlier ellipsoids win exact ties.
    """
    nx, ny, nz = cfg.dims
    spacing = cfg.spacing
    best = np.full(cfg.dims, np.inf, dtype=np.float32)
    label = np.ones(cfg.dims, dtype=np.uint8)
    axes_coords = [
        (np.arange(n, dtype=np.float64) + 0.5) * spacing for n in (nx, ny, nz)
    ]
    for ell in pack_.ellipsoids:
        if ell.center is None:
            raise ValueError("voxelize requires a placed pack")
        reach = float(ell.axes.max())
        spans = []
        for a, n in zip(range(3), (nx, ny, nz)):
            lo = max(0, int(math.floor((ell.center[a] - reach) / spacing - 0.5)))
            hi = min(n - 1, int(math.ceil((ell.center[a] + reach) / spacing - 0.5)))
            if lo > hi:
                spans = None
                break
            spans.append((lo, hi))
        if spans is None:
            continue
        (xl, xh), (yl, yh), (zl, zh) = spans
        gx = axes_coords[0][xl : xh + 1] - ell.center[0]
        gy = axes_coords[1][yl : yh + 1] - ell.center[1]
        gz = axes_coords[2][zl : zh + 1] - ell.center[2]
        rel = np.stack(
            np.meshgrid(gx, gy, gz, indexing="ij"), axis=-1
        )  # (bx, by, bz, 3)
        body = rel @ ell.rotation.T / ell.axes
        nu = np.sqrt((body * body).sum(axis=-1)).astype(np.float32) - 1.0
        box = (slice(xl, xh + 1), slice(yl, yh + 1), slice(zl, zh + 1))
        closer = nu < best[box]
        claims = closer & (nu <= 0.0)
        best[box] = np.where(closer, nu, best[box])
        label[box][claims] = ell.phase
    return SegmentedVolume(label, spacing)


def split_octants(volume: SegmentedVolume) -> list[SegmentedVolume]:
    """Split an even-dimensioned volume into its 8 half-size octants."""
    from .volume import crop

    nx, ny, nz = volume.dims
    if nx % 2 or ny % 2 or nz % 2:
        raise ValueError(f"octant split requires even dims, got {volume.dims}")
    hx, hy, hz = nx // 2, ny // 2, nz // 2
    out = []
    for oz in (0, 1):
        for oy in (0, 1):
            for ox in (0, 1):
                out.append(crop(volume, (ox * hx, oy * hy, oz * hz), (hx, hy, hz)))
    return out


def generate(cfg: SynthConfig, octants: bool = False):
    """Sample, pack and voxelize one synthetic volume (or its 8 octants).

    Packing proceeds in rounds: after the initial fill, the voxelized
    phase fractions are measured and deficient solid phases receive
    targeted top-up ellipsoids, which keeps the realized fractions close
    to the targets despite overlap and boundary clipping.
    """
    rng = np.random.default_rng(cfg.seed)
    domain = float(np.prod(cfg.extent))
    targets = {p: cfg.fractions[p - 1] * domain for p in SOLID_PHASES}

    placed = None
    # fill on cheap net-volume estimates, aiming slightly low to avoid
    # overshoot (voxels cannot be un-claimed)
    for _ in range(cfg.fill_rounds):
        deficits = {}
        for p in SOLID_PHASES:
            have = placed.net_solid_volume(p) if placed else 0.0
            want = targets[p] * 0.97 - have
            if want > targets[p] * 0.01:
                deficits[p] = want
        if not deficits:
            break
        batch = sample_ellipsoids(cfg, rng, targets=deficits)
        placed = pack(batch, cfg, rng, placed=placed)

    volume = voxelize(placed, cfg)
    for _ in range(cfg.repair_rounds):
        counts = np.bincount(volume.data.ravel(), minlength=4)
        total = volume.data.size
        deficits = {}
        for p in SOLID_PHASES:
            gap = (cfg.fractions[p - 1] - counts[p] / total) * domain
            if gap > 0.002 * domain:
                # placements lose volume to overlap and carving; over-sample
                deficits[p] = 1.5 * gap
        if not deficits:
            break
        batch = sample_ellipsoids(cfg, rng, targets=deficits)
        placed = pack(batch, cfg, rng, placed=placed)
        volume = voxelize(placed, cfg)

    if octants:
        return split_octants(volume)
    return volume


def grayscale_render(
    seg: SegmentedVolume,
    intensities: dict = None,
    noise_std: float = 0.0,
    seed: int = 0,
) -> GrayscaleVolume:
    """Render phase labels as grayscale intensities plus Gaussian noise.

    With noise_std=0 the mapping is exact, so segmenting the render
    recovers the labels.
    """
    if intensities is None:
        intensities = {1: 20, 2: 128, 3: 230}
    for p, v in intensities.items():
        if not 0 <= v <= 255:
            raise ValueError(f"intensity for phase {p} outside [0, 255]: {v}")
    values = np.zeros(seg.dims, dtype=np.float64)
    for p, v in intensities.items():
        values[seg.data == p] = float(v)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        values = values + rng.normal(0.0, noise_std, size=seg.dims)
    return GrayscaleVolume(
        np.clip(np.rint(values), 0, 255).astype(np.uint8), seg.spacing
    )
