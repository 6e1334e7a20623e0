"""Parameterized 3D models of stacked CFET devices and inverter cells.

Axis convention: x runs from source to drain, y across the sheet width,
z is the vertical stacking direction. All coordinates are nanometers.
Regions are axis-aligned boxes rasterized onto a boundary-aligned voxel
grid with last-writer-wins semantics, so a gate stack is emitted largest
box first (metal, then oxide, then channel) and the channel ends up fully
wrapped, matching a gate-all-around cross section.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (
    ConfigurationError,
    GeometryError,
    IntegrityError,
    RefinementError,
)

RAIL_NAMES = ("Input", "Output", "Power", "Ground")

# Faces are checked with 6-connectivity throughout.
_FACE_STRUCT = ndimage.generate_binary_structure(3, 1)

Box = tuple[tuple[float, float], tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class DeviceSpec:
    """Per-transistor dimensions and the supply voltage."""

    gate_length: float = 15.0  # nm
    sheet_width: float = 16.0  # nm
    sheet_thickness: float = 6.0  # nm
    eot: float = 0.9  # nm
    spacer_thickness: float = 5.0  # nm
    channel_doping: float = 1e15  # cm^-3
    sd_doping: float = 1e20  # cm^-3
    vdd: float = 0.75  # V
    sd_extension: float | None = None  # nm, defaults to 2x spacer_thickness
    gate_metal_thickness: float = 3.0  # nm

    def __post_init__(self):
        lengths = (
            self.gate_length,
            self.sheet_width,
            self.sheet_thickness,
            self.eot,
            self.spacer_thickness,
            self.gate_metal_thickness,
        )
        if any(not v > 0 for v in lengths):
            raise ConfigurationError("device lengths must be strictly positive")
        if not self.eot < self.sheet_thickness:
            raise ConfigurationError("eot must be smaller than the sheet thickness")
        if not self.sd_doping > self.channel_doping:
            raise ConfigurationError("sd_doping must exceed channel_doping")
        if self.sd_extension is not None and not self.sd_extension > 0:
            raise ConfigurationError("sd_extension must be positive")
        if not self.vdd > 0:
            raise ConfigurationError("vdd must be positive")

    @property
    def extension(self) -> float:
        return self.sd_extension if self.sd_extension is not None else 2.0 * self.spacer_thickness


@dataclass(frozen=True)
class TierSpec:
    polarity: str  # "n" or "p"
    gap_below: float  # nm of dielectric between this tier's solids and the one below

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise ConfigurationError(f"polarity must be n or p, got {self.polarity!r}")
        if not self.gap_below > 0:
            raise ConfigurationError("vertical gaps must be strictly positive")


@dataclass(frozen=True)
class StackConfig:
    tier_count: int = 2
    tiers: tuple[TierSpec, ...] = ()
    substrate_thickness: float = 200.0  # nm
    inter_tier_dielectric: str = "interlayer_dielectric"

    def __post_init__(self):
        if self.tier_count not in (2, 4):
            raise ConfigurationError(f"tier_count must be 2 or 4, got {self.tier_count}")
        if not self.tiers:
            object.__setattr__(self, "tiers", _default_tiers(self.tier_count))
        if len(self.tiers) != self.tier_count:
            raise ConfigurationError("tiers list length must equal tier_count")
        if not self.substrate_thickness > 0:
            raise ConfigurationError("substrate_thickness must be positive")


def _default_tiers(tier_count, tier_gap=10.0, pair_gap=None, standoff=20.0):
    pair_gap = tier_gap if pair_gap is None else pair_gap
    gaps = [standoff] + [pair_gap if i == 2 else tier_gap for i in range(1, tier_count)]
    polarity = ("p", "n", "p", "n")[:tier_count]
    return tuple(TierSpec(pol, gap) for pol, gap in zip(polarity, gaps))


def default_stack(tier_count=2, tier_gap=10.0, pair_gap=None, standoff=20.0,
                  substrate_thickness=200.0, order=None) -> StackConfig:
    """Stack with p below n per pair, tiers bottom-up."""
    tiers = _default_tiers(tier_count, tier_gap, pair_gap, standoff)
    if order is not None:
        if len(order) != tier_count or any(c not in "np" for c in order):
            raise ConfigurationError(f"order must be {tier_count} chars of n/p, got {order!r}")
        tiers = tuple(TierSpec(c, t.gap_below) for c, t in zip(order, tiers))
    return StackConfig(tier_count=tier_count, tiers=tiers,
                       substrate_thickness=substrate_thickness)


@dataclass(frozen=True)
class BeolSpec:
    """Interconnect stack: signal rails on top metal, power rails buried or on top."""

    via_cross_section: float = 36.0  # nm^2, square vias
    metal_level_heights: tuple[float, ...] = (20.0,)
    mol_standoff: float = 10.0  # nm between stack top and first metal level
    buried_power_rail: bool = True
    bpr_depth: float = 10.0  # nm below the substrate surface to the rail top
    bpr_thickness: float = 20.0
    conductor_material: str = "interconnect_metal"
    margin: float = 20.0  # dielectric guard around the cell

    rail_names = RAIL_NAMES

    def __post_init__(self):
        if not self.via_cross_section > 0:
            raise ConfigurationError("via_cross_section must be positive")
        if not self.metal_level_heights or any(h <= 0 for h in self.metal_level_heights):
            raise ConfigurationError("metal_level_heights must be positive")

    @property
    def via_side(self) -> float:
        return math.sqrt(self.via_cross_section)


@dataclass(frozen=True)
class Region:
    box: Box
    material: str
    label: str | None = None

    def __post_init__(self):
        for lo, hi in self.box:
            if not hi > lo:
                raise GeometryError(f"degenerate box {self.box} in region {self.label or self.material}")

    @property
    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in self.box)

    def thinnest_extent(self) -> float:
        return min(hi - lo for lo, hi in self.box)

    def overlaps(self, other: "Region") -> bool:
        return all(lo < ohi and hi > olo for (lo, hi), (olo, ohi) in zip(self.box, other.box))


def _box(x0, x1, y0, y1, z0, z1) -> Box:
    return ((float(x0), float(x1)), (float(y0), float(y1)), (float(z0), float(z1)))


@dataclass
class _TierFrame:
    """Resolved z-coordinates of one tier, all in nm."""

    index: int
    polarity: str
    sheet_z0: float
    sheet_z1: float
    shell_z0: float  # bottom of the gate metal
    shell_z1: float  # top of the gate metal


def _tier_frames(spec: DeviceSpec, config: StackConfig) -> list[_TierFrame]:
    shell = spec.eot + spec.gate_metal_thickness
    frames = []
    prev_top = 0.0  # substrate surface
    for i, tier in enumerate(config.tiers):
        shell_z0 = prev_top + tier.gap_below
        sheet_z0 = shell_z0 + shell
        sheet_z1 = sheet_z0 + spec.sheet_thickness
        shell_z1 = sheet_z1 + shell
        frames.append(_TierFrame(i, tier.polarity, sheet_z0, sheet_z1, shell_z0, shell_z1))
        prev_top = shell_z1
    return frames


def build_cfet_stack(spec: DeviceSpec, config: StackConfig,
                     fill_margin: float = 15.0) -> list[Region]:
    """Device regions for every tier plus substrate and dielectric fill.

    Each tier gets a silicon sheet split into source / channel / drain along
    x, a gate oxide and gate metal shell wrapping the channel, and spacers
    flanking the gate. Labels follow the pattern ``tier<i>.<part>``.
    """
    ext = spec.extension
    lg = spec.gate_length
    lx = 2.0 * ext + lg
    w = spec.sheet_width
    tsp = spec.spacer_thickness
    shell1 = spec.eot
    shell2 = spec.eot + spec.gate_metal_thickness
    frames = _tier_frames(spec, config)

    top = frames[-1].shell_z1 + fill_margin
    fill = Region(
        _box(-fill_margin, lx + fill_margin, -fill_margin, w + fill_margin,
             -config.substrate_thickness, top),
        config.inter_tier_dielectric,
    )
    substrate = Region(
        _box(fill.box[0][0], fill.box[0][1], fill.box[1][0], fill.box[1][1],
             -config.substrate_thickness, 0.0),
        "silicon_bulk",
    )
    regions = [fill, substrate]

    prev_top = 0.0
    for f in frames:
        regions.append(Region(
            _box(0.0, lx, -shell2, w + shell2, prev_top, f.shell_z0),
            config.inter_tier_dielectric,
        ))
        prev_top = f.shell_z1
        # spacers flank the gate along x and share the gate shell cross section
        for x0, x1, tag in ((ext - tsp, ext, "spacer_s"), (ext + lg, ext + lg + tsp, "spacer_d")):
            regions.append(Region(
                _box(x0, x1, -shell2, w + shell2, f.shell_z0, f.shell_z1),
                "spacer_dielectric",
            ))
        regions.append(Region(
            _box(ext, ext + lg, -shell2, w + shell2, f.shell_z0, f.shell_z1),
            "gate_metal", label=f"tier{f.index}.gate",
        ))
        regions.append(Region(
            _box(ext, ext + lg, -shell1, w + shell1, f.sheet_z0 - shell1, f.sheet_z1 + shell1),
            "hfo2",
        ))
        regions.append(Region(
            _box(0.0, ext, 0.0, w, f.sheet_z0, f.sheet_z1),
            "silicon_sd", label=f"tier{f.index}.source",
        ))
        regions.append(Region(
            _box(ext, ext + lg, 0.0, w, f.sheet_z0, f.sheet_z1),
            "silicon_nanosheet", label=f"tier{f.index}.channel",
        ))
        regions.append(Region(
            _box(ext + lg, lx, 0.0, w, f.sheet_z0, f.sheet_z1),
            "silicon_sd", label=f"tier{f.index}.drain",
        ))
    return regions


def wired_tiers(config: StackConfig, variant: str = "bottom") -> tuple[int, int]:
    """Tier indices (p_tier, n_tier) of the inverter pair to wire up."""
    if config.tier_count == 2:
        pair = (0, 1)
    elif variant == "bottom":
        pair = (0, 1)
    elif variant == "top":
        pair = (2, 3)
    else:
        raise ConfigurationError(f"unknown inverter variant {variant!r}")
    pols = {config.tiers[i].polarity for i in pair}
    if pols != {"n", "p"}:
        raise ConfigurationError(f"wired pair {pair} is not complementary")
    p_tier = pair[0] if config.tiers[pair[0]].polarity == "p" else pair[1]
    n_tier = pair[1] if p_tier == pair[0] else pair[0]
    return p_tier, n_tier


def build_inverter_cell(spec: DeviceSpec, config: StackConfig, beol: BeolSpec,
                        variant: str = "bottom") -> list[Region]:
    """Device stack plus labeled Input/Output/Power/Ground conductors.

    Signal rails run on the first metal level above the stack and drop vias
    to the wired pair; power rails are buried below the substrate surface
    (or routed from the top when buried_power_rail is off). In 4-tier mode
    ``variant`` selects whether the bottom or the top complementary pair is
    wired, which sets the via lengths.
    """
    regions = build_cfet_stack(spec, config, fill_margin=beol.margin)
    frames = _tier_frames(spec, config)
    p_tier, n_tier = wired_tiers(config, variant)
    fp, fn = frames[p_tier], frames[n_tier]
    lower, upper = (fp, fn) if fp.sheet_z0 < fn.sheet_z0 else (fn, fp)

    ext = spec.extension
    lg = spec.gate_length
    lx = 2.0 * ext + lg
    w = spec.sheet_width
    shell2 = spec.eot + spec.gate_metal_thickness
    wv = beol.via_side
    metal = beol.conductor_material

    stack_top = frames[-1].shell_z1
    m1_z0 = stack_top + beol.mol_standoff
    m1_z1 = m1_z0 + beol.metal_level_heights[0]

    # grow the fill so rails can land on the domain boundary
    top = m1_z1 + beol.margin
    x_min = -beol.margin - 2.0 * wv
    fill = Region(
        _box(x_min, lx + beol.margin + 2.0 * wv, -beol.margin, w + beol.margin,
             -config.substrate_thickness, top),
        config.inter_tier_dielectric,
    )
    substrate = Region(
        _box(fill.box[0][0], fill.box[0][1], fill.box[1][0], fill.box[1][1],
             -config.substrate_thickness, 0.0),
        "silicon_bulk",
    )
    regions[0] = fill
    regions[1] = substrate
    y_max = fill.box[1][1]

    conductors: list[Region] = []

    def rail(name, *boxes):
        for b in boxes:
            conductors.append(Region(b, metal, label=name))

    # Input: via flush against the +y face of both wired gate shells, rail to y_max
    xg0 = ext + 2.0
    rail("Input",
         _box(xg0, xg0 + wv, w + shell2, w + shell2 + wv, lower.shell_z0, m1_z1),
         _box(xg0, xg0 + wv, w + shell2, y_max, m1_z0, m1_z1))

    # Output: via past the drain end with a contact strap into each wired drain
    xo0 = lx + 2.0
    yo0 = w / 2.0 - wv / 2.0
    out_boxes = [
        _box(xo0, xo0 + wv, yo0, yo0 + wv, lower.sheet_z0, m1_z1),
        _box(xo0, xo0 + wv, yo0, y_max, m1_z0, m1_z1),
    ]
    for f in (lower, upper):
        out_boxes.append(_box(lx - 4.0, xo0 + wv, yo0, yo0 + wv, f.sheet_z0, f.sheet_z1))
    rail("Output", *out_boxes)

    # Power / Ground: source-side vertical runs outside the device footprint
    def source_route(name, f, y0, rail_y_end):
        y1 = y0 + wv
        xv0 = -6.0 - wv
        strap = _box(xv0, 4.0, y0, y1, f.sheet_z0, f.sheet_z1)
        if beol.buried_power_rail:
            z_lo = -beol.bpr_depth - beol.bpr_thickness
            rail(name,
                 _box(fill.box[0][0], 0.0, y0, y1, z_lo, -beol.bpr_depth),
                 _box(xv0, -6.0, y0, y1, -beol.bpr_depth, f.sheet_z1),
                 strap)
        else:
            ry0, ry1 = min(y0, rail_y_end), max(y1, rail_y_end)
            rail(name,
                 _box(xv0, -6.0, y0, y1, f.sheet_z0, m1_z1),
                 _box(xv0, -6.0, ry0, ry1, m1_z0, m1_z1),
                 strap)

    source_route("Power", fp, 1.0, fill.box[1][0])
    source_route("Ground", fn, w - 1.0 - wv, y_max)

    _check_routing(conductors, regions, frames, p_tier, n_tier)
    return regions + conductors


def _check_routing(conductors, device_regions, frames, p_tier, n_tier):
    """Reject conductor boxes that cut through device solids they may not touch."""
    allowed_silicon = {
        "Output": {f"tier{p_tier}.drain", f"tier{n_tier}.drain"},
        "Power": {f"tier{p_tier}.source"},
        "Ground": {f"tier{n_tier}.source"},
        "Input": set(),
    }
    blocking = [r for r in device_regions
                if r.material in ("silicon_nanosheet", "hfo2", "gate_metal",
                                  "spacer_dielectric", "silicon_sd")]
    for cond in conductors:
        for solid in blocking:
            if not cond.overlaps(solid):
                continue
            if solid.material == "silicon_sd" and solid.label in allowed_silicon[cond.label]:
                continue
            raise GeometryError(
                f"rail {cond.label} routing blocked by {solid.label or solid.material}")
    for i, a in enumerate(conductors):
        for b in conductors[i + 1:]:
            if a.label != b.label and a.overlaps(b):
                raise GeometryError(f"rails {a.label} and {b.label} overlap")


@dataclass
class VoxelGrid:
    """Structured grid of material-labeled cells.

    Edge arrays have one more entry than the cell count along each axis.
    ``material`` and ``label`` hold integer codes into the name lists;
    label code -1 means unlabeled.
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    z_edges: np.ndarray
    material: np.ndarray
    label: np.ndarray
    material_names: list[str]
    label_names: list[str]

    def __post_init__(self):
        for e in (self.x_edges, self.y_edges, self.z_edges):
            if not np.all(np.diff(e) > 0):
                raise GeometryError("grid coordinates must be strictly increasing")
        if self.material.shape != self.dims or self.label.shape != self.dims:
            raise GeometryError("cell array shape does not match grid dims")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (len(self.x_edges) - 1, len(self.y_edges) - 1, len(self.z_edges) - 1)

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def widths(self, axis: int) -> np.ndarray:
        return np.diff((self.x_edges, self.y_edges, self.z_edges)[axis])

    def centers(self, axis: int) -> np.ndarray:
        e = (self.x_edges, self.y_edges, self.z_edges)[axis]
        return 0.5 * (e[:-1] + e[1:])

    def cell_volumes(self) -> np.ndarray:
        """Cell volumes in nm^3, shaped like the cell arrays."""
        wx, wy, wz = (self.widths(a) for a in range(3))
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    def material_code(self, name: str) -> int:
        try:
            return self.material_names.index(name)
        except ValueError:
            return -1

    def label_code(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            return -1

    def cells_of_material(self, name: str) -> np.ndarray:
        code = self.material_code(name)
        if code < 0:
            return np.zeros(self.dims, dtype=bool)
        return self.material == code

    def cells_of_label(self, name: str) -> np.ndarray:
        code = self.label_code(name)
        if code < 0:
            return np.zeros(self.dims, dtype=bool)
        return self.label == code

    def material_volume(self, name: str) -> float:
        return float(self.cell_volumes()[self.cells_of_material(name)].sum())

    def used_material_names(self) -> list[str]:
        codes = np.unique(self.material)
        return [self.material_names[c] for c in codes if c >= 0]


def _axis_edges(regions, axis, resolution, refinement):
    cuts = set()
    for r in regions:
        lo, hi = r.box[axis]
        cuts.add(round(lo, 6))
        cuts.add(round(hi, 6))
    cuts = sorted(cuts)
    edges = [cuts[0]]
    for a, b in zip(cuts[:-1], cuts[1:]):
        target = resolution
        for r in regions:
            key = r.label if r.label in refinement else r.material
            if key in refinement:
                lo, hi = r.box[axis]
                if lo <= a + 1e-9 and hi >= b - 1e-9:
                    target = min(target, refinement[key])
        n = max(1, int(math.ceil((b - a) / target - 1e-9)))
        edges.extend(a + (b - a) * k / n for k in range(1, n + 1))
    return np.asarray(edges, dtype=float)


def voxelize(regions: list[Region], resolution: float,
             refinement: dict[str, float] | None = None,
             max_aspect: float = 50.0) -> VoxelGrid:
    """Rasterize regions onto a boundary-aligned grid, last writer wins.

    Coordinate lines are inserted at every region boundary, so no cell
    straddles a material interface and per-material volumes are exact.
    ``refinement`` maps a label or material name to a finer cell target.
    """
    if not regions:
        raise GeometryError("no regions to voxelize")
    if not resolution > 0:
        raise GeometryError("resolution must be positive")
    refinement = dict(refinement or {})
    for key in refinement:
        if not any(key in (r.label, r.material) for r in regions):
            raise RefinementError(f"refinement target {key!r} matches no region")

    for r in regions:
        key = r.label if r.label in refinement else r.material
        target = min(resolution, refinement.get(key, resolution))
        thin = r.thinnest_extent()
        if target > max_aspect * thin:
            raise RefinementError(
                f"resolution {target} nm too coarse for region "
                f"{r.label or r.material} ({thin} nm thin)")

    x_edges = _axis_edges(regions, 0, resolution, refinement)
    y_edges = _axis_edges(regions, 1, resolution, refinement)
    z_edges = _axis_edges(regions, 2, resolution, refinement)

    dims = (len(x_edges) - 1, len(y_edges) - 1, len(z_edges) - 1)
    if math.prod(dims) > 20_000_000:
        raise GeometryError(f"grid of {dims} cells is beyond desk scale")

    material_names: list[str] = []
    label_names: list[str] = []
    mat = np.full(dims, -1, dtype=np.int16)
    lab = np.full(dims, -1, dtype=np.int16)

    def code(names, name):
        if name not in names:
            names.append(name)
        return names.index(name)

    edges = (x_edges, y_edges, z_edges)
    for r in regions:
        sl = []
        for axis in range(3):
            lo, hi = r.box[axis]
            i0 = int(np.searchsorted(edges[axis], lo - 1e-9))
            i1 = int(np.searchsorted(edges[axis], hi - 1e-9))
            sl.append(slice(i0, i1))
        mat[tuple(sl)] = code(material_names, r.material)
        if r.label is not None:
            lab[tuple(sl)] = code(label_names, r.label)

    if (mat < 0).any():
        raise GeometryError("regions do not cover their bounding box")
    return VoxelGrid(x_edges, y_edges, z_edges, mat, lab, material_names, label_names)


def locate_conductors(grid: VoxelGrid) -> dict[str, np.ndarray]:
    """Map every label to its flat cell indices, checking face connectivity."""
    out = {}
    for code, name in enumerate(grid.label_names):
        mask = grid.label == code
        if not mask.any():
            continue
        _, n_parts = ndimage.label(mask, structure=_FACE_STRUCT)
        if n_parts != 1:
            raise IntegrityError(f"conductor {name!r} splits into {n_parts} parts")
        out[name] = np.flatnonzero(mask.ravel())
    return out


def regions_csv(regions: list[Region]) -> str:
    """One row per region: label, material, and the six box extents in nm."""
    lines = ["label,material,x0_nm,x1_nm,y0_nm,y1_nm,z0_nm,z1_nm"]
    for r in regions:
        (x0, x1), (y0, y1), (z0, z1) = r.box
        lines.append(f"{r.label or ''},{r.material},"
                     f"{x0!r},{x1!r},{y0!r},{y1!r},{z0!r},{z1!r}")
    return "\n".join(lines) + "\n"


def touching_labels(grid: VoxelGrid, name_a: str, name_b: str) -> bool:
    """True when cells of the two labels share at least one face."""
    a = grid.cells_of_label(name_a)
    b = grid.cells_of_label(name_b)
    if not a.any() or not b.any():
        return False
    grown = ndimage.binary_dilation(a, structure=_FACE_STRUCT)
    return bool((grown & b).any())
