"""Field-solver parasitic extraction over a voxelized cell.

Capacitance: one Laplace solve per conductor with that conductor at 1 V
and the rest grounded, zero normal flux on the outer boundary (optionally
a grounded shield). The Dirichlet value sits on the conductor surface, so
a plate gap meshed into k uniform cells reproduces eps A / d exactly up
to fringing. Charges come from Gauss summation over the conductor faces
of the same discrete operator, which keeps the Maxwell matrix symmetric
to solver precision. Conductor-role cells that are not in the extraction
set (floating metal) are treated as a very high permittivity dielectric.

Resistance: a conduction Laplace solve inside one conductor with the two
terminals held at fixed potential on their faces; R is the applied volt
over the through current.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as spla

from .circuit import Capacitor, Netlist, Resistor
from .errors import (
    ComparisonError,
    ConnectivityError,
    ConvergenceError,
    GeometryError,
    RegionNotFoundError,
)
from .geometry import VoxelGrid, locate_conductors
from .materials import Material, lookup

EPS0 = 8.8541878128e-12  # F/m
NM = 1e-9
FLOATING_METAL_EPS = 1000.0  # quasi-equipotential stand-in for unlisted metal

# face sets are (flat cell index, axis, side) with side 0 = low face
Face = tuple[int, int, int]


@dataclass
class CapacitanceMatrix:
    names: list[str]
    c: np.ndarray  # F, Maxwell sign convention
    asymmetry: float = 0.0  # largest relative asymmetry before averaging

    def __post_init__(self):
        n = len(self.names)
        if self.c.shape != (n, n):
            raise GeometryError("capacitance matrix shape mismatch")
        scale = float(np.abs(self.c).max()) or 1.0
        if np.abs(self.c - self.c.T).max() > 1e-9 * scale:
            raise GeometryError("capacitance matrix not symmetric")
        if (np.diag(self.c) <= 0).any():
            raise GeometryError("capacitance diagonal must be positive")
        off = self.c - np.diag(np.diag(self.c))
        if (off > 1e-9 * scale).any():
            raise GeometryError("off-diagonal couplings must be non-positive")
        if (self.c.sum(axis=1) < -1e-6 * scale).any():
            raise GeometryError("row sums must be non-negative")

    def coupling(self, a: str, b: str) -> float:
        return float(self.c[self.names.index(a), self.names.index(b)])

    def to_csv(self) -> str:
        lines = ["conductor," + ",".join(self.names)]
        for i, name in enumerate(self.names):
            lines.append(name + "," + ",".join(repr(float(v)) for v in self.c[i]))
        return "\n".join(lines) + "\n"


@dataclass
class ResistanceEntry:
    node_a: str
    node_b: str
    r: float  # Ohm
    mismatch: float = 0.0  # relative terminal current imbalance

    def __post_init__(self):
        if not self.r > 0:
            raise GeometryError(f"resistance {self.node_a}-{self.node_b} must be positive")


@dataclass
class ResistanceReport:
    entries: list[ResistanceEntry]

    def to_csv(self) -> str:
        lines = ["node_a,node_b,r_ohm"]
        lines.extend(f"{e.node_a},{e.node_b},{float(e.r)!r}" for e in self.entries)
        return "\n".join(lines) + "\n"


def _cell_eps(grid: VoxelGrid, materials: dict[str, Material]) -> np.ndarray:
    """Permittivity per cell in F/m; conductors in the set are excluded later."""
    eps = np.empty(grid.dims)
    for code, name in enumerate(grid.material_names):
        mat = lookup(materials, name)
        value = FLOATING_METAL_EPS if mat.role == "conductor" else mat.eps_r
        eps[grid.material == code] = value * EPS0
    return eps


def _axis_faces(grid):
    """Iterate interior face geometry per axis: areas and half-widths in m."""
    w = [grid.widths(a) * NM for a in range(3)]
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        shape = list(grid.dims)
        shape[axis] -= 1
        area = np.ones(shape)
        for o in others:
            view = [None, None, None]
            view[o] = slice(None)
            area = area * np.broadcast_to(w[o][tuple(view)], shape)
        view = [None, None, None]
        view[axis] = slice(None)
        d_lo = np.broadcast_to((w[axis][:-1] / 2)[tuple(view)], shape)
        d_hi = np.broadcast_to((w[axis][1:] / 2)[tuple(view)], shape)
        yield axis, area, d_lo, d_hi


def extract_capacitance(grid: VoxelGrid, materials: dict[str, Material],
                        conductors: list[str], tol: float = 1e-10,
                        shield: bool = False) -> CapacitanceMatrix:
    """Maxwell capacitance matrix among named conductor labels."""
    if len(conductors) < 2 and not shield:
        raise GeometryError("need at least two conductors (or a grounded shield)")
    located = locate_conductors(grid)
    for name in conductors:
        if name not in located:
            raise RegionNotFoundError(f"conductor {name!r} not on grid")

    n = grid.n_cells
    cond_id = np.full(n, -1, dtype=np.int32)
    for ci, name in enumerate(conductors):
        cells = located[name]
        if (cond_id[cells] >= 0).any():
            raise GeometryError(f"conductor {name!r} overlaps another conductor")
        cond_id[cells] = ci
    cond_id = cond_id.reshape(grid.dims)
    domain = cond_id < 0

    eps = _cell_eps(grid, materials)
    dof = np.full(grid.dims, -1, dtype=np.int64)
    dof[domain] = np.arange(int(domain.sum()))
    ndof = int(domain.sum())

    rows, cols, vals = [], [], []
    diag = np.zeros(ndof)
    nrhs = len(conductors)
    rhs = np.zeros((nrhs, ndof))
    # faces between domain cells and each conductor, for Gauss charge sums
    cond_faces: list[list[tuple[int, float, int]]] = [[] for _ in range(nrhs)]

    for axis, area, d_lo, d_hi in _axis_faces(grid):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        e_lo, e_hi = eps[tuple(sl_lo)], eps[tuple(sl_hi)]
        dom_lo, dom_hi = domain[tuple(sl_lo)], domain[tuple(sl_hi)]
        id_lo, id_hi = cond_id[tuple(sl_lo)], cond_id[tuple(sl_hi)]
        dof_lo, dof_hi = dof[tuple(sl_lo)], dof[tuple(sl_hi)]

        both = dom_lo & dom_hi
        g = np.where(both, area / (d_lo / e_lo + d_hi / e_hi), 0.0)
        gl = g[both]
        rows.extend((dof_lo[both], dof_hi[both]))
        cols.extend((dof_hi[both], dof_lo[both]))
        vals.extend((-gl, -gl))
        np.add.at(diag, dof_lo[both], gl)
        np.add.at(diag, dof_hi[both], gl)

        # Dirichlet at the conductor face: only the dielectric half counts
        for dom_side, other_id, d_side, e_side, dof_side in (
            (dom_lo & ~dom_hi, id_hi, d_lo, e_lo, dof_lo),
            (dom_hi & ~dom_lo, id_lo, d_hi, e_hi, dof_hi),
        ):
            m = dom_side
            if not m.any():
                continue
            gb = area[m] / (d_side[m] / e_side[m])
            cells = dof_side[m]
            np.add.at(diag, cells, gb)
            which = other_id[m]
            for ci in range(nrhs):
                sel = which == ci
                if sel.any():
                    np.add.at(rhs[ci], cells[sel], gb[sel])
                    cond_faces[ci].extend(zip(cells[sel].tolist(), gb[sel].tolist(),
                                              [ci] * int(sel.sum())))

    if shield:
        w = [grid.widths(a) * NM for a in range(3)]
        for axis in range(3):
            for side in (0, -1):
                sl = [slice(None)] * 3
                sl[axis] = side
                m = domain[tuple(sl)]
                a, b = (x for x in range(3) if x != axis)
                area_b = np.multiply.outer(w[a], w[b])[m]
                gb = area_b / ((w[axis][side] / 2) / eps[tuple(sl)][m])
                np.add.at(diag, dof[tuple(sl)][m], gb)

    rows.append(np.arange(ndof))
    cols.append(np.arange(ndof))
    vals.append(diag)
    mat = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof)).tocsr()

    d = mat.diagonal()
    precond = spla.LinearOperator(mat.shape, matvec=lambda v: v / d)
    c_raw = np.zeros((nrhs, nrhs))
    for i in range(nrhs):
        phi, info = spla.cg(mat, rhs[i], rtol=tol, atol=0.0,
                            maxiter=40 * max(grid.dims) + 2000, M=precond)
        if info != 0:
            raise ConvergenceError(f"capacitance solve {conductors[i]} stalled")
        for j in range(nrhs):
            phi_j = 1.0 if j == i else 0.0
            q = 0.0
            for cell, g, _ in cond_faces[j]:
                q += g * (phi_j - phi[cell])
            c_raw[i, j] = q

    sym = 0.5 * (c_raw + c_raw.T)
    scale = np.abs(sym).max() or 1.0
    asym = float(np.abs(c_raw - c_raw.T).max() / scale)
    # clip solver-noise positives on the off-diagonal
    off_mask = ~np.eye(nrhs, dtype=bool)
    sym[off_mask & (sym > 0)] = np.minimum(sym[off_mask & (sym > 0)], 0.0)
    return CapacitanceMatrix(list(conductors), sym, asymmetry=asym)


def boundary_port_faces(grid: VoxelGrid, label: str) -> list[Face]:
    """Faces of a labeled conductor that lie on the outer grid boundary."""
    mask = grid.cells_of_label(label)
    if not mask.any():
        raise RegionNotFoundError(f"no cells labeled {label!r}")
    faces = []
    flat = np.arange(grid.n_cells).reshape(grid.dims)
    for axis in range(3):
        for side, index in ((0, 0), (1, -1)):
            sl = [slice(None)] * 3
            sl[axis] = index
            m = mask[tuple(sl)]
            faces.extend((int(c), axis, side) for c in flat[tuple(sl)][m])
    return faces


def contact_faces(grid: VoxelGrid, label: str, target_labels: list[str]) -> list[Face]:
    """Faces where the conductor touches any of the target labels."""
    mask = grid.cells_of_label(label)
    tmask = np.zeros(grid.dims, dtype=bool)
    for t in target_labels:
        tmask |= grid.cells_of_label(t)
    faces = []
    flat = np.arange(grid.n_cells).reshape(grid.dims)
    for axis in range(3):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        m_lo = mask[tuple(sl_lo)] & tmask[tuple(sl_hi)]
        m_hi = mask[tuple(sl_hi)] & tmask[tuple(sl_lo)]
        faces.extend((int(c), axis, 1) for c in flat[tuple(sl_lo)][m_lo])
        faces.extend((int(c), axis, 0) for c in flat[tuple(sl_hi)][m_hi])
    return faces


def inverter_terminals(grid: VoxelGrid, wired: tuple[int, int]) -> dict[str, list[Face]]:
    """Port and device-end terminals for the four rails of a wired pair."""
    p_tier, n_tier = wired
    tiers = [p_tier, n_tier]
    terms = {
        "Input": boundary_port_faces(grid, "Input"),
        "Gate": contact_faces(grid, "Input", [f"tier{i}.gate" for i in tiers]),
        "Output": boundary_port_faces(grid, "Output"),
        "Drain": contact_faces(grid, "Output", [f"tier{i}.drain" for i in tiers]),
        "Power": boundary_port_faces(grid, "Power"),
        "PSource": contact_faces(grid, "Power", [f"tier{p_tier}.source"]),
        "Ground": boundary_port_faces(grid, "Ground"),
        "NSource": contact_faces(grid, "Ground", [f"tier{n_tier}.source"]),
    }
    for name, faces in terms.items():
        if not faces:
            raise ConnectivityError(f"terminal {name!r} has no contact faces")
    return terms


DEFAULT_PAIRS = (("Ground", "NSource"), ("PSource", "Power"),
                 ("Input", "Gate"), ("Output", "Drain"))


def extract_resistance(grid: VoxelGrid, materials: dict[str, Material],
                       pairs=DEFAULT_PAIRS,
                       terminals: dict[str, list[Face]] | None = None) -> ResistanceReport:
    """Terminal-pair resistances solved inside each conductor volume."""
    if terminals is None:
        raise ConnectivityError("terminal face sets are required")
    label_flat = grid.label.ravel()
    entries = []
    for a, b in pairs:
        for t in (a, b):
            if t not in terminals:
                raise ConnectivityError(f"unknown terminal {t!r}")
        cells_a = {c for c, _, _ in terminals[a]}
        cells_b = {c for c, _, _ in terminals[b]}
        labels = {int(label_flat[c]) for c in cells_a | cells_b}
        if len(labels) != 1:
            raise ConnectivityError(f"terminals {a}/{b} span different conductors")
        label_name = grid.label_names[labels.pop()]
        r, mism = _conduction_solve(grid, materials, label_name,
                                    terminals[a], terminals[b])
        entries.append(ResistanceEntry(a, b, r, mism))
    return ResistanceReport(entries)


def _conduction_solve(grid, materials, label_name, faces_a, faces_b):
    mask = grid.cells_of_label(label_name)
    rho = np.empty(grid.dims)
    for code, name in enumerate(grid.material_names):
        mat = lookup(materials, name)
        rho[grid.material == code] = mat.rho_e if mat.role == "conductor" else np.inf
    if not np.isfinite(rho[mask]).all():
        raise ConnectivityError(f"conductor {label_name!r} has non-metal cells")

    parts, _ = ndimage.label(mask, structure=ndimage.generate_binary_structure(3, 1))
    part_a = {int(parts.ravel()[c]) for c, _, _ in faces_a}
    part_b = {int(parts.ravel()[c]) for c, _, _ in faces_b}
    if part_a != part_b or len(part_a) != 1 or 0 in part_a:
        raise ConnectivityError(
            f"terminals on {label_name!r} are not on one connected component")

    dof = np.full(grid.dims, -1, dtype=np.int64)
    dof[mask] = np.arange(int(mask.sum()))
    ndof = int(mask.sum())

    rows, cols, vals = [], [], []
    diag = np.zeros(ndof)
    rhs = np.zeros(ndof)

    for axis, area, d_lo, d_hi in _axis_faces(grid):
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, -1)
        sl_hi[axis] = slice(1, None)
        both = mask[tuple(sl_lo)] & mask[tuple(sl_hi)]
        if not both.any():
            continue
        g = area[both] / (d_lo[both] * rho[tuple(sl_lo)][both]
                          + d_hi[both] * rho[tuple(sl_hi)][both])
        lo = dof[tuple(sl_lo)][both]
        hi = dof[tuple(sl_hi)][both]
        rows.extend((lo, hi))
        cols.extend((hi, lo))
        vals.extend((-g, -g))
        np.add.at(diag, lo, g)
        np.add.at(diag, hi, g)

    w = [grid.widths(a) * NM for a in range(3)]
    rho_flat = rho.ravel()

    def face_g(cell, axis, side):
        ii = np.unravel_index(cell, grid.dims)
        others = [a for a in range(3) if a != axis]
        area = w[others[0]][ii[others[0]]] * w[others[1]][ii[others[1]]]
        half = w[axis][ii[axis]] / 2
        return area / (half * rho_flat[cell])

    dof_flat = dof.ravel()
    term_sets = []
    for faces, phi_fixed in ((faces_a, 1.0), (faces_b, 0.0)):
        fg = [(int(dof_flat[c]), face_g(c, axis, side)) for c, axis, side in faces]
        for d, g in fg:
            diag[d] += g
            rhs[d] += g * phi_fixed
        term_sets.append((fg, phi_fixed))

    rows.append(np.arange(ndof))
    cols.append(np.arange(ndof))
    vals.append(diag)
    mat = sparse.coo_matrix(
        (np.concatenate([np.asarray(v) for v in vals]),
         (np.concatenate([np.asarray(v) for v in rows]),
          np.concatenate([np.asarray(v) for v in cols]))),
        shape=(ndof, ndof)).tocsr()
    phi = spla.spsolve(mat, rhs)

    currents = []
    for fg, phi_fixed in term_sets:
        currents.append(sum(g * (phi_fixed - phi[d]) for d, g in fg))
    i_a, i_b = currents[0], -currents[1]
    i_mean = 0.5 * (i_a + i_b)
    if not i_mean > 0:
        raise ConnectivityError("no current flows between the terminals")
    return 1.0 / i_mean, abs(i_a - i_b) / i_mean


def to_netlist(cmatrix: CapacitanceMatrix, rreport: ResistanceReport,
               node_map: dict[str, str] | None = None,
               floor: float = 1e-21) -> tuple[Netlist, list[tuple[str, float]]]:
    """Two-terminal elements from the extraction, couplings below floor pruned."""
    node_map = node_map or {}
    rename = lambda n: node_map.get(n, n)
    elements = []
    pruned = []
    names_seen = set()
    for i, a in enumerate(cmatrix.names):
        for j in range(i + 1, len(cmatrix.names)):
            b = cmatrix.names[j]
            value = -float(cmatrix.c[i, j])
            name = f"C_{a}_{b}"
            if value < floor:
                pruned.append((name, value))
                continue
            elements.append(Capacitor(name, rename(a), rename(b), value))
    for e in rreport.entries:
        name = f"R_{e.node_a}_{e.node_b}"
        elements.append(Resistor(name, rename(e.node_a), rename(e.node_b), e.r))
    elements.sort(key=lambda el: (type(el).__name__, el.name))
    for el in elements:
        if el.name in names_seen:
            raise GeometryError(f"duplicate element name {el.name!r}")
        names_seen.add(el.name)
    return Netlist(elements), pruned


@dataclass
class RatioRow:
    element: str
    base: float
    variant: float

    @property
    def ratio(self) -> float:
        return self.variant / self.base


@dataclass
class RatioTable:
    rows: list[RatioRow]
    missing: list[str] = field(default_factory=list)

    def ratio_of(self, element: str) -> float:
        for row in self.rows:
            if row.element == element:
                return row.ratio
        raise ComparisonError(f"no element {element!r} in the comparison")

    def to_csv(self) -> str:
        lines = ["element,base,variant,ratio"]
        for r in self.rows:
            lines.append(f"{r.element},{r.base!r},{r.variant!r},{r.ratio:.2f}")
        return "\n".join(lines) + "\n"


def compare_tiers(base: Netlist, variant: Netlist) -> RatioTable:
    """Per-element variant/base ratios over the shared element names."""
    base_vals = {el.name: el.value for el in base.elements
                 if isinstance(el, (Resistor, Capacitor))}
    var_vals = {el.name: el.value for el in variant.elements
                if isinstance(el, (Resistor, Capacitor))}
    shared = sorted(set(base_vals) & set(var_vals))
    if not shared:
        raise ComparisonError("netlists share no element names")
    missing = sorted(set(base_vals) ^ set(var_vals))
    rows = [RatioRow(name, base_vals[name], var_vals[name]) for name in shared]
    return RatioTable(rows, missing)
