"""Material property library shared by the thermal and field solvers.

Thermal conductivities are literature-typical room-temperature values.
The nanosheet silicon entry is deliberately far below bulk: in-plane
conductivity of silicon films collapses by roughly an order of magnitude
once the film is only a few nanometers thick (phonon boundary scattering),
so a 6 nm sheet is modeled at 13 W/(m K) against 148 W/(m K) bulk.
All values can be overridden per run; the solvers only rely on orderings
and analytic cases, never on these exact numbers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import MaterialError

ROLES = ("conductor", "dielectric", "semiconductor")


@dataclass(frozen=True)
class Material:
    name: str
    role: str
    kappa: float  # thermal conductivity, W/(m K)
    eps_r: float | None = None  # relative permittivity
    rho_e: float | None = None  # electrical resistivity, Ohm m (conductors)

    def __post_init__(self):
        if self.role not in ROLES:
            raise MaterialError(f"unknown role {self.role!r} for {self.name!r}")
        if not self.kappa > 0:
            raise MaterialError(f"{self.name}: kappa must be positive, got {self.kappa}")
        if self.role == "conductor":
            if self.rho_e is None or not self.rho_e > 0:
                raise MaterialError(f"{self.name}: conductors need rho_e > 0")
        else:
            if self.rho_e is not None:
                raise MaterialError(f"{self.name}: rho_e is only valid for conductors")
            if self.eps_r is None or self.eps_r < 1.0:
                raise MaterialError(f"{self.name}: eps_r must be >= 1")


def default_library() -> dict[str, Material]:
    """Materials used by the geometry builders, keyed by id."""
    mats = [
        Material("silicon_bulk", "semiconductor", kappa=148.0, eps_r=11.7),
        Material("silicon_nanosheet", "semiconductor", kappa=13.0, eps_r=11.7),
        Material("silicon_sd", "semiconductor", kappa=20.0, eps_r=11.7),
        Material("sio2", "dielectric", kappa=1.4, eps_r=3.9),
        Material("hfo2", "dielectric", kappa=1.0, eps_r=22.0),
        Material("gate_metal", "conductor", kappa=11.0, rho_e=2.0e-7),
        Material("interconnect_metal", "conductor", kappa=170.0, rho_e=3.0e-8),
        Material("spacer_dielectric", "dielectric", kappa=1.2, eps_r=4.0),
        Material("interlayer_dielectric", "dielectric", kappa=0.5, eps_r=2.5),
    ]
    return {m.name: m for m in mats}


def lookup(library: dict[str, Material], name: str) -> Material:
    try:
        return library[name]
    except KeyError:
        raise MaterialError(f"material {name!r} not in library") from None


def override(library: dict[str, Material], name: str, field: str, value) -> dict[str, Material]:
    """Functional update: returns a new library, the input is untouched."""
    mat = lookup(library, name)
    if field not in {f.name for f in dataclasses.fields(Material)}:
        raise MaterialError(f"{name}: no such field {field!r}")
    updated = dataclasses.replace(mat, **{field: value})
    out = dict(library)
    out[name] = updated
    return out
