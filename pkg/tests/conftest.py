import pytest

from cfetsim.device import CompactModelParams, calibrate
from cfetsim.geometry import (
    BeolSpec,
    DeviceSpec,
    build_cfet_stack,
    build_inverter_cell,
    default_stack,
    voxelize,
)
from cfetsim.materials import default_library

VDD = 0.75

N_TARGETS = {"vth": 0.30, "ss": 75.0, "ioff": 1e-10, "ion": 6.0e-5, "vdd": VDD}
P_TARGETS = {"vth": 0.30, "ss": 75.0, "ioff": 1e-10, "ion": 6.0e-5 * 1.175, "vdd": VDD}


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def device_spec():
    return DeviceSpec()


@pytest.fixture(scope="session")
def nfet():
    return calibrate(N_TARGETS, CompactModelParams())


@pytest.fixture(scope="session")
def pfet():
    seed = CompactModelParams(polarity="p", mu0=470.0, vsat0=6e5)
    return calibrate(P_TARGETS, seed)


@pytest.fixture(scope="session")
def stack2():
    return default_stack(2, tier_gap=2.0, standoff=60.0, substrate_thickness=100.0)


@pytest.fixture(scope="session")
def stack4():
    return default_stack(4, tier_gap=2.0, pair_gap=10.0, standoff=60.0,
                         substrate_thickness=100.0)


@pytest.fixture(scope="session")
def device_grid2(device_spec, stack2):
    return voxelize(build_cfet_stack(device_spec, stack2), 3.0)


@pytest.fixture(scope="session")
def device_grid4(device_spec, stack4):
    return voxelize(build_cfet_stack(device_spec, stack4), 3.0)


@pytest.fixture(scope="session")
def inverter_grid2(device_spec):
    stack = default_stack(2, substrate_thickness=100.0)
    regions = build_inverter_cell(device_spec, stack, BeolSpec())
    return voxelize(regions, 3.0)


def uniform_bar_regions(material="silicon_bulk", length=64.0, side=4.0):
    from cfetsim.geometry import Region

    return [Region(((0.0, length), (0.0, side), (0.0, side)), material)]
