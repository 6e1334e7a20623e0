"""Transient simulation of R / C / source / transistor netlists.

Modified nodal analysis with ground elimination and backward Euler time
stepping. Capacitors are stamped as companion conductances C/dt with a
history current; transistors are linearized every Newton iteration from
finite differences of the compact model. Node counts stay below about a
hundred here, so each Newton step is a dense solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import CompactModelParams, drain_current, she_operating_point
from .errors import (
    ConfigurationError,
    MeasurementError,
    NetlistError,
    TransientFailureError,
)

GROUND = "0"


@dataclass(frozen=True)
class Resistor:
    name: str
    n1: str
    n2: str
    value: float  # Ohm


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: str
    n2: str
    value: float  # F


@dataclass(frozen=True)
class VSource:
    name: str
    n1: str
    n2: str
    pwl: tuple  # ((t, v), ...) piecewise linear, held constant past the ends


@dataclass(frozen=True)
class Transistor:
    name: str
    d: str
    g: str
    s: str
    params: CompactModelParams
    temperature: float = 300.0


@dataclass
class Netlist:
    elements: list = field(default_factory=list)
    ground: str = GROUND

    def add(self, element):
        self.elements.append(element)
        return self

    @property
    def nodes(self) -> list[str]:
        seen = {self.ground}
        out = [self.ground]
        for el in self.elements:
            refs = (el.d, el.g, el.s) if isinstance(el, Transistor) else (el.n1, el.n2)
            for n in refs:
                if n not in seen:
                    seen.add(n)
                    out.append(n)
        return out

    def validate_for_transient(self):
        if not self.elements:
            raise NetlistError("empty netlist")
        # every node needs a DC path to ground through R, V or transistor elements
        parent = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            parent[find(a)] = find(b)

        find(self.ground)
        for el in self.elements:
            if isinstance(el, (Resistor, VSource)):
                union(el.n1, el.n2)
            elif isinstance(el, Transistor):
                union(el.d, el.s)
                union(el.g, el.s)
        root = find(self.ground)
        for n in self.nodes:
            if find(n) != root:
                raise NetlistError(f"node {n!r} has no DC path to ground")


@dataclass
class Waveform:
    t: np.ndarray  # s
    v: np.ndarray  # V

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if len(self.t) != len(self.v):
            raise ConfigurationError("waveform arrays differ in length")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ConfigurationError("waveform times must be strictly increasing")

    def at(self, t):
        return np.interp(t, self.t, self.v)


def _pwl_value(pwl, t):
    ts = [p[0] for p in pwl]
    vs = [p[1] for p in pwl]
    return float(np.interp(t, ts, vs))


class _Mna:
    def __init__(self, netlist: Netlist):
        netlist.validate_for_transient()
        self.netlist = netlist
        self.node_names = [n for n in netlist.nodes if n != netlist.ground]
        self.node_index = {n: i for i, n in enumerate(self.node_names)}
        self.vsources = [el for el in netlist.elements if isinstance(el, VSource)]
        self.nv = len(self.node_names)
        self.n = self.nv + len(self.vsources)
        self.transistors = [el for el in netlist.elements if isinstance(el, Transistor)]

        self.g_static = np.zeros((self.n, self.n))
        self.c_mat = np.zeros((self.n, self.n))
        for el in netlist.elements:
            if isinstance(el, Resistor):
                if not el.value > 0:
                    raise NetlistError(f"{el.name}: resistance must be positive")
                self._stamp_pair(self.g_static, el.n1, el.n2, 1.0 / el.value)
            elif isinstance(el, Capacitor):
                if el.value < 0:
                    raise NetlistError(f"{el.name}: negative capacitance")
                self._stamp_pair(self.c_mat, el.n1, el.n2, el.value)
        for k, src in enumerate(self.vsources):
            row = self.nv + k
            for node, sign in ((src.n1, 1.0), (src.n2, -1.0)):
                i = self._idx(node)
                if i is not None:
                    self.g_static[row, i] += sign
                    self.g_static[i, row] += sign

    def _idx(self, node):
        if node == self.netlist.ground:
            return None
        return self.node_index[node]

    def _stamp_pair(self, mat, n1, n2, g):
        i, j = self._idx(n1), self._idx(n2)
        if i is not None:
            mat[i, i] += g
        if j is not None:
            mat[j, j] += g
        if i is not None and j is not None:
            mat[i, j] -= g
            mat[j, i] -= g

    def source_vector(self, t, scale=1.0):
        s = np.zeros(self.n)
        for k, src in enumerate(self.vsources):
            s[self.nv + k] = scale * _pwl_value(src.pwl, t)
        return s

    def _device_stamps(self, x):
        """Nonlinear currents and their Jacobian at node voltages x."""
        f = np.zeros(self.n)
        j = np.zeros((self.n, self.n))
        h = 1e-6
        for tr in self.transistors:
            vd = x[self._idx(tr.d)] if self._idx(tr.d) is not None else 0.0
            vg = x[self._idx(tr.g)] if self._idx(tr.g) is not None else 0.0
            vs = x[self._idx(tr.s)] if self._idx(tr.s) is not None else 0.0
            vgs, vds = vg - vs, vd - vs
            i0 = drain_current(tr.params, vgs, vds, tr.temperature)
            gm = (drain_current(tr.params, vgs + h, vds, tr.temperature) - i0) / h
            gd = (drain_current(tr.params, vgs, vds + h, tr.temperature) - i0) / h
            di, si = self._idx(tr.d), self._idx(tr.s)
            gi = self._idx(tr.g)
            if di is not None:
                f[di] += i0
            if si is not None:
                f[si] -= i0
            for node_i, sign in ((di, 1.0), (si, -1.0)):
                if node_i is None:
                    continue
                if gi is not None:
                    j[node_i, gi] += sign * gm
                if di is not None:
                    j[node_i, di] += sign * gd
                if si is not None:
                    j[node_i, si] += sign * (-gm - gd)
        return f, j

    def newton(self, x_prev, t, dt, abstol, max_iter=60, source_scale=1.0):
        """Solve the BE step equations; dt=None means a DC solve.

        Per-iteration updates are clamped to 0.3 V so the exponential
        device characteristics cannot throw the iteration into overflow.
        """
        x = x_prev.copy()
        c_over_dt = self.c_mat / dt if dt is not None else None
        s = self.source_vector(t, source_scale)
        for _ in range(max_iter):
            f_nl, j_nl = self._device_stamps(x)
            resid = self.g_static @ x + f_nl - s
            jac = self.g_static + j_nl
            if c_over_dt is not None:
                resid = resid + c_over_dt @ (x - x_prev)
                jac = jac + c_over_dt
            try:
                delta = np.linalg.solve(jac, -resid)
            except np.linalg.LinAlgError:
                raise NetlistError("singular MNA matrix") from None
            x = x + np.clip(delta, -0.3, 0.3)
            if np.max(np.abs(delta)) < abstol:
                return x
        return None

    def dc_operating_point(self, abstol):
        x = np.zeros(self.n)
        sol = self.newton(x, 0.0, None, abstol)
        if sol is not None:
            return sol
        for scale in np.linspace(0.1, 1.0, 10):
            nxt = self.newton(x, 0.0, None, abstol, source_scale=float(scale))
            if nxt is None:
                raise TransientFailureError("DC operating point did not converge", time=0.0)
            x = nxt
        return x


def transient(netlist: Netlist, tstop: float, dt: float,
              abstol: float = 1e-6) -> dict[str, Waveform]:
    """Backward Euler transient; deterministic for fixed inputs.

    Steps that fail Newton are retried at halved dt down to dt/64, then
    raise with the failing timestamp. Sample times include any refined
    sub-steps that were taken.
    """
    if not dt > 0 or not tstop > 0:
        raise ConfigurationError("tstop and dt must be positive")
    mna = _Mna(netlist)
    x = mna.dc_operating_point(abstol)
    times = [0.0]
    states = [x]

    t = 0.0
    n_steps = int(round(tstop / dt))
    for k in range(1, n_steps + 1):
        t_next = k * dt
        x, sub = _advance(mna, x, t, t_next, dt, abstol)
        for ts, xs in sub:
            times.append(ts)
            states.append(xs)
        t = t_next

    arr = np.array(states)
    t_arr = np.array(times)
    out = {netlist.ground: Waveform(t_arr, np.zeros(len(t_arr)))}
    for name, i in mna.node_index.items():
        out[name] = Waveform(t_arr, arr[:, i])
    return out


def _advance(mna, x, t0, t1, dt, abstol, depth=0):
    sol = mna.newton(x, t1, t1 - t0, abstol)
    if sol is not None:
        return sol, [(t1, sol)]
    if depth >= 6:
        raise TransientFailureError(
            f"Newton failed at t={t1:.3e} s even at dt/64", time=t1)
    tm = 0.5 * (t0 + t1)
    xa, sub_a = _advance(mna, x, t0, tm, dt, abstol, depth + 1)
    xb, sub_b = _advance(mna, xa, tm, t1, dt, abstol, depth + 1)
    return xb, sub_a + sub_b


def _crossings(wave: Waveform, level: float):
    """(time, direction) of linearly interpolated level crossings.

    Works on sign transitions between non-level samples, so a sample
    landing exactly on the level counts as one crossing, not two.
    """
    v = wave.v - level
    out = []
    last_sign = 0
    last_i = 0
    for i, value in enumerate(v):
        s = 1 if value > 0 else (-1 if value < 0 else 0)
        if s == 0:
            continue
        if last_sign != 0 and s != last_sign:
            a, b = v[last_i], v[i]
            tc = wave.t[last_i] + (0.0 - a) * (wave.t[i] - wave.t[last_i]) / (b - a)
            out.append((float(tc), s))
        last_sign, last_i = s, i
    return out


def propagation_delay(vin: Waveform, vout: Waveform, vdd: float) -> float:
    """Mean of the two 50 percent input-to-output crossing delays."""
    if abs(vin.t[0] - vout.t[0]) > 0 or abs(vin.t[-1] - vout.t[-1]) > 0:
        raise MeasurementError("input and output waveforms span different ranges")
    half = 0.5 * vdd
    in_cross = _crossings(vin, half)
    rising = [t for t, d in in_cross if d > 0]
    falling = [t for t, d in in_cross if d < 0]
    if len(rising) != 1 or len(falling) != 1:
        raise MeasurementError(
            f"input needs exactly one rising and one falling edge, got "
            f"{len(rising)} and {len(falling)}")
    out_cross = _crossings(vout, half)
    delays = []
    for t_in, want in ((rising[0], -1), (falling[0], 1)):
        after = [t for t, d in out_cross if d == want and t >= t_in]
        if not after:
            raise MeasurementError("output never crosses 50 percent after the input edge")
        delays.append(after[0] - t_in)
    return 0.5 * (delays[0] + delays[1])


@dataclass(frozen=True)
class Stimulus:
    edge_ps: float = 1.0
    period_ps: float = 20.0
    dt_fs: float = 5.0

    def pwl(self, vdd: float):
        ps = 1e-12
        t_rise = 0.1 * self.period_ps
        t_fall = 0.6 * self.period_ps
        return (
            (0.0, 0.0),
            (t_rise * ps, 0.0),
            ((t_rise + self.edge_ps) * ps, vdd),
            (t_fall * ps, vdd),
            ((t_fall + self.edge_ps) * ps, 0.0),
            (self.period_ps * ps, 0.0),
        )

    @property
    def tstop(self) -> float:
        return self.period_ps * 1e-12

    @property
    def dt(self) -> float:
        return self.dt_fs * 1e-15


RAIL_PAIRS = (("Input", "Gate"), ("Output", "Drain"),
              ("Power", "PSource"), ("Ground", "NSource"))


def build_inverter_netlist(nparams: CompactModelParams, pparams: CompactModelParams,
                           vdd: float, load_c: float, stimulus: Stimulus,
                           parasitics: Netlist | None = None,
                           t_n: float = 300.0, t_p: float = 300.0) -> Netlist:
    """CMOS inverter with intrinsic device caps, optionally spliced parasitics.

    Rail-side nodes keep the names Input / Output / Power; Ground is the
    global reference. A parasitic rail resistor separates the device-side
    node from its rail, otherwise the two are merged.
    """
    nl = Netlist()
    para_elements = list(parasitics.elements) if parasitics is not None else []
    have_r = set()
    for el in para_elements:
        if isinstance(el, Resistor):
            have_r.add(frozenset((el.n1, el.n2)))

    node_of = {"Input": "Input", "Output": "Output", "Power": "Power",
               "Ground": GROUND, "Gate": "Gate", "Drain": "Drain",
               "PSource": "PSource", "NSource": "NSource"}
    for rail, dev in RAIL_PAIRS:
        if frozenset((rail, dev)) not in have_r:
            node_of[dev] = node_of[rail]

    nl.add(VSource("Vdd", node_of["Power"], GROUND, ((0.0, vdd),)))
    nl.add(VSource("Vin", node_of["Input"], GROUND, stimulus.pwl(vdd)))

    nl.add(Transistor("Mn", d=node_of["Drain"], g=node_of["Gate"],
                      s=node_of["NSource"], params=nparams, temperature=t_n))
    nl.add(Transistor("Mp", d=node_of["Drain"], g=node_of["Gate"],
                      s=node_of["PSource"], params=pparams, temperature=t_p))

    nl.add(Capacitor("Cgdn", node_of["Gate"], node_of["Drain"], nparams.c_gd))
    nl.add(Capacitor("Cgsn", node_of["Gate"], node_of["NSource"],
                     max(nparams.c_g - nparams.c_gd, 0.0)))
    nl.add(Capacitor("Cgdp", node_of["Gate"], node_of["Drain"], pparams.c_gd))
    nl.add(Capacitor("Cgsp", node_of["Gate"], node_of["PSource"],
                     max(pparams.c_g - pparams.c_gd, 0.0)))
    if load_c > 0:
        nl.add(Capacitor("Cload", node_of["Output"], GROUND, load_c))

    for el in para_elements:
        rename = lambda n: GROUND if n == "Ground" else n
        if isinstance(el, Resistor):
            nl.add(Resistor(el.name, rename(el.n1), rename(el.n2), el.value))
        elif isinstance(el, Capacitor):
            nl.add(Capacitor(el.name, rename(el.n1), rename(el.n2), el.value))
        else:
            raise NetlistError(f"cannot splice element {el!r}")
    return nl


@dataclass
class InverterResult:
    tp_without: float  # s
    tp_with: float  # s
    waves_without: dict
    waves_with: dict

    @property
    def degradation(self) -> float:
        return self.tp_with / self.tp_without - 1.0


def inverter_experiment(nparams: CompactModelParams, pparams: CompactModelParams,
                        vdd: float = 0.75, parasitic_netlist: Netlist | None = None,
                        load_c: float = 1e-16, stimulus: Stimulus = Stimulus(),
                        t_n: float = 300.0, t_p: float = 300.0,
                        abstol: float = 1e-6) -> InverterResult:
    """Propagation delay with and without the spliced parasitic network."""
    base = build_inverter_netlist(nparams, pparams, vdd, load_c, stimulus,
                                  None, t_n, t_p)
    waves_base = transient(base, stimulus.tstop, stimulus.dt, abstol)
    tp_base = propagation_delay(waves_base["Input"], waves_base["Output"], vdd)

    if parasitic_netlist is None or not parasitic_netlist.elements:
        return InverterResult(tp_base, tp_base, waves_base, waves_base)

    spliced = build_inverter_netlist(nparams, pparams, vdd, load_c, stimulus,
                                     parasitic_netlist, t_n, t_p)
    waves_para = transient(spliced, stimulus.tstop, stimulus.dt, abstol)
    tp_para = propagation_delay(waves_para["Input"], waves_para["Output"], vdd)
    return InverterResult(tp_base, tp_para, waves_base, waves_para)


@dataclass
class SheDelayResult:
    result: InverterResult
    delta_t: dict[str, float]
    t_channel: dict[str, float]


def electro_thermal_delay(nparams, pparams, ctx_n, ctx_p, vdd: float = 0.75,
                          parasitic_netlist=None, load_c: float = 1e-16,
                          stimulus: Stimulus = Stimulus()) -> SheDelayResult:
    """Delays at self-heated channel temperatures (worst-case on-state bias)."""
    op_n = she_operating_point(nparams, vdd, vdd, ctx_n)
    op_p = she_operating_point(pparams, -vdd, -vdd, ctx_p)
    res = inverter_experiment(nparams, pparams, vdd, parasitic_netlist, load_c,
                              stimulus, t_n=op_n.t_channel, t_p=op_p.t_channel)
    return SheDelayResult(
        result=res,
        delta_t={"n": op_n.delta_t, "p": op_p.delta_t},
        t_channel={"n": op_n.t_channel, "p": op_p.t_channel},
    )


def waveforms_csv(waves: dict[str, Waveform]) -> str:
    names = sorted(n for n in waves if n != GROUND)
    t = waves[names[0]].t
    lines = ["t_s," + ",".join(names)]
    for i in range(len(t)):
        lines.append(f"{float(t[i])!r}," + ",".join(repr(float(waves[n].v[i])) for n in names))
    return "\n".join(lines) + "\n"
