"""Maslov phases along framed paths, loop indices and gauge sweeps.

The Maslov phase of a Lagrangian plane is arg Omega^2 evaluated on any real
basis of it; real basis changes multiply Omega^2 by det(C)^2 > 0. A path's
winding is the unwrapped phase change divided by 2 pi, and a loop's index is
the sum of its windings plus the phase corrections at the gluing junctions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from handlemaslov.errors import GluingError, NonConvergenceError, ParameterError, RefinementNeeded
from handlemaslov.lagrangians import (
    PathSegment,
    build_scenario_A,
    gamma5_segment,
    initial_frame,
    transport_step,
)
from handlemaslov.spaces import sphere_tangent_basis

GAP_LIMIT = math.pi / 2
FRAME_JUMP_LIMIT = 0.1
MAX_DEPTH = 24
INITIAL_SAMPLES = 33
JUNCTION_LIMIT = 0.1
SNAP_LIMIT = 0.05


def wrap(angle):
    """Representative of ``angle`` modulo 2 pi in (-pi, pi]."""
    a = math.remainder(float(angle), 2 * math.pi)
    return math.pi if a == -math.pi else a


def frame_phase(space, x, frame):
    w = space.volume_form_sq(x, frame)
    return math.atan2(w.imag, w.real), abs(w)


@dataclass
class PhaseTrace:
    segment: str
    s: np.ndarray
    phase: np.ndarray
    modulus: np.ndarray
    depth: int
    first_frame: np.ndarray = field(repr=False)
    last_frame: np.ndarray = field(repr=False)

    @property
    def winding(self):
        return float((self.phase[-1] - self.phase[0]) / (2 * math.pi))

    def max_gap(self):
        return float(np.max(np.abs(np.diff(self.phase)))) if len(self.phase) > 1 else 0.0

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "phase", "modulus"])
        for s, ph, mod in zip(self.s, self.phase, self.modulus):
            writer.writerow([repr(float(s)), repr(float(ph)), repr(float(mod))])
        return buf.getvalue()


def phase_trace(seg: PathSegment, n_initial=INITIAL_SAMPLES, basis=None, max_depth=MAX_DEPTH):
    """Adaptive unwrapped phase of Omega^2 along transported frames.

    Steps are halved until consecutive phases differ by less than pi/2 and
    consecutive frames by less than 0.1 in operator norm.
    """
    space = seg.patch.space
    grid = sorted(set(np.linspace(0.0, 1.0, n_initial).tolist()) | set(seg.breakpoints))
    frame = initial_frame(seg, 0.0, basis)
    ph, mod = frame_phase(space, seg.point(0.0), frame)
    if mod <= 0:
        raise NonConvergenceError("degenerate frame at s = 0", worst=0.0)
    s_list, ph_list, mod_list = [0.0], [ph], [mod]
    first = frame
    deepest = 0
    s_cur, raw_cur = 0.0, ph
    for target in grid[1:]:
        depth = 0
        worst = 0.0
        while s_cur < target:
            step = s_cur + (target - s_cur) / 2.0**depth
            try:
                new = transport_step(seg, frame, step)
                raw, mod = frame_phase(space, seg.point(step), new)
                gap = abs(wrap(raw - raw_cur))
                jump = np.linalg.norm(new - frame, 2)
                ok = gap < GAP_LIMIT and jump < FRAME_JUMP_LIMIT and mod > 0
                worst = max(worst, gap)
            except RefinementNeeded:
                ok = False
            if not ok:
                depth += 1
                if depth > max_depth:
                    raise NonConvergenceError(
                        f"{seg.name}: phase refinement exceeded depth {max_depth} near s = {s_cur:.6g} "
                        f"(worst gap {worst:.3g})", worst=worst)
                continue
            deepest = max(deepest, depth)
            ph_list.append(ph_list[-1] + wrap(raw - raw_cur))
            s_list.append(step)
            mod_list.append(mod)
            frame, s_cur, raw_cur = new, step, raw
            depth = max(depth - 1, 0)
    return PhaseTrace(seg.name, np.array(s_list), np.array(ph_list), np.array(mod_list), deepest,
                      first, frame)


def winding(seg: PathSegment, **kwargs):
    return phase_trace(seg, **kwargs).winding


# ---------------------------------------------------------------------------
# closed-form integrands

def _surgery(sign):
    def formula(t, seg):
        psi = seg.context["profiles"].psi
        n = seg.context["n"]
        a = psi.d1(t) - sign * 1j * psi.d1(-t)
        b = psi(t) + sign * 1j * psi(-t)
        return a**2 * b ** (2 * n - 2)
    return formula


def _handle_core(t, seg):
    ctx = seg.context
    g = ctx["profiles"].g_handle[ctx["handle_index"]]
    n, k = ctx["n"], ctx.get("gauge_k", 0)
    return (1 + 1j * g.d2(t)) ** 2 * np.exp(1j * np.pi * (t + 1) * ((n - 2) / 2 + k))


def _crit_core(t, seg):
    ctx = seg.context
    eps, phi, n = ctx["epsilon"], ctx["phi"], ctx["n"]
    return -((1 + 1j * eps * phi.d1(t)) ** 2) * (t + 1j * eps * phi(t)) ** (2 * n - 2)


CLOSED_FORMS = {
    "surgery_L1": _surgery(1.0),
    "surgery_L2": _surgery(-1.0),
    "handle_core": _handle_core,
    "crit_core": _crit_core,
}


def closed_form_deviation(seg: PathSegment, formula=None, n_samples=401):
    """Max |Omega^2(partial frame) - integrand| over s-samples and breakpoints.

    The frame is [dF/dt, dF[e_a]] with e_a orthonormal on the sphere, the
    frame the catalogued integrands are written for.
    """
    key = formula or seg.formula
    if key not in CLOSED_FORMS:
        raise ParameterError(f"no catalogued closed form for segment {seg.name!r} ({key!r})")
    fn = CLOSED_FORMS[key]
    space = seg.patch.space
    s_vals = sorted(set(np.linspace(0, 1, n_samples).tolist()) | set(seg.breakpoints))
    worst = 0.0
    for s in s_vals:
        t, q = seg.track(s)
        frame = seg.patch.partials(t, q, sphere_tangent_basis(q))
        value = space.volume_form_sq(seg.patch.position(t, q), frame)
        worst = max(worst, abs(value - complex(fn(t, seg))))
    return worst


# ---------------------------------------------------------------------------
# loops

@dataclass
class JunctionPhase:
    name: str
    mismatch: float
    form_part: float
    plane_part: float
    plane_residual: float

    def to_dict(self):
        return {"name": self.name, "mismatch": self.mismatch, "form_part": self.form_part,
                "plane_part": self.plane_part, "plane_residual": self.plane_residual}


def junction_phase(junction, from_seg, from_trace, to_seg, to_trace):
    """Phase jump across a junction, split into form and plane parts.

    form part: arg Omega^2_to(push F) - arg Omega^2_from(F) for the incoming
    end frame F; plane part: arg Omega^2_to(outgoing start frame) -
    arg Omega^2_to(push F).
    """
    x_from = from_seg.point(1.0)
    x_to = to_seg.point(0.0)
    f_end = from_trace.last_frame
    f_start = to_trace.first_frame
    pushed = junction.ident.push(x_from, f_end)
    a_from, _ = frame_phase(from_seg.patch.space, x_from, f_end)
    a_push, _ = frame_phase(to_seg.patch.space, x_to, pushed)
    a_to, _ = frame_phase(to_seg.patch.space, x_to, f_start)
    coeff, *_ = np.linalg.lstsq(f_start, pushed, rcond=None)
    residual = float(np.linalg.norm(f_start @ coeff - pushed) / max(np.linalg.norm(pushed), 1e-300))
    return JunctionPhase(junction.name, wrap(a_to - a_from), wrap(a_push - a_from), wrap(a_to - a_push),
                         residual)


@dataclass
class MaslovReport:
    loop: str
    per_segment: list
    junctions: list
    total_raw: float
    total_index: int
    snap_error: float
    gauge_k: int = 0
    traces: dict = field(default_factory=dict, repr=False)

    @property
    def junction_phase_mismatch(self):
        return [j.mismatch for j in self.junctions]

    def winding(self, name):
        return dict(self.per_segment)[name]

    def to_dict(self):
        return {
            "loop": self.loop,
            "per_segment": [{"name": nm, "winding": w} for nm, w in self.per_segment],
            "junctions": [j.to_dict() for j in self.junctions],
            "total_raw": self.total_raw,
            "total_index": self.total_index,
            "snap_error": self.snap_error,
            "gauge_k": self.gauge_k,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def maslov_index(loop, junctions=None, gauge_k=0, name=None):
    """Index of a closed loop of segments.

    ``loop`` is a :class:`Loop` or a list of segments (then ``junctions`` is
    required, junction i joining segment i to segment i+1 cyclically).
    Junction phase jumps of 0.1 rad or more raise :class:`GluingError`.
    """
    if hasattr(loop, "segments"):
        segments, junctions, name = loop.segments, loop.junctions, name or loop.name
    else:
        segments = list(loop)
    if junctions is None or len(junctions) != len(segments):
        raise ParameterError("a closed loop needs one junction per segment")
    traces = {seg.name: phase_trace(seg) for seg in segments}
    per_segment = [(seg.name, traces[seg.name].winding) for seg in segments]
    phases = []
    for i, junc in enumerate(junctions):
        a, b = segments[i], segments[(i + 1) % len(segments)]
        phases.append(junction_phase(junc, a, traces[a.name], b, traces[b.name]))
    bad = [j for j in phases if abs(j.mismatch) >= JUNCTION_LIMIT]
    if bad:
        raise GluingError(
            "junction phase mismatch >= 0.1 rad: "
            + ", ".join(f"{j.name} = {j.mismatch:.4f}" for j in bad),
            mismatches=[j.to_dict() for j in phases],
        )
    total = math.fsum([w for _, w in per_segment] + [j.mismatch / (2 * math.pi) for j in phases])
    index = int(round(total))
    snap = abs(total - index)
    if snap >= SNAP_LIMIT:
        raise GluingError(f"loop total {total:.4f} is not within {SNAP_LIMIT} of an integer",
                          mismatches=[j.to_dict() for j in phases])
    return MaslovReport(name or "loop", per_segment, phases, total, index, snap, gauge_k, traces)


def scenario_indices(scenario):
    return {name: maslov_index(loop, gauge_k=scenario.gauge_k) for name, loop in scenario.loops.items()}


def gauge_sweep(scenario, ks):
    """Loop indices of scenario A for each volume-form gauge in ``ks``."""
    if scenario.name != "A":
        raise ParameterError("the gauge family lives on the cylindrical handle of scenario A")
    rows = []
    for k in ks:
        sc = build_scenario_A(scenario.n, scenario.profiles, gauge_k=int(k), validate=False)
        reports = scenario_indices(sc)
        i1 = reports["sigma1*gamma1"].total_index
        i2 = reports["sigma2*gamma2"].total_index
        rows.append({"k": int(k), "index_sigma1_gamma1": i1, "index_sigma2_gamma2": i2,
                     "difference": i2 - i1})
    return rows


def epsilon_sweep(n, epsilons, phi=None):
    """Rows (epsilon, winding(gamma5), |winding - (1 - n)|)."""
    if len(epsilons) == 0:
        raise ParameterError("epsilon list is empty")
    rows = []
    for eps in epsilons:
        w = winding(gamma5_segment(n, eps, phi))
        rows.append((float(eps), w, abs(w - (1 - n))))
    return rows
