"""JSON persistence for signals, operators, controllers and plant configs.

Complex arrays are stored as separate real and imaginary lists.  Plant
configurations are either a named builtin benchmark or a generic
description with polynomial/trigonometric tables per matrix entry and
explicit breakpoints.
"""

import bisect
import json
from pathlib import Path

import numpy as np

from .lifting import LiftedSteadyStateOperator
from .plant import PeriodicPlant
from .regulators import FeedbackController, FeedforwardLaw
from .signals import PeriodicSignal, SignalBasis


def save_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
    return Path(path)


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _complex_out(arr):
    arr = np.asarray(arr)
    return np.real(arr).tolist(), np.imag(arr).tolist()


def _complex_in(re, im):
    return np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)


# -- signals ----------------------------------------------------------------

def signal_to_dict(sig: PeriodicSignal) -> dict:
    re, im = _complex_out(sig.coeffs)
    return {"tau": sig.basis.tau, "K": sig.basis.K, "m": sig.basis.m,
            "coeffs_re": re, "coeffs_im": im}


def signal_from_dict(d: dict) -> PeriodicSignal:
    basis = SignalBasis(float(d["tau"]), int(d["K"]), int(d["m"]))
    return PeriodicSignal(basis, _complex_in(d["coeffs_re"], d["coeffs_im"]))


def signal_to_csv(sig: PeriodicSignal, path, n_samples=512):
    """Time-domain trace (t, value columns) over one period."""
    import csv
    times = np.linspace(0.0, sig.basis.tau, n_samples)
    vals = np.real(sig.evaluate_complex(times))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"] + [f"value{c}" for c in range(sig.basis.m)])
        for i, t in enumerate(times):
            wr.writerow([f"{t:.9g}"] + [f"{v:.12g}" for v in vals[:, i]])
    return Path(path)


def signal_from_csv(path, basis: SignalBasis) -> PeriodicSignal:
    """Project a recorded (t, y...) CSV trace spanning one period."""
    from .signals import signal_from_trace
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return signal_from_trace(data[:, 0], data[:, 1:1 + basis.m], basis)


# -- steady-state operators --------------------------------------------------

def operator_to_dict(op: LiftedSteadyStateOperator) -> dict:
    re, im = _complex_out(op.matrix)
    return {
        "in_basis": {"tau": op.in_basis.tau, "K": op.in_basis.K,
                     "m": op.in_basis.m},
        "out_basis": {"tau": op.out_basis.tau, "K": op.out_basis.K,
                      "m": op.out_basis.m},
        "matrix_re": re, "matrix_im": im,
        "source": op.source,
        "resolvent_condition": op.resolvent_condition,
    }


def operator_from_dict(d: dict) -> LiftedSteadyStateOperator:
    ib = d["in_basis"]
    ob = d["out_basis"]
    return LiftedSteadyStateOperator(
        in_basis=SignalBasis(float(ib["tau"]), int(ib["K"]), int(ib["m"])),
        out_basis=SignalBasis(float(ob["tau"]), int(ob["K"]), int(ob["m"])),
        matrix=_complex_in(d["matrix_re"], d["matrix_im"]),
        source=d.get("source", "quadrature"),
        resolvent_condition=d.get("resolvent_condition"))


# -- controllers --------------------------------------------------------------

def controller_to_dict(ctrl) -> dict:
    if isinstance(ctrl, FeedforwardLaw):
        return {"kind": "feedforward",
                "u_reg": signal_to_dict(ctrl.u_reg),
                "residual": ctrl.residual}
    out = {"kind": ctrl.kind, "epsilon": ctrl.epsilon,
           "u_basis": {"tau": ctrl.u_basis.tau, "K": ctrl.u_basis.K,
                       "m": ctrl.u_basis.m},
           "y_basis": {"tau": ctrl.y_basis.tau, "K": ctrl.y_basis.K,
                       "m": ctrl.y_basis.m}}
    for name in ("G1", "G2", "K0", "Q"):
        mat = getattr(ctrl, name)
        if mat is None:
            out[name] = None
        else:
            re, im = _complex_out(mat)
            out[name] = {"re": re, "im": im}
    out["yn_indices"] = None if ctrl.yn_indices is None \
        else np.asarray(ctrl.yn_indices).tolist()
    out["selected_indices"] = list(ctrl.selected_indices)
    return out


def controller_from_dict(d: dict):
    if d["kind"] == "feedforward":
        return FeedforwardLaw(u_reg=signal_from_dict(d["u_reg"]),
                              residual=float(d["residual"]))

    def mat(name):
        entry = d[name]
        return None if entry is None else _complex_in(entry["re"], entry["im"])

    ub, yb = d["u_basis"], d["y_basis"]
    return FeedbackController(
        kind=d["kind"],
        G1=np.real(mat("G1")), G2=mat("G2"), K0=mat("K0"), Q=mat("Q"),
        epsilon=float(d["epsilon"]),
        u_basis=SignalBasis(float(ub["tau"]), int(ub["K"]), int(ub["m"])),
        y_basis=SignalBasis(float(yb["tau"]), int(yb["K"]), int(yb["m"])),
        yn_indices=None if d.get("yn_indices") is None
        else np.asarray(d["yn_indices"], dtype=int),
        selected_indices=tuple(d.get("selected_indices", ())))


# -- plant configurations -----------------------------------------------------

def _entry_evaluator(spec, tau):
    """Evaluator for one matrix entry.

    ``spec`` is a number (constant), a dict with optional "poly" (ascending
    coefficients in t), "cos"/"sin" ([[amplitude, angular-frequency], ...]),
    or {"pieces": [{"start": t0, ...terms...}, ...]} for piecewise entries.
    """
    if isinstance(spec, (int, float)):
        val = float(spec)
        return (lambda t: val), []

    def term_eval(terms):
        poly = list(reversed(terms.get("poly", []))) or [0.0]
        cos = [(float(a), float(w)) for a, w in terms.get("cos", [])]
        sin = [(float(a), float(w)) for a, w in terms.get("sin", [])]

        def f(t):
            v = np.polyval(poly, t)
            for a, w in cos:
                v += a * np.cos(w * t)
            for a, w in sin:
                v += a * np.sin(w * t)
            return v

        return f

    if "pieces" in spec:
        pieces = sorted(spec["pieces"], key=lambda p: float(p["start"]))
        starts = [float(p["start"]) for p in pieces]
        fns = [term_eval(p) for p in pieces]
        if starts[0] != 0.0:
            raise ValueError("first piece must start at t = 0")

        def f(t):
            i = bisect.bisect_right(starts, t) - 1
            return fns[i](t)

        return f, [s for s in starts if s > 0.0]
    return term_eval(spec), []


def _matrix_evaluator(table, shape, tau):
    rows = len(table)
    cols = len(table[0]) if rows else 0
    if (rows, cols) != shape:
        raise ValueError(f"coefficient table is {rows}x{cols}, "
                         f"expected {shape[0]}x{shape[1]}")
    entries = []
    breakpoints = set()
    for i, row in enumerate(table):
        for j, spec in enumerate(row):
            fn, bps = _entry_evaluator(spec, tau)
            entries.append((i, j, fn))
            breakpoints.update(bps)

    def evaluator(t):
        out = np.zeros(shape)
        for i, j, fn in entries:
            out[i, j] = fn(t)
        return out

    return evaluator, breakpoints


def plant_from_config(config) -> PeriodicPlant:
    """Build a plant from a configuration dict or JSON path.

    Either ``{"builtin": "oscillators" | "heat2d", ...}`` or a generic
    description::

        {"tau": ..., "n_x": ..., "n_u": ..., "n_w": ..., "n_y": ...,
         "A": [[entry, ...], ...], "B": ..., "Bd": ..., "C": ..., "D": ...,
         "breakpoints": [...], "piecewise_constant": false}

    where each entry is a constant or a poly/cos/sin (optionally piecewise)
    table; see :func:`_entry_evaluator`.
    """
    if isinstance(config, (str, Path)):
        config = load_json(config)
    if "builtin" in config:
        from . import benchmarks
        name = config["builtin"]
        if name == "oscillators":
            return benchmarks.oscillator_plant()
        if name == "heat2d":
            return benchmarks.heat_plant(int(config.get("n_grid", 12)))
        raise ValueError(f"unknown builtin plant {name!r}")

    tau = float(config["tau"])
    dims = {k: int(config[k]) for k in ("n_x", "n_u", "n_w", "n_y")}
    shapes = {"A": (dims["n_x"], dims["n_x"]),
              "B": (dims["n_x"], dims["n_u"]),
              "Bd": (dims["n_x"], dims["n_w"]),
              "C": (dims["n_y"], dims["n_x"]),
              "D": (dims["n_y"], dims["n_u"])}
    evaluators = {}
    breakpoints = {float(b) for b in config.get("breakpoints", [])}
    for key, shape in shapes.items():
        if key in config:
            evaluators[key], bps = _matrix_evaluator(config[key], shape, tau)
            breakpoints.update(bps)
        else:
            evaluators[key] = None
    return PeriodicPlant(
        tau=tau, A_of_t=evaluators["A"], B_of_t=evaluators["B"],
        Bd_of_t=evaluators["Bd"], C_of_t=evaluators["C"],
        D_of_t=evaluators["D"], breakpoints=sorted(breakpoints),
        piecewise_constant=bool(config.get("piecewise_constant", False)),
        name=config.get("name", "config"), **dims)


def signal_from_spec(spec, default_basis: SignalBasis = None) -> PeriodicSignal:
    """Build a signal from serialized coefficients or a terms description.

    Accepts :func:`signal_to_dict` output, or::

        {"tau": ..., "K": ..., "channels": [{"const": c,
            "cos": [[a, k], ...], "sin": [[a, k], ...]}, ...]}

    or ``{"triangle": true, "tau": ..., "K": ...}`` for the zero-mean unit
    triangle wave.  Missing tau/K fall back to ``default_basis``.
    """
    if isinstance(spec, (str, Path)):
        spec = load_json(spec)
    if "coeffs_re" in spec:
        return signal_from_dict(spec)
    tau = float(spec.get("tau", default_basis.tau if default_basis else 0))
    K = int(spec.get("K", default_basis.K if default_basis else 0))
    if tau <= 0 or K <= 0:
        raise ValueError("signal spec needs tau and K (or a default basis)")
    if spec.get("triangle"):
        from .regulators import make_triangle_reference
        m = int(spec.get("m", default_basis.m if default_basis else 1))
        return make_triangle_reference(SignalBasis(tau, K, m))
    channels = spec["channels"]
    basis = SignalBasis(tau, K, len(channels))
    return PeriodicSignal.from_terms(basis, channels)
