"""Bundled benchmark studies: coupled harmonic oscillators with periodic
damping, and a nonautonomous 2-D heat equation with boundary disturbance.

Both systems are exponentially stable 2*pi-periodic plants.  The suite
runners execute the full identify -> synthesize -> simulate pipeline for a
chosen controller mode and return a report bundle (optionally writing CSV
and JSON artifacts).
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .closed_loop import (build_closed_loop_matrix, fit_decay_rate,
                          simulate_closed_loop, tune_epsilon)
from .identification import IdentificationConfig, measure_P, measure_Pd_w
from .lifting import lift, steady_state_operator
from .plant import EvolutionFamily, PeriodicPlant, PlantDelta
from .regulators import (ExosystemData, asymptotic_error_estimate,
                         harmonic_band_indices, make_triangle_reference,
                         synthesize_approx_robust, synthesize_feedforward,
                         synthesize_orp_feedback, triangle_wave)
from .signals import PeriodicSignal, SignalBasis

TAU = 2.0 * np.pi


# ---------------------------------------------------------------------------
# coupled oscillators
# ---------------------------------------------------------------------------

def _osc_a1(t):
    return 1.0 + np.cos(2.0 * t)


def _osc_a2(t):
    return 2.0 - abs(np.pi - t) / np.pi


def _osc_b(t):
    return 1.0 + t * (2.0 * np.pi - t) / np.pi


def _osc_g(t):
    return 1.0 + np.sin(3.0 * t) / 4.0


def oscillator_plant() -> PeriodicPlant:
    """Two harmonic oscillators with periodic damping, one-sided periodic
    coupling, periodic input gain on the first mass and position output on
    the second.  State ordering (q1, q1', q2, q2')."""

    def A(t):
        return np.array([
            [0.0, 1.0, 0.0, 0.0],
            [-1.0, -_osc_a1(t), 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [_osc_g(t), 0.0, -1.0, -_osc_a2(t)],
        ])

    def B(t):
        return np.array([[0.0], [_osc_b(t)], [0.0], [0.0]])

    Bd = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    C = np.array([[0.0, 0.0, 1.0, 0.0]])
    return PeriodicPlant(tau=TAU, n_x=4, n_u=1, n_w=2, n_y=1,
                         A_of_t=A, B_of_t=B, Bd_of_t=Bd, C_of_t=C,
                         breakpoints=(np.pi,), name="oscillators")


def oscillator_disturbance_components(K=10):
    """Dictionary of disturbance components: (cos 2t, 0), (sin t, 0),
    (0, cos 2t), (0, sin t) on a two-channel basis."""
    basis = SignalBasis(TAU, K, 2)
    return [
        PeriodicSignal.from_terms(basis, [{"cos": [[1.0, 2]]}, {}]),
        PeriodicSignal.from_terms(basis, [{"sin": [[1.0, 1]]}, {}]),
        PeriodicSignal.from_terms(basis, [{}, {"cos": [[1.0, 2]]}]),
        PeriodicSignal.from_terms(basis, [{}, {"sin": [[1.0, 1]]}]),
    ]


def oscillator_y_ref(K=10):
    """Reference 1 + sin t on the scalar output basis."""
    return PeriodicSignal.from_terms(
        SignalBasis(TAU, K, 1), [{"const": 1.0, "sin": [[1.0, 1]]}])


def oscillator_coupling_delta(scale) -> PlantDelta:
    """Perturbation scaling the oscillator coupling gain by ``scale``."""

    def dA(t):
        out = np.zeros((4, 4))
        out[3, 0] = (scale - 1.0) * _osc_g(t)
        return out

    return PlantDelta(A_add=dA)


@dataclass
class OscillatorBenchmark:
    plant: PeriodicPlant
    y_ref: PeriodicSignal
    disturbance_components: list
    tau: float = TAU


def oscillator_benchmark(K=10) -> OscillatorBenchmark:
    return OscillatorBenchmark(plant=oscillator_plant(),
                               y_ref=oscillator_y_ref(K),
                               disturbance_components=
                               oscillator_disturbance_components(K))


# ---------------------------------------------------------------------------
# 2-D heat equation
# ---------------------------------------------------------------------------

HEAT_PIECES = ((0.0, 1.0), (np.pi, 3.0), (1.5 * np.pi, 2.0))


def heat_reaction(t):
    """Piecewise-constant reaction coefficient over one period."""
    s = math.fmod(t, TAU)
    if s < 0:
        s += TAU
    val = HEAT_PIECES[0][1]
    for start, v in HEAT_PIECES:
        if s >= start:
            val = v
    return val


def heat_plant(n_grid=12) -> PeriodicPlant:
    """Finite-difference heat plant on the unit square.

    Diffusion 1/6 with a periodically switched reaction on the middle
    horizontal band; Dirichlet zero on three sides and a Neumann flux
    disturbance on the bottom edge.  The input is distributed over the
    left quarter, the output averages the right quarter.

    The grid keeps ``n_grid`` nodes per dimension: interior nodes in the
    first coordinate (spacing 1/(n_grid+1)) and, in the second, the bottom
    Neumann edge plus interior nodes (spacing 1/n_grid).  The Neumann
    ghost-node elimination puts the disturbance into the bottom-row
    entries of B_d with weight 2/(6 h).
    """
    N = n_grid
    d1 = 1.0 / (N + 1)          # xi1 in (0, 1), Dirichlet both ends
    d2 = 1.0 / N                # xi2 in [0, 1), Neumann at 0, Dirichlet at 1
    n_x = N * N

    def node(i, j):
        # i = 1..N along xi1, j = 0..N-1 along xi2
        return j * N + (i - 1)

    L = np.zeros((n_x, n_x))
    for j in range(N):
        for i in range(1, N + 1):
            p = node(i, j)
            L[p, p] -= 2.0 / d1 ** 2 + 2.0 / d2 ** 2
            if i > 1:
                L[p, node(i - 1, j)] += 1.0 / d1 ** 2
            if i < N:
                L[p, node(i + 1, j)] += 1.0 / d1 ** 2
            if j > 0:
                L[p, node(i, j - 1)] += 1.0 / d2 ** 2
            if j < N - 1:
                L[p, node(i, j + 1)] += 1.0 / d2 ** 2
            if j == 0:
                # ghost-node elimination for the zero-flux part: the
                # missing lower neighbour reflects to the upper one
                L[p, node(i, 1)] += 1.0 / d2 ** 2

    xi1 = np.array([i * d1 for j in range(N) for i in range(1, N + 1)])
    xi2 = np.array([j * d2 for j in range(N) for i in range(1, N + 1)])

    base = L / 6.0
    reaction_mask = ((xi2 >= 0.25) & (xi2 <= 0.75)).astype(float)
    R = np.diag(reaction_mask)

    cache = {}

    def A(t):
        a = heat_reaction(t)
        if a not in cache:
            cache[a] = base + a * R
        return cache[a]

    B = np.zeros((n_x, 1))
    B[xi1 <= 0.25, 0] = 4.0

    Bd = np.zeros((n_x, 1))
    Bd[xi2 == 0.0, 0] = 2.0 / (6.0 * d2)

    C = np.zeros((1, n_x))
    C[0, xi1 >= 0.75] = 4.0 * d1 * d2

    return PeriodicPlant(tau=TAU, n_x=n_x, n_u=1, n_w=1, n_y=1,
                         A_of_t=A, B_of_t=B, Bd_of_t=Bd, C_of_t=C,
                         breakpoints=(np.pi, 1.5 * np.pi),
                         piecewise_constant=True, name=f"heat2d-{N}")


def heat_y_ref(K=10):
    """Reference -(1/3) sin 3t + sin t for the heat study."""
    return PeriodicSignal.from_terms(
        SignalBasis(TAU, K, 1),
        [{"sin": [[-1.0 / 3.0, 3], [1.0, 1]]}])


@dataclass
class HeatBenchmark:
    plant: PeriodicPlant
    y_ref: PeriodicSignal
    w_dist: PeriodicSignal
    tau: float = TAU


def heat_benchmark(K=10, n_grid=12) -> HeatBenchmark:
    w = PeriodicSignal.from_terms(SignalBasis(TAU, K, 1),
                                  [{"cos": [[2.0, 2]], "sin": [[3.0, 2]]}])
    return HeatBenchmark(plant=heat_plant(n_grid), y_ref=heat_y_ref(K),
                         w_dist=w)


# ---------------------------------------------------------------------------
# suite runners
# ---------------------------------------------------------------------------

DEFAULT_EPS_GRID = tuple(np.geomspace(0.05, 0.8, 7))


def _resolve_epsilon(epsilon, default, ev, family, method="block_assembly"):
    """Benchmark gain selection: mode default when unspecified, or a grid
    search when ``epsilon == "tune"``.  Returns (epsilon, table or None)."""
    if epsilon is None:
        return float(default), None
    if epsilon == "tune":
        tuned = tune_epsilon(ev, family, DEFAULT_EPS_GRID, method=method)
        return tuned.best_epsilon, tuned.table
    return float(epsilon), None


@dataclass
class SuiteReport:
    """Bundle returned by the benchmark runners."""

    benchmark: str
    mode: str
    plant_spectral_radius: float
    per_period_errors: np.ndarray
    fitted_rate: float
    controller_kind: str = None
    epsilon: float = None
    closed_loop_radius: float = None
    feedforward_residual: float = None
    estimate: float = None
    settled_error: float = None
    tune_table: list = None
    trace: object = None
    controller: object = None
    operator: object = None
    extras: dict = field(default_factory=dict)

    def to_json_dict(self):
        out = {
            "benchmark": self.benchmark,
            "mode": self.mode,
            "plant_spectral_radius": self.plant_spectral_radius,
            "per_period_errors": list(map(float, self.per_period_errors)),
            "fitted_rate": self.fitted_rate,
            "controller_kind": self.controller_kind,
            "epsilon": self.epsilon,
            "closed_loop_radius": self.closed_loop_radius,
            "feedforward_residual": self.feedforward_residual,
            "estimate": self.estimate,
            "settled_error": self.settled_error,
        }
        if self.tune_table is not None:
            out["tune_table"] = self.tune_table
        out.update({k: v for k, v in self.extras.items()
                    if isinstance(v, (int, float, str, bool, type(None)))})
        return out


def _write_artifacts(report: SuiteReport, out_dir):
    from . import serialization
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
    with open(out / "errors.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["period", "l2_error"])
        for n, e in enumerate(report.per_period_errors):
            wr.writerow([n, f"{e:.12g}"])
    trace = report.trace
    if trace is not None and trace.times is not None:
        with open(out / "trace.csv", "w", newline="") as fh:
            wr = csv.writer(fh)
            ny = trace.outputs.shape[1]
            wr.writerow(["t"] + [f"y{i}" for i in range(ny)]
                        + [f"y_ref{i}" for i in range(ny)])
            stride = max(1, len(trace.times) // 4000)
            for k in range(0, len(trace.times), stride):
                row = [f"{trace.times[k]:.9g}"]
                row += [f"{v:.9g}" for v in np.atleast_1d(trace.outputs[k])]
                row += [f"{v:.9g}" for v in np.atleast_1d(trace.references[k])]
                wr.writerow(row)
    if report.controller is not None:
        serialization.save_json(
            serialization.controller_to_dict(report.controller),
            out / "controller.json")
    if report.operator is not None:
        serialization.save_json(
            serialization.operator_to_dict(report.operator),
            out / "operator.json")
    return out


def run_oscillator_suite(mode, settle_periods=10, epsilon=None,
                         n_periods=None, step=None, out_dir=None,
                         record_trace=None) -> SuiteReport:
    """End-to-end oscillator study.

    Modes: ``feedforward`` (fully known disturbance), ``feedback``
    (disturbance amplitudes unknown; 5-dimensional controller), and
    ``approx_robust`` (triangle reference, reduced robust controller).
    The steady-state operator is always obtained from probing runs of the
    simulated plant.
    """
    plant = oscillator_plant()
    ev = EvolutionFamily(plant, step=step)
    rho = ev.spectral_radius()
    record = record_trace if record_trace is not None else out_dir is not None

    if mode == "feedforward":
        K = 10
        bench = oscillator_benchmark(K)
        exo = ExosystemData(y_ref=bench.y_ref,
                            wdist_components=bench.disturbance_components,
                            v_cf=[0.4, 0.3, 0.2, 0.6])
        w = exo.w_dist()
        cfg = IdentificationConfig.for_plant(plant, K,
                                             settle_periods=settle_periods)
        P = measure_P(ev, cfg)
        Pd_w = measure_Pd_w(ev, w, cfg)
        law = synthesize_feedforward(P, Pd_w, bench.y_ref)
        n_periods = n_periods or 15
        trace = simulate_closed_loop(
            ev, law, bench.y_ref, w_dist=w, n_periods=n_periods,
            record_trace=record,
            rate_fit_kwargs={"skip": 0, "min_points": 3})
        report = SuiteReport(
            benchmark="oscillators", mode=mode, plant_spectral_radius=rho,
            per_period_errors=trace.per_period_errors,
            fitted_rate=trace.fitted_rate, controller_kind="feedforward",
            feedforward_residual=law.residual, trace=trace, operator=P,
            settled_error=trace.settled_error())
        report.extras["u_reg_norm"] = law.u_reg.norm()

    elif mode == "feedback":
        K = 10
        bench = oscillator_benchmark(K)
        cfg = IdentificationConfig.for_plant(plant, K,
                                             settle_periods=settle_periods)
        P = measure_P(ev, cfg)
        yds = [measure_Pd_w(ev, wk, cfg)
               for wk in bench.disturbance_components]

        def family(eps):
            return synthesize_orp_feedback(P, yds, bench.y_ref, eps)

        epsilon, tune_table = _resolve_epsilon(epsilon, 0.25, ev, family)
        ctrl = family(epsilon)
        clm = build_closed_loop_matrix(ev, ctrl, method="column_simulation")
        exo = ExosystemData(y_ref=bench.y_ref,
                            wdist_components=bench.disturbance_components,
                            v_cf=[0.1, 0.0, 0.1, -0.1])
        n_periods = n_periods or 21
        trace = simulate_closed_loop(ev, ctrl, bench.y_ref,
                                     w_dist=exo.w_dist(),
                                     n_periods=n_periods, record_trace=record)
        report = SuiteReport(
            benchmark="oscillators", mode=mode, plant_spectral_radius=rho,
            per_period_errors=trace.per_period_errors,
            fitted_rate=trace.fitted_rate, controller_kind=ctrl.kind,
            epsilon=epsilon, closed_loop_radius=clm.spectral_radius,
            tune_table=tune_table, trace=trace, controller=ctrl, operator=P,
            settled_error=trace.settled_error())
        report.extras["controller_dim"] = ctrl.dim

    elif mode == "approx_robust":
        K = 14
        cfg = IdentificationConfig.for_plant(plant, K,
                                             settle_periods=settle_periods)
        P = measure_P(ev, cfg)
        y_basis = P.out_basis
        y_ref = make_triangle_reference(y_basis)
        w_basis = SignalBasis(TAU, K, 2)
        w = PeriodicSignal.from_terms(
            w_basis, [{"sin": [[0.3, 1]]}, {"const": 0.2}])
        Pd_w = measure_Pd_w(ev, w, cfg)
        idx = harmonic_band_indices(y_basis, 7)

        def family(eps):
            return synthesize_approx_robust(P, idx, eps)

        epsilon, tune_table = _resolve_epsilon(epsilon, 0.2, ev, family)
        ctrl = family(epsilon)
        clm = build_closed_loop_matrix(ev, ctrl, method="column_simulation")
        est = asymptotic_error_estimate(ctrl, P, Pd_w, y_ref)
        n_periods = n_periods or 31
        trace = simulate_closed_loop(
            ev, ctrl, y_ref, w_dist=w, n_periods=n_periods,
            y_ref_exact=triangle_wave(TAU),
            y_ref_breakpoints=(0.0, TAU / 2.0), record_trace=record)
        report = SuiteReport(
            benchmark="oscillators", mode=mode, plant_spectral_radius=rho,
            per_period_errors=trace.per_period_errors,
            fitted_rate=trace.fitted_rate, controller_kind=ctrl.kind,
            epsilon=epsilon, closed_loop_radius=clm.spectral_radius,
            estimate=est.value, settled_error=trace.settled_error(),
            tune_table=tune_table, trace=trace, controller=ctrl, operator=P)
        report.extras["controller_dim"] = ctrl.dim

    else:
        raise ValueError(f"unknown oscillator mode {mode!r}")

    if out_dir is not None:
        _write_artifacts(report, out_dir)
    return report


def run_heat_suite(mode, settle_periods=12, epsilon=None, n_periods=None,
                   n_grid=12, step=None, out_dir=None,
                   record_trace=None) -> SuiteReport:
    """End-to-end heat-equation study.

    Modes: ``feedforward`` (boundary disturbance known) and
    ``approx_robust`` (triangle reference).  The default integrator step
    tau/2048 respects the explicit-scheme stability bound of the default
    12x12 grid; pass a smaller ``step`` for finer grids.
    """
    plant = heat_plant(n_grid)
    if step is None:
        # explicit RK4 needs |lambda_max| h < 2.78; scale with the grid
        divisor = 2048 * max(1, int(np.ceil((n_grid / 12.0) ** 2)))
        step = TAU / divisor
    ev = EvolutionFamily(plant, step=step)
    rho = ev.spectral_radius()
    record = record_trace if record_trace is not None else out_dir is not None

    if mode == "feedforward":
        K = 10
        bench = heat_benchmark(K, n_grid)
        cfg = IdentificationConfig.for_plant(plant, K,
                                             settle_periods=settle_periods)
        P = measure_P(ev, cfg)
        Pd_w = measure_Pd_w(ev, bench.w_dist, cfg)
        law = synthesize_feedforward(P, Pd_w, bench.y_ref)
        n_periods = n_periods or 12
        x0 = -np.ones(plant.n_x)
        trace = simulate_closed_loop(
            ev, law, bench.y_ref, w_dist=bench.w_dist, x0=x0,
            n_periods=n_periods, record_trace=record,
            rate_fit_kwargs={"skip": 0, "min_points": 3})
        report = SuiteReport(
            benchmark="heat2d", mode=mode, plant_spectral_radius=rho,
            per_period_errors=trace.per_period_errors,
            fitted_rate=trace.fitted_rate, controller_kind="feedforward",
            feedforward_residual=law.residual, trace=trace, operator=P,
            settled_error=trace.settled_error())

    elif mode == "approx_robust":
        K = 14
        cfg = IdentificationConfig.for_plant(plant, K,
                                             settle_periods=settle_periods)
        P = measure_P(ev, cfg)
        y_basis = P.out_basis
        y_ref = make_triangle_reference(y_basis)
        w = PeriodicSignal.from_terms(SignalBasis(TAU, K, 1),
                                      [{"sin": [[0.3, 1]]}])
        Pd_w = measure_Pd_w(ev, w, cfg)
        idx = harmonic_band_indices(y_basis, 7)

        def family(eps):
            return synthesize_approx_robust(P, idx, eps)

        epsilon, tune_table = _resolve_epsilon(epsilon, 0.35, ev, family,
                                               method="column_simulation")
        ctrl = family(epsilon)
        clm = build_closed_loop_matrix(ev, ctrl, method="column_simulation")
        est = asymptotic_error_estimate(ctrl, P, Pd_w, y_ref)
        n_periods = n_periods or 21
        trace = simulate_closed_loop(
            ev, ctrl, y_ref, w_dist=w, n_periods=n_periods,
            y_ref_exact=triangle_wave(TAU),
            y_ref_breakpoints=(0.0, TAU / 2.0), record_trace=record)
        report = SuiteReport(
            benchmark="heat2d", mode=mode, plant_spectral_radius=rho,
            per_period_errors=trace.per_period_errors,
            fitted_rate=trace.fitted_rate, controller_kind=ctrl.kind,
            epsilon=epsilon, closed_loop_radius=clm.spectral_radius,
            estimate=est.value, settled_error=trace.settled_error(),
            tune_table=tune_table, trace=trace, controller=ctrl, operator=P)

    else:
        raise ValueError(f"unknown heat mode {mode!r}")

    if out_dir is not None:
        _write_artifacts(report, out_dir)
    return report
