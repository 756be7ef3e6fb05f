"""Measurement-based approximation of the steady-state operators.

A stable periodic plant driven by a periodic input converges, period by
period, to the steady-state output segment.  Probing the running plant
with each basis function and projecting the output on a late "settle"
window therefore recovers the steady-state operator column by column,
without access to the coefficient matrices.  The same run with a fixed
disturbance recovers the steady disturbance response directly.

Probing uses real cos/sin pairs (the simulator never integrates complex
states); complex columns are combined afterwards by linearity.  All probe
columns are integrated in a single deterministic batch, so results are
bit-reproducible.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrationBlowupError
from .lifting import (LiftedSteadyStateOperator, combine_probe_columns,
                      probe_functions)
from .plant import EvolutionFamily, as_evolution_family
from .signals import PeriodicSignal, SignalBasis, project_samples


@dataclass
class IdentificationConfig:
    """Settings for probing runs.

    Attributes
    ----------
    settle_periods : int
        Number n of periods to discard; the measurement window is
        [n*tau, (n+1)*tau).
    basis : SignalBasis
        Input-side basis (channel count = n_u); the output side reuses the
        same tau and truncation with the plant's output channel count.
    initial_state : ndarray or None
        Plant state at t = 0 for the probing runs; zero by default, which
        makes the transient depend on the input term only.
    """

    settle_periods: int = 10
    basis: SignalBasis = None
    initial_state: np.ndarray = None

    def __post_init__(self):
        if self.settle_periods < 1:
            raise ValueError("settle_periods must be >= 1")

    @classmethod
    def for_plant(cls, plant, K, settle_periods=10, initial_state=None):
        basis = SignalBasis(plant.tau, K, plant.n_u)
        return cls(settle_periods=settle_periods, basis=basis,
                   initial_state=initial_state)


def _warn_if_unstable(ev):
    verdict = ev.is_exponentially_stable()
    if not verdict.stable:
        warnings.warn(
            "plant is not exponentially stable (monodromy radius "
            f"{verdict.spectral_radius:.4g}); measured operators will not "
            "converge", stacklevel=3)


def measure_P(plant, cfg: IdentificationConfig, step=None,
              return_windows=False):
    """Approximate the steady-state control operator from simulated runs.

    For each input basis function, the plant is driven by its periodic
    extension (zero disturbance) and the output on the settle window is
    projected onto the output basis; the projections form the columns of
    the measured operator.

    Parameters
    ----------
    plant : PeriodicPlant or EvolutionFamily
    cfg : IdentificationConfig
    step : float, optional
        Integrator step when ``plant`` is not already an EvolutionFamily.
    return_windows : bool
        Also return the list of operator matrices measured on every window
        n = 0 .. settle_periods (used for convergence studies; entry n is
        the matrix measured on [n*tau, (n+1)*tau)).

    Returns
    -------
    LiftedSteadyStateOperator (tagged ``source="measured"``), optionally
    followed by the per-window matrix list.
    """
    ev = as_evolution_family(plant, step)
    plant = ev.plant
    if cfg.basis is None or cfg.basis.m != plant.n_u:
        raise ValueError("cfg.basis must be an input basis with m == n_u")
    _warn_if_unstable(ev)
    u_basis = cfg.basis
    y_basis = SignalBasis(plant.tau, u_basis.K, plant.n_y)
    labels, probe = probe_functions(u_basis)

    X = np.zeros((plant.n_x, u_basis.dim))
    if cfg.initial_state is not None:
        X = X + np.asarray(cfg.initial_state, dtype=float).reshape(plant.n_x, 1)

    tau = plant.tau
    n = cfg.settle_periods
    windows = []
    try:
        for j in range(n + 1):
            record = return_windows or j == n
            if record:
                X, traj = ev.propagate(j * tau, (j + 1) * tau, X, u=probe,
                                       record=True)
                Y = ev.outputs_along(traj, u=probe)
                coeffs = project_samples(traj.times, traj.quadrature_weights(),
                                         Y, y_basis)
                real_cols = coeffs.reshape(y_basis.dim, u_basis.dim)
                windows.append(combine_probe_columns(real_cols, u_basis))
            else:
                X = ev.propagate(j * tau, (j + 1) * tau, X, u=probe)
    except IntegrationBlowupError as exc:
        bad = ", ".join(str(labels[c]) for c in exc.columns)
        raise IntegrationBlowupError(
            f"probing run diverged (unstable plant?); offending probe "
            f"columns: {bad}", time=exc.time, columns=exc.columns) from exc

    matrix = windows[-1]
    op = LiftedSteadyStateOperator(in_basis=u_basis, out_basis=y_basis,
                                   matrix=matrix, source="measured")
    if return_windows:
        return op, windows
    return op


def measure_Pd_w(plant, w_signal, cfg: IdentificationConfig, step=None):
    """Approximate the steady disturbance response for one fixed periodic
    disturbance.

    The plant runs with zero control input and the periodic extension of
    ``w_signal``; the settle-window output is projected onto the output
    basis.

    Parameters
    ----------
    plant : PeriodicPlant or EvolutionFamily
    w_signal : PeriodicSignal or callable
        Disturbance segment (channel count n_w), or a plain evaluator.
    cfg : IdentificationConfig

    Returns
    -------
    PeriodicSignal on the output basis.
    """
    ev = as_evolution_family(plant, step)
    plant = ev.plant
    _warn_if_unstable(ev)
    K = cfg.basis.K if cfg.basis is not None else 10
    y_basis = SignalBasis(plant.tau, K, plant.n_y)
    w_eval = w_signal.as_evaluator() if isinstance(w_signal, PeriodicSignal) \
        else w_signal

    x = np.zeros(plant.n_x)
    if cfg.initial_state is not None:
        x = np.asarray(cfg.initial_state, dtype=float).reshape(plant.n_x)
    tau = plant.tau
    n = cfg.settle_periods
    x = ev.propagate(0.0, n * tau, x, w=w_eval)
    x, traj = ev.propagate(n * tau, (n + 1) * tau, x, w=w_eval, record=True)
    Y = ev.outputs_along(traj)
    coeffs = project_samples(traj.times, traj.quadrature_weights(), Y, y_basis)
    return PeriodicSignal(y_basis, coeffs)


def assemble_measured_operator(columns, in_basis, out_basis):
    """Build a measured operator from externally obtained output signals.

    ``columns`` is a sequence of :class:`PeriodicSignal`, one steady output
    per complex input basis function, ordered channel-major by harmonic
    -K..K (the flat coefficient order).  Enables hardware-in-the-loop
    identification from recorded traces (see
    :func:`perreg.signals.signal_from_trace`).
    """
    if len(columns) != in_basis.dim:
        raise ValueError(
            f"need {in_basis.dim} columns, got {len(columns)}")
    matrix = np.column_stack([col.flatten() for col in columns])
    return LiftedSteadyStateOperator(in_basis=in_basis, out_basis=out_basis,
                                     matrix=matrix, source="measured")
