"""Lifting of a periodic plant to an autonomous discrete-time system.

Sampling the state at period multiples and treating whole-period input and
output segments as vectors turns the continuous tau-periodic plant into a
discrete-time system

    x_{n+1} = A_hat x_n + B_hat u_n + Bd_hat w_n
    y_n     = C_hat x_n + D_hat u_n + Dd_hat w_n

whose input/output "vectors" are signal segments, represented here by
truncated Fourier coefficients.  The steady-state response operator of the
stable loop is the lifted transfer function at 1:

    P = C_hat (I - A_hat)^{-1} B_hat + D_hat,

a matrix between the truncated signal spaces.  Its entries are built
column by column from one-period integrations; each column costs one batch
slot of a single propagate call.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import BasisMismatchError, NotStableError
from .plant import EvolutionFamily, Trajectory
from .signals import PeriodicSignal, SignalBasis, project_samples


def probe_functions(basis: SignalBasis):
    """Real probe set spanning the complex basis: per channel, the constant
    function phi_0 followed by cos/sin pairs for harmonics 1..K.

    Returns (labels, evaluator) where labels is a list of (channel, kind,
    harmonic) tuples and evaluator maps a time (scalar or array) to the
    probe matrix of shape (m, n_probes[, n_t]).
    """
    K, m, tau, omega = basis.K, basis.m, basis.tau, basis.omega
    labels = []
    for c in range(m):
        labels.append((c, "const", 0))
        for k in range(1, K + 1):
            labels.append((c, "cos", k))
            labels.append((c, "sin", k))
    n_probes = len(labels)
    ks = np.arange(1, K + 1)
    root = 1.0 / np.sqrt(tau)

    def evaluator(t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        vals = np.empty((2 * K + 1, len(tt)))
        vals[0] = root
        ang = np.outer(ks, omega * tt)
        vals[1::2] = np.cos(ang) * root
        vals[2::2] = np.sin(ang) * root
        per_chan = 2 * K + 1
        out = np.zeros((m, n_probes, len(tt)))
        for c in range(m):
            out[c, c * per_chan:(c + 1) * per_chan] = vals
        return out[:, :, 0] if scalar else out

    return labels, evaluator


def combine_probe_columns(real_cols, basis: SignalBasis):
    """Assemble complex basis columns from real cos/sin probe columns.

    ``real_cols`` has shape (rows, n_probes) ordered as in
    :func:`probe_functions`; the result has shape (rows, basis.dim) with
    columns ordered channel-major by harmonic -K..K.  By linearity the
    column for harmonic +-k is col_cos +- i col_sin (valid whether the
    rows hold state vectors or output coefficients).
    """
    K, m = basis.K, basis.m
    per_chan = 2 * K + 1
    rows = real_cols.shape[0]
    out = np.zeros((rows, basis.dim), dtype=complex)
    for c in range(m):
        base = c * per_chan
        out[:, base + K] = real_cols[:, base]
        for k in range(1, K + 1):
            col_cos = real_cols[:, base + 2 * k - 1]
            col_sin = real_cols[:, base + 2 * k]
            out[:, base + K + k] = col_cos + 1j * col_sin
            out[:, base + K - k] = col_cos - 1j * col_sin
    return out


@dataclass
class LiftedSteadyStateOperator:
    """Matrix of the steady-state response operator between truncated
    signal spaces.

    Attributes
    ----------
    in_basis, out_basis : SignalBasis
    matrix : ndarray
        Complex, shape (out_basis.dim, in_basis.dim); entry (l, k) is the
        coefficient of output basis function l in the steady response to
        input basis function k.
    source : str
        "quadrature" (built from lifted blocks) or "measured".
    resolvent_condition : float or None
        Condition number of (I - A_hat) when built by quadrature.
    """

    in_basis: SignalBasis
    out_basis: SignalBasis
    matrix: np.ndarray
    source: str = "quadrature"
    resolvent_condition: float = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        expected = (self.out_basis.dim, self.in_basis.dim)
        if self.matrix.shape != expected:
            raise ValueError(
                f"matrix shape {self.matrix.shape}, expected {expected}")

    def apply(self, u: PeriodicSignal) -> PeriodicSignal:
        """Steady-state output segment for the input segment ``u``."""
        if u.basis != self.in_basis:
            raise BasisMismatchError(
                f"input basis {u.basis} does not match {self.in_basis}")
        return PeriodicSignal.from_flat(self.out_basis, self.matrix @ u.flatten())

    def smallest_singular_value(self):
        """Smallest singular value; a proxy for surjectivity at truncation
        level (interpretation is left to the caller)."""
        return float(np.linalg.svd(self.matrix, compute_uv=False)[-1])


@dataclass
class LiftedSystem:
    """Block matrices of the lifted discrete-time system."""

    ev: EvolutionFamily
    u_basis: SignalBasis
    y_basis: SignalBasis
    w_basis: SignalBasis = None
    A_hat: np.ndarray = None        # (n_x, n_x) real
    B_hat: np.ndarray = None        # (n_x, N_u) complex
    Bd_hat: np.ndarray = None       # (n_x, N_w) complex
    C_hat: np.ndarray = None        # (N_y, n_x) complex
    D_hat: np.ndarray = None        # (N_y, N_u) complex
    Dd_hat: np.ndarray = None       # (N_y, N_w) complex


def lift(ev: EvolutionFamily, u_basis: SignalBasis, y_basis: SignalBasis,
         w_basis: SignalBasis = None) -> LiftedSystem:
    """Build the lifted system blocks by one-period batched integrations.

    The state block comes from propagating the identity matrix; the input
    and disturbance blocks from propagating zero states under real cos/sin
    probe forcings (combined into complex basis columns afterwards).
    Exponential stability is not required for lifting itself.
    """
    plant = ev.plant
    tau = plant.tau
    if u_basis.m != plant.n_u:
        raise BasisMismatchError("u_basis channel count must equal n_u")
    if y_basis.m != plant.n_y:
        raise BasisMismatchError("y_basis channel count must equal n_y")
    if w_basis is not None and w_basis.m != plant.n_w:
        raise BasisMismatchError("w_basis channel count must equal n_w")

    # State block: A_hat columns and the outputs giving C_hat.
    Xf, traj = ev.propagate(0.0, tau, np.eye(plant.n_x), record=True)
    weights = traj.quadrature_weights()
    A_hat = Xf
    Y_state = ev.outputs_along(traj)            # (n_t, n_y, n_x)
    C_hat = project_samples(traj.times, weights, Y_state, y_basis)
    C_hat = C_hat.reshape(y_basis.dim, plant.n_x)

    def input_blocks(basis, which):
        _, probe = probe_functions(basis)
        n_probes = basis.dim
        x0 = np.zeros((plant.n_x, n_probes))
        if which == "control":
            Xf, traj = ev.propagate(0.0, tau, x0, u=probe, record=True)
            Y = ev.outputs_along(traj, u=probe)
        else:
            Xf, traj = ev.propagate(0.0, tau, x0, w=probe, record=True)
            Y = ev.outputs_along(traj)          # no disturbance feedthrough
        w = traj.quadrature_weights()
        coeffs = project_samples(traj.times, w, Y, y_basis)
        D_real = coeffs.reshape(y_basis.dim, n_probes)
        B_blk = combine_probe_columns(Xf, basis)
        D_blk = combine_probe_columns(D_real, basis)
        return B_blk, D_blk

    B_hat, D_hat = input_blocks(u_basis, "control")
    Bd_hat = Dd_hat = None
    if w_basis is not None:
        Bd_hat, Dd_hat = input_blocks(w_basis, "disturbance")

    return LiftedSystem(ev=ev, u_basis=u_basis, y_basis=y_basis,
                        w_basis=w_basis, A_hat=A_hat, B_hat=B_hat,
                        Bd_hat=Bd_hat, C_hat=C_hat, D_hat=D_hat,
                        Dd_hat=Dd_hat)


def steady_state_operator(sys: LiftedSystem, which="control"):
    """Assemble the steady-state operator C_hat (I - A_hat)^{-1} B_hat +
    D_hat (or the disturbance analog) from the lifted blocks.

    Raises
    ------
    NotStableError
        If (I - A_hat) is singular to working precision; the caller should
        check ``is_exponentially_stable`` on the plant.
    """
    if which == "control":
        B, D, basis = sys.B_hat, sys.D_hat, sys.u_basis
    elif which == "disturbance":
        if sys.Bd_hat is None:
            raise ValueError("lifted system was built without a w_basis")
        B, D, basis = sys.Bd_hat, sys.Dd_hat, sys.w_basis
    else:
        raise ValueError(f"unknown operator side {which!r}")

    I_A = np.eye(sys.ev.plant.n_x) - sys.A_hat
    cond = float(np.linalg.cond(I_A))
    if not np.isfinite(cond) or cond > 1e14:
        raise NotStableError(
            "(I - A_hat) is singular to working precision "
            f"(condition {cond:.3g}); check is_exponentially_stable")
    X = np.linalg.solve(I_A, B)
    matrix = sys.C_hat @ X + D
    return LiftedSteadyStateOperator(
        in_basis=basis, out_basis=sys.y_basis, matrix=matrix,
        source="quadrature", resolvent_condition=cond)
