"""Controller synthesis for periodic output tracking and disturbance
rejection.

Four designs are provided, all built from the steady-state operator P of
the stable plant and, where needed, the steady disturbance responses:

* a feedforward law solving P u = y_ref - Pd w for a fully known
  disturbance;
* a discrete-time error-feedback controller of dimension r spanned by the
  steady-state solutions for the individual reference/disturbance
  components (handles unknown disturbance amplitudes);
* a robust controller whose state copies the whole truncated output
  space (an internal model of the period-1 dynamics), tolerating plant
  perturbations that keep the loop stable;
* a reduced robust controller acting on a retained output subspace,
  trading exact tracking for finite dimension, with a computable
  asymptotic error level.

All feedback controllers share the update

    z_{n+1} = G1 z_n + G2 (y_n - y_ref),   u on the next period = K z_n,

with G1 = I and K = epsilon * K0 (* Q).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (EstimateUnavailableError, NothingToTrackError,
                     SurjectivityError, UnsolvableRegulationError,
                     YNRangeError)
from .lifting import LiftedSteadyStateOperator
from .plant import as_evolution_family
from .signals import PeriodicSignal, SignalBasis, project

PINV_RTOL = 1e-10
RANK_TOL = 1e-8


@dataclass
class FeedforwardLaw:
    """Static periodic control law u(t) = u_reg(t mod tau).

    ``residual`` is the norm of P u_reg - (y_ref - Pd w) after solving;
    consumers must check it against their own tolerance.
    """

    u_reg: PeriodicSignal
    residual: float


@dataclass
class FeedbackController:
    """Discrete-time error-feedback controller (G1, G2, K).

    ``kind`` is one of ``"orp_feedback"``, ``"robust"`` or
    ``"approx_robust"``.  The applied gain is K = epsilon * K0 * Q for the
    orp design and K = epsilon * K0 otherwise.  ``yn_indices`` lists the
    retained flat output-coefficient indices for the reduced robust design
    (the projection onto their span realizes Q_N).
    """

    kind: str
    G1: np.ndarray
    G2: np.ndarray
    K0: np.ndarray
    epsilon: float
    u_basis: SignalBasis
    y_basis: SignalBasis
    Q: np.ndarray = None
    yn_indices: np.ndarray = None
    selected_indices: tuple = ()
    g2_sigma_min: float = None
    loop_spectral_abscissa: float = None

    @property
    def dim(self):
        return self.G1.shape[0]

    @property
    def K(self):
        base = self.K0 if self.Q is None else self.K0 @ self.Q
        return self.epsilon * base

    def with_epsilon(self, epsilon):
        """Copy of the controller with a different gain."""
        return FeedbackController(
            kind=self.kind, G1=self.G1, G2=self.G2, K0=self.K0,
            epsilon=epsilon, u_basis=self.u_basis, y_basis=self.y_basis,
            Q=self.Q, yn_indices=self.yn_indices,
            selected_indices=self.selected_indices,
            g2_sigma_min=self.g2_sigma_min,
            loop_spectral_abscissa=self.loop_spectral_abscissa)

    def input_signal(self, z):
        """The input segment K z as a PeriodicSignal."""
        return PeriodicSignal.from_flat(self.u_basis, self.K @ np.asarray(z))


@dataclass
class ExosystemData:
    """Constant-signal generator bookkeeping: the reference and a
    dictionary of disturbance components combined with weights v.

    Models the marginally stable one-dimensional generator (state constant
    over periods); F maps its state to -y_ref and E's columns are the
    disturbance components.
    """

    y_ref: PeriodicSignal
    wdist_components: list
    v_cf: np.ndarray = None

    def __post_init__(self):
        if self.v_cf is None:
            self.v_cf = np.ones(len(self.wdist_components))
        self.v_cf = np.asarray(self.v_cf, dtype=float)
        if len(self.v_cf) != len(self.wdist_components):
            raise ValueError("one weight per disturbance component required")

    @property
    def q(self):
        return len(self.wdist_components)

    def w_dist(self):
        """The combined disturbance segment sum_k v_k w_k."""
        if not self.wdist_components:
            return None
        total = self.v_cf[0] * self.wdist_components[0]
        for vk, wk in zip(self.v_cf[1:], self.wdist_components[1:]):
            total = total + vk * wk
        return total


@dataclass
class RegulatorSolution:
    """Periodic solution (Pi, Gamma) of the regulator equations on a grid,
    with the tracking-constraint residual."""

    Gamma: PeriodicSignal
    grid: np.ndarray
    Pi_samples: np.ndarray
    pi_periodicity_residual: float
    constraint_residual: float


@dataclass
class InternalModelReport:
    """Structural internal-model check at the period-1 frequency."""

    passed: bool
    g1_is_identity: bool
    g2_sigma_min: float
    kernel_trivial: bool
    dim_count_ok: bool
    dim_Z: int
    dim_Y: int


@dataclass
class AsymptoticEstimate:
    """Asymptotic per-period regulation error level of the reduced robust
    design, with the residual signal and the steady controller state."""

    value: float
    residual_signal: PeriodicSignal
    z: np.ndarray


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def synthesize_feedforward(P: LiftedSteadyStateOperator,
                           Pd_w: PeriodicSignal,
                           y_ref: PeriodicSignal,
                           rtol=PINV_RTOL) -> FeedforwardLaw:
    """Solve P u_reg = y_ref - Pd_w by pseudoinverse.

    Singular values below ``rtol`` times the largest are truncated.  The
    returned residual conveys solvability: nonsmooth references may lie
    outside the operator's range and then cannot be tracked exactly.
    """
    rhs = (y_ref - Pd_w) if Pd_w is not None else y_ref
    if rhs.basis != P.out_basis:
        raise ValueError("y_ref/Pd_w must live on the operator output basis")
    u_flat = np.linalg.pinv(P.matrix, rcond=rtol) @ rhs.flatten()
    residual = float(np.linalg.norm(P.matrix @ u_flat - rhs.flatten()))
    u_reg = PeriodicSignal.from_flat(P.in_basis, u_flat)
    return FeedforwardLaw(u_reg=u_reg, residual=residual)


def _greedy_independent(images, tol=RANK_TOL):
    """Indices of a greedy maximal linearly independent subset of the given
    vectors, preferring lower indices first (rank decided by relative SVD
    cutoff)."""
    selected = []
    for i, v in enumerate(images):
        cand = np.column_stack([images[j] for j in selected] + [v])
        sv = np.linalg.svd(cand, compute_uv=False)
        if sv[-1] > tol * sv[0]:
            selected.append(i)
    return selected


def synthesize_orp_feedback(P: LiftedSteadyStateOperator,
                            Pd_wks, y_ref: PeriodicSignal, epsilon,
                            rtol=PINV_RTOL, rank_tol=RANK_TOL,
                            residual_tol=1e-6) -> FeedbackController:
    """Finite-dimensional error-feedback design for disturbances with known
    components but unknown amplitudes.

    Solves P u0 = y_ref and P uk = Pd w_k for every component, selects a
    maximal independent subset of the steady responses, and builds

        K0 = [u_{k_1}, ..., u_{k_r}],  Q = V Lambda^{-1/2},
        G2 = -(P K0 Q)^*,              G1 = I,

    where V Lambda V^* diagonalizes (P K0)^* (P K0).  With this Q the loop
    matrix G2 P K equals -epsilon I.

    Parameters
    ----------
    Pd_wks : sequence of PeriodicSignal
        Steady disturbance responses Pd w_k, k = 1..q.
    """
    rhss = [y_ref] + list(Pd_wks)
    norms = [r.norm() for r in rhss]
    if max(norms, default=0.0) <= 1e-14:
        raise NothingToTrackError(
            "reference and all disturbance components vanish")

    pinv = np.linalg.pinv(P.matrix, rcond=rtol)
    candidates = []        # (index k, u_flat, image = P u)
    for k, rhs in enumerate(rhss):
        if norms[k] <= 1e-14:
            continue
        b = rhs.flatten()
        u = pinv @ b
        img = P.matrix @ u
        res = float(np.linalg.norm(img - b))
        if res > residual_tol * max(1.0, norms[k]):
            raise UnsolvableRegulationError(
                f"steady-state equation for component {k} solvable only to "
                f"residual {res:.3e}", index=k, residual=res)
        candidates.append((k, u, img))

    keep = _greedy_independent([img for _, _, img in candidates], rank_tol)
    if not keep:
        raise NothingToTrackError("no independent steady responses found")
    selected = [candidates[i] for i in keep]

    K0 = np.column_stack([u for _, u, _ in selected])
    PK0 = P.matrix @ K0
    M = PK0.conj().T @ PK0
    M = 0.5 * (M + M.conj().T)
    V, s, _ = np.linalg.svd(M)
    Q = V @ np.diag(1.0 / np.sqrt(s))
    G2 = -(PK0 @ Q).conj().T
    r = K0.shape[1]
    return FeedbackController(
        kind="orp_feedback", G1=np.eye(r), G2=G2, K0=K0, Q=Q,
        epsilon=float(epsilon), u_basis=P.in_basis, y_basis=P.out_basis,
        selected_indices=tuple(k for k, _, _ in selected),
        g2_sigma_min=float(np.linalg.svd(G2, compute_uv=False)[-1]),
        loop_spectral_abscissa=-float(epsilon))


def synthesize_robust(P: LiftedSteadyStateOperator, G2=None, epsilon=1.0,
                      rtol=PINV_RTOL, rank_warn=1e-6) -> FeedbackController:
    """Robust design: the controller state copies the whole truncated
    output space.

    G1 = I on the output-coefficient space, G2 is the identity unless
    supplied (it must be boundedly invertible), and K0 = -pinv(G2 P), which
    places the loop spectrum sigma(G2 P K0) at -1.  Requires P to be
    surjective at truncation level (full row rank).
    """
    n_y = P.out_basis.dim
    if G2 is None:
        G2 = np.eye(n_y)
    G2 = np.asarray(G2, dtype=complex)
    sv = np.linalg.svd(P.matrix, compute_uv=False)
    sigma_min = float(sv[-1])
    if P.matrix.shape[1] < n_y or sv[-1] <= rtol * sv[0]:
        raise SurjectivityError(
            "steady-state operator is rank deficient at truncation level "
            f"(sigma_min {sigma_min:.3e}); surjectivity hypothesis fails")
    if sigma_min < rank_warn:
        warnings.warn(
            f"smallest singular value of the steady-state operator is "
            f"{sigma_min:.3e}; near rank deficiency", stacklevel=2)
    K0 = -np.linalg.pinv(G2 @ P.matrix, rcond=rtol)
    loop = G2 @ P.matrix @ K0
    abscissa = float(np.max(np.real(np.linalg.eigvals(loop))))
    if abscissa >= 0.0:
        raise SurjectivityError(
            f"loop matrix G2 P K0 has spectral abscissa {abscissa:.3e} >= 0")
    return FeedbackController(
        kind="robust", G1=np.eye(n_y), G2=G2, K0=K0, epsilon=float(epsilon),
        u_basis=P.in_basis, y_basis=P.out_basis,
        g2_sigma_min=float(np.linalg.svd(G2, compute_uv=False)[-1]),
        loop_spectral_abscissa=abscissa)


def harmonic_band_indices(basis: SignalBasis, kmax):
    """Flat coefficient indices of harmonics |k| <= kmax over all channels."""
    if kmax > basis.K:
        raise ValueError("kmax exceeds the basis truncation order")
    per = basis.n_funcs
    idx = []
    for c in range(basis.m):
        idx.extend(c * per + basis.K + k for k in range(-kmax, kmax + 1))
    return np.asarray(idx, dtype=int)


def synthesize_approx_robust(P: LiftedSteadyStateOperator, yn_indices,
                             epsilon, rank_tol=RANK_TOL) -> FeedbackController:
    """Reduced robust design on a retained output subspace.

    ``yn_indices`` selects the flat output coefficients spanning the
    retained subspace Y_N (see :func:`harmonic_band_indices`).  With the
    singular value decomposition V1 S V2^* of the retained operator rows
    P_N, the choices G20 = S^{-1} V1^* and K0 = -(first r columns of V2)
    give the loop matrix G20 P_N K0 = -I.  G2 = G20 composed with the
    projection onto Y_N.
    """
    yn_indices = np.asarray(yn_indices, dtype=int)
    r = len(yn_indices)
    P_N = P.matrix[yn_indices, :]
    V1, s, V2h = np.linalg.svd(P_N, full_matrices=True)
    if len(s) < r or s[-1] <= rank_tol * s[0]:
        raise YNRangeError(
            "retained output subspace is not contained in the range of the "
            f"steady-state operator at truncation level (sigma_min "
            f"{s[-1]:.3e})")
    G20 = np.diag(1.0 / s) @ V1.conj().T
    K0 = -V2h.conj().T[:, :r]
    G2 = np.zeros((r, P.out_basis.dim), dtype=complex)
    G2[:, yn_indices] = G20
    loop = G2 @ P.matrix @ K0
    abscissa = float(np.max(np.real(np.linalg.eigvals(loop))))
    return FeedbackController(
        kind="approx_robust", G1=np.eye(r), G2=G2, K0=K0,
        epsilon=float(epsilon), u_basis=P.in_basis, y_basis=P.out_basis,
        yn_indices=yn_indices,
        g2_sigma_min=float(np.linalg.svd(G2, compute_uv=False)[-1]),
        loop_spectral_abscissa=abscissa)


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

def asymptotic_error_estimate(ctrl: FeedbackController,
                              P: LiftedSteadyStateOperator,
                              Pd_w: PeriodicSignal,
                              y_ref: PeriodicSignal) -> AsymptoticEstimate:
    """Asymptotic per-period regulation error of the reduced robust design.

    Solves the r-dimensional steady loop equation on the retained subspace
    and returns the norm of the off-subspace residual

        (I - Q_N) [P K z + Pd w - y_ref]

    together with the residual signal itself.
    """
    if ctrl.kind != "approx_robust":
        raise ValueError("estimate applies to approx_robust controllers")
    idx = ctrl.yn_indices
    K = ctrl.K
    PK = P.matrix @ K
    rhs_full = (y_ref - Pd_w).flatten() if Pd_w is not None else y_ref.flatten()
    A_r = PK[idx, :]
    try:
        z = np.linalg.solve(A_r, rhs_full[idx])
    except np.linalg.LinAlgError as exc:
        raise EstimateUnavailableError(
            "reduced steady loop system is singular") from exc
    if not np.all(np.isfinite(z)):
        raise EstimateUnavailableError("reduced steady loop solve overflowed")
    resid = PK @ z - rhs_full
    resid[idx] = 0.0
    signal = PeriodicSignal.from_flat(P.out_basis, resid)
    return AsymptoticEstimate(value=float(np.linalg.norm(resid)),
                              residual_signal=signal, z=z)


def verify_regulator_equations(plant, law, w_dist, y_ref,
                               grid_size=129, step=None) -> RegulatorSolution:
    """Check the periodic regulator equations for a feedforward law.

    Builds the periodic state map Pi(t) driven by f = B Gamma + B_d w (with
    Gamma the periodic input), samples it on a uniform grid, and reports
    the periodicity defect |Pi(tau) - Pi(0)| and the tracking-constraint
    residual max_t |C(t) Pi(t) + D(t) Gamma(t) - y_ref(t)|.
    """
    ev = as_evolution_family(plant, step)
    plant = ev.plant
    tau = plant.tau
    Gamma = law.u_reg if isinstance(law, FeedforwardLaw) else law
    u_eval = Gamma.as_evaluator()
    w_eval = None
    if w_dist is not None:
        w_eval = w_dist.as_evaluator() if isinstance(w_dist, PeriodicSignal) \
            else w_dist
    y_eval = y_ref.as_evaluator() if isinstance(y_ref, PeriodicSignal) else y_ref

    b_f = ev.propagate(0.0, tau, np.zeros(plant.n_x), u=u_eval, w=w_eval)
    M = ev.monodromy()
    Pi0 = np.linalg.solve(np.eye(plant.n_x) - M, b_f)

    grid = np.linspace(0.0, tau, grid_size)
    Pi = np.empty((grid_size, plant.n_x))
    Pi[0] = Pi0
    x = Pi0
    for i in range(grid_size - 1):
        x = ev.propagate(grid[i], grid[i + 1], x, u=u_eval, w=w_eval)
        Pi[i + 1] = np.real(x)

    constraint = 0.0
    for i, t in enumerate(grid):
        val = plant.C(t) @ Pi[i] + plant.D(t) @ np.atleast_1d(u_eval(t)) \
            - np.atleast_1d(y_eval(t))
        constraint = max(constraint, float(np.linalg.norm(np.real(val))))

    return RegulatorSolution(
        Gamma=Gamma, grid=grid, Pi_samples=Pi,
        pi_periodicity_residual=float(np.linalg.norm(Pi[-1] - Pi[0])),
        constraint_residual=constraint)


def check_internal_model(ctrl: FeedbackController,
                         tol=1e-9) -> InternalModelReport:
    """Structural check of the internal-model conditions at the period-1
    frequency: G1 must be the identity and G2 must have trivial kernel on
    the full truncated output space.

    The robust design passes; the finite-dimensional orp and reduced
    robust designs fail (their state dimension is below the output-space
    dimension, or G2 kills the retained subspace's complement), correctly
    signalling that they are not robust in the exact sense.
    """
    r = ctrl.dim
    n_y = ctrl.y_basis.dim
    g1_ok = bool(np.array_equal(ctrl.G1, np.eye(r)))
    sv = np.linalg.svd(ctrl.G2, compute_uv=False)
    sigma_min = float(sv[-1])
    # ker(G2) = {0} on the full output space needs rank n_y, hence at least
    # n_y rows and no vanishing singular value.
    kernel_trivial = ctrl.G2.shape[0] >= n_y and sigma_min > tol
    dim_ok = r >= n_y
    return InternalModelReport(
        passed=g1_ok and kernel_trivial and dim_ok,
        g1_is_identity=g1_ok, g2_sigma_min=sigma_min,
        kernel_trivial=kernel_trivial, dim_count_ok=dim_ok,
        dim_Z=r, dim_Y=n_y)


# ---------------------------------------------------------------------------
# reference signals
# ---------------------------------------------------------------------------

def triangle_wave(tau):
    """Evaluator of the zero-mean unit triangle wave: peak +1 at tau/2,
    -1 at period boundaries, linear in between."""
    def tri(t):
        s = np.mod(t, tau)
        return 1.0 - 4.0 * np.abs(s - 0.5 * tau) / tau
    return tri


def make_triangle_reference(basis: SignalBasis, n_points=4096):
    """Projection of the zero-mean unit triangle wave onto the basis (all
    channels carry the same wave)."""
    tri = triangle_wave(basis.tau)
    f = lambda t: np.tile(np.atleast_1d(tri(t)), (basis.m, 1)) \
        if np.ndim(t) else np.full(basis.m, tri(t))
    return project(f, basis, breakpoints=(0.0, basis.tau / 2.0),
                   n_points=n_points)
