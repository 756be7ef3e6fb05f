"""Periodic linear plants and their evolution families.

A plant is a linear state-space system

    x'(t) = A(t) x(t) + B(t) u(t) + B_d(t) w(t)
    y(t)  = C(t) x(t) + D(t) u(t)

whose coefficient matrices repeat with period tau.  The two-parameter
solution operator U(t, s) of the homogeneous part (the evolution family)
generalizes the matrix exponential; its one-period value U(tau, 0) is the
monodromy matrix, and the plant is exponentially stable exactly when the
monodromy spectral radius is below one.
"""

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IntegrationBlowupError

DEFAULT_STEP_DIVISOR = 4096

# Relative backward shift used to evaluate coefficients at the *left* limit
# of a piece boundary (coefficient evaluators are right-continuous there).
_END_SHIFT = 1e-9


def _as_matrix_fn(value, shape):
    """Wrap a constant array as a time evaluator; pass callables through."""
    if callable(value):
        return value
    mat = np.asarray(value, dtype=float).reshape(shape)
    return lambda t, _m=mat: _m


@dataclass
class PeriodicPlant:
    """A tau-periodic linear plant.

    Parameters
    ----------
    tau : float
        Period length, > 0.
    n_x, n_u, n_w, n_y : int
        State, control-input, disturbance and output dimensions.
    A_of_t, B_of_t, Bd_of_t, C_of_t, D_of_t : callable or array_like
        Evaluators mapping a time t to matrices of shapes (n_x, n_x),
        (n_x, n_u), (n_x, n_w), (n_y, n_x) and (n_y, n_u).  Constant
        arrays are accepted and wrapped.  ``Bd_of_t`` and ``D_of_t``
        default to zero.
    breakpoints : sequence of float
        Times in [0, tau) at which any coefficient is discontinuous or
        non-smooth.  The integrator never steps across a breakpoint.
    piecewise_constant : bool
        Declare that all coefficients are constant between consecutive
        breakpoints; enables the matrix-exponential monodromy route.
    name : str
        Optional label used in reports.

    Evaluators are queried through :meth:`A`, :meth:`B`, ... which reduce
    the time argument modulo tau, so periodicity holds by construction.
    """

    tau: float
    n_x: int
    n_u: int
    n_w: int
    n_y: int
    A_of_t: object
    B_of_t: object
    Bd_of_t: object = None
    C_of_t: object = None
    D_of_t: object = None
    breakpoints: tuple = ()
    piecewise_constant: bool = False
    name: str = ""

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("period tau must be positive")
        if self.Bd_of_t is None:
            self.Bd_of_t = np.zeros((self.n_x, self.n_w))
        if self.C_of_t is None:
            self.C_of_t = np.eye(self.n_y, self.n_x)
        if self.D_of_t is None:
            self.D_of_t = np.zeros((self.n_y, self.n_u))
        self.A_of_t = _as_matrix_fn(self.A_of_t, (self.n_x, self.n_x))
        self.B_of_t = _as_matrix_fn(self.B_of_t, (self.n_x, self.n_u))
        self.Bd_of_t = _as_matrix_fn(self.Bd_of_t, (self.n_x, self.n_w))
        self.C_of_t = _as_matrix_fn(self.C_of_t, (self.n_y, self.n_x))
        self.D_of_t = _as_matrix_fn(self.D_of_t, (self.n_y, self.n_u))
        bps = sorted(float(b) % self.tau for b in self.breakpoints)
        self.breakpoints = tuple(dict.fromkeys(bps))
        for mat, shape, label in [
            (self.A(0.0), (self.n_x, self.n_x), "A"),
            (self.B(0.0), (self.n_x, self.n_u), "B"),
            (self.Bd(0.0), (self.n_x, self.n_w), "B_d"),
            (self.C(0.0), (self.n_y, self.n_x), "C"),
            (self.D(0.0), (self.n_y, self.n_u), "D"),
        ]:
            if mat.shape != shape:
                raise ValueError(f"{label}(0) has shape {mat.shape}, expected {shape}")

    def _reduce(self, t):
        r = math.fmod(t, self.tau)
        return r + self.tau if r < 0 else r

    def A(self, t):
        return np.asarray(self.A_of_t(self._reduce(t)))

    def B(self, t):
        return np.asarray(self.B_of_t(self._reduce(t)))

    def Bd(self, t):
        return np.asarray(self.Bd_of_t(self._reduce(t)))

    def C(self, t):
        return np.asarray(self.C_of_t(self._reduce(t)))

    def D(self, t):
        return np.asarray(self.D_of_t(self._reduce(t)))

    def validate(self, n_samples=16):
        """Check finiteness and periodicity of all evaluators at sampled
        points (including breakpoints).  Raises ValueError on failure."""
        times = list(np.linspace(0.0, self.tau, n_samples, endpoint=False))
        times += list(self.breakpoints)
        for t in times:
            for fn, label in [(self.A, "A"), (self.B, "B"), (self.Bd, "B_d"),
                              (self.C, "C"), (self.D, "D")]:
                m0 = fn(t)
                if not np.all(np.isfinite(m0)):
                    raise ValueError(f"{label}({t}) is not finite")
                if not np.array_equal(m0, fn(t + self.tau)):
                    raise ValueError(f"{label} is not {self.tau}-periodic at t={t}")
        return True


@dataclass
class PlantDelta:
    """Perturbation of a plant's coefficient evaluators.

    Each ``*_scale`` is a scalar multiplying the nominal evaluator, each
    ``*_add`` an optional callable ``t -> matrix`` added on top.  Applying
    a delta yields a new first-class :class:`PeriodicPlant`.
    """

    A_scale: float = 1.0
    B_scale: float = 1.0
    Bd_scale: float = 1.0
    C_scale: float = 1.0
    D_scale: float = 1.0
    A_add: object = None
    B_add: object = None
    Bd_add: object = None
    C_add: object = None
    D_add: object = None
    extra_breakpoints: tuple = ()

    def apply(self, plant: PeriodicPlant) -> PeriodicPlant:
        def combine(base, scale, add):
            if scale == 1.0 and add is None:
                return base
            if add is None:
                return lambda t: scale * base(t)
            return lambda t: scale * base(t) + np.asarray(add(t))

        piecewise = plant.piecewise_constant and all(
            a is None for a in (self.A_add, self.B_add, self.Bd_add,
                                self.C_add, self.D_add))
        return PeriodicPlant(
            tau=plant.tau, n_x=plant.n_x, n_u=plant.n_u, n_w=plant.n_w,
            n_y=plant.n_y,
            A_of_t=combine(plant.A, self.A_scale, self.A_add),
            B_of_t=combine(plant.B, self.B_scale, self.B_add),
            Bd_of_t=combine(plant.Bd, self.Bd_scale, self.Bd_add),
            C_of_t=combine(plant.C, self.C_scale, self.C_add),
            D_of_t=combine(plant.D, self.D_scale, self.D_add),
            breakpoints=tuple(plant.breakpoints) + tuple(self.extra_breakpoints),
            piecewise_constant=piecewise,
            name=plant.name + "+delta" if plant.name else "perturbed",
        )


@dataclass
class Trajectory:
    """States (and optionally inputs) recorded along an integration mesh."""

    times: np.ndarray          # (n_nodes,)
    states: np.ndarray         # (n_nodes, n_x) or (n_nodes, n_x, n_batch)

    def quadrature_weights(self):
        """Trapezoid weights for the (piecewise-uniform) recording mesh."""
        t = self.times
        if len(t) < 2:
            return np.zeros_like(t)
        w = np.empty_like(t)
        w[0] = 0.5 * (t[1] - t[0])
        w[-1] = 0.5 * (t[-1] - t[-2])
        w[1:-1] = 0.5 * (t[2:] - t[:-2])
        return w


@dataclass
class StabilityVerdict:
    stable: bool
    spectral_radius: float
    margin: float = 0.0

    def __bool__(self):
        return self.stable


class EvolutionFamily:
    """Fixed-step integrator for the two-parameter solution operator of a
    periodic plant.

    Uses the classical 4th-order Runge-Kutta scheme with a mesh that is
    split at every coefficient breakpoint, so no step straddles a jump.
    The fixed step makes monodromy and lifted-operator computations
    deterministic.

    Parameters
    ----------
    plant : PeriodicPlant
    step : float, optional
        Nominal integrator step; defaults to tau / 4096.
    """

    def __init__(self, plant: PeriodicPlant, step: float = None):
        self.plant = plant
        self.step = float(step) if step is not None else plant.tau / DEFAULT_STEP_DIVISOR
        if self.step <= 0:
            raise ValueError("step must be positive")
        self._monodromy_cache = {}
        self._lock = threading.Lock()

    # -- mesh ------------------------------------------------------------

    def _boundaries(self, s, t, extra=()):
        """Piece boundaries in [s, t]: breakpoints (periodically unfolded),
        period multiples, extra points, and the endpoints themselves."""
        tau = self.plant.tau
        pts = {float(s), float(t)}
        for b in set(self.plant.breakpoints) | {0.0}:
            k_lo = math.floor((s - b) / tau)
            k_hi = math.ceil((t - b) / tau)
            for k in range(k_lo, k_hi + 1):
                p = b + k * tau
                if s < p < t:
                    pts.add(p)
        for p in extra:
            if s < p < t:
                pts.add(float(p))
        return sorted(pts)

    def _mesh(self, s, t, extra=()):
        """Node array for [s, t] and a boolean mask marking piece-end nodes."""
        bounds = self._boundaries(s, t, extra)
        nodes = [np.array([s])]
        ends = [np.array([False])]
        for a, b in zip(bounds[:-1], bounds[1:]):
            n = max(1, math.ceil((b - a) / self.step - 1e-12))
            seg = a + (b - a) * np.arange(1, n + 1) / n
            seg[-1] = b
            nodes.append(seg)
            e = np.zeros(n, dtype=bool)
            e[-1] = True
            ends.append(e)
        return np.concatenate(nodes), np.concatenate(ends)

    # -- integration core ------------------------------------------------

    @staticmethod
    def _prefetch(fn, times, rows):
        """Vectorized evaluation of a forcing callable on the stage times.

        Returns an array whose last axis indexes ``times`` (per-stage value
        shapes (rows,) or (rows, b)), or None when the callable does not
        support array arguments.
        """
        try:
            vals = np.asarray(fn(times))
        except Exception:
            return None
        if vals.ndim == 1 and rows == 1 and vals.shape[0] == len(times):
            return vals[None, :]
        if vals.ndim >= 2 and vals.shape[0] == rows \
                and vals.shape[-1] == len(times):
            return vals
        return None

    def propagate(self, s, t, x, u=None, w=None, record=False,
                  extra_breakpoints=()):
        """Integrate the plant state from time s to time t >= s.

        Parameters
        ----------
        s, t : float
        x : array_like
            Initial state, shape (n_x,) or (n_x, n_batch) for batched runs.
        u, w : callable, optional
            Input and disturbance evaluators; each maps a time to an array
            of shape (n_u,) / (n_w,), or (n_u, n_batch) / (n_w, n_batch)
            for per-column forcing.  Complex-valued forcing promotes the
            state to complex.
        record : bool
            Also return the :class:`Trajectory` sampled at every mesh node.
        extra_breakpoints : sequence of float
            Absolute times in (s, t) to include in the mesh, e.g. kinks of
            piecewise-defined inputs.

        Returns
        -------
        x_final : ndarray, or (x_final, Trajectory) when ``record``.

        Raises
        ------
        IntegrationBlowupError
            If the state becomes non-finite.
        """
        if t < s:
            raise ValueError("propagate requires t >= s")
        plant = self.plant
        x = np.asarray(x)
        squeeze = x.ndim == 1
        X = x.reshape(plant.n_x, -1).copy()

        dtype = X.dtype
        if u is not None:
            dtype = np.promote_types(dtype, np.asarray(u(s)).dtype)
        if w is not None:
            dtype = np.promote_types(dtype, np.asarray(w(s)).dtype)
        dtype = np.promote_types(dtype, np.float64)
        X = X.astype(dtype)

        if t == s:
            out = X[:, 0] if squeeze else X
            if record:
                traj = Trajectory(np.array([s]), out[None, ...].copy())
                return out, traj
            return out

        nodes, piece_end = self._mesh(s, t, extra_breakpoints)
        if record:
            states = np.empty((len(nodes),) + X.shape, dtype=dtype)
            states[0] = X

        # Stage times: step start, midpoint, and end; terminal stages at a
        # piece boundary are evaluated just inside the piece so that a
        # coefficient jump there uses left-limit values.
        steps = np.diff(nodes)
        t0s = nodes[:-1]
        tms = t0s + 0.5 * steps
        tes = nodes[1:] - steps * (_END_SHIFT * piece_end[1:])

        def stage_values(fn, rows):
            # None falls back to per-call evaluation inside the step loop
            pre = [self._prefetch(fn, ts, rows) for ts in (t0s, tms, tes)]
            return pre if all(p is not None for p in pre) else None

        U_pre = W_pre = None
        if u is not None:
            U_pre = stage_values(u, plant.n_u)
        if w is not None:
            W_pre = stage_values(w, plant.n_w)

        B = plant.B
        Bd = plant.Bd

        def force(stage, i, r):
            f = None
            if u is not None:
                uu = U_pre[stage][..., i] if U_pre is not None \
                    else np.asarray(u(r))
                f = B(r) @ uu.reshape(plant.n_u, -1)
            if w is not None:
                ww = W_pre[stage][..., i] if W_pre is not None \
                    else np.asarray(w(r))
                fw = Bd(r) @ ww.reshape(plant.n_w, -1)
                f = fw if f is None else f + fw
            return f

        A = plant.A
        forced = u is not None or w is not None
        for i in range(len(nodes) - 1):
            t0, t1, h = t0s[i], nodes[i + 1], steps[i]
            tm, te = tms[i], tes[i]
            A0, Am, Ae = A(t0), A(tm), A(te)
            if not forced:
                k1 = A0 @ X
                k2 = Am @ (X + (0.5 * h) * k1)
                k3 = Am @ (X + (0.5 * h) * k2)
                k4 = Ae @ (X + h * k3)
            else:
                f0 = force(0, i, t0)
                fm = force(1, i, tm)
                fe = force(2, i, te)
                k1 = A0 @ X + f0
                k2 = Am @ (X + (0.5 * h) * k1) + fm
                k3 = Am @ (X + (0.5 * h) * k2) + fm
                k4 = Ae @ (X + h * k3) + fe
            X = X + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if (i % 8 == 7 or i == len(nodes) - 2) \
                    and not np.all(np.isfinite(X)):
                bad = tuple(np.nonzero(~np.isfinite(X).all(axis=0))[0])
                raise IntegrationBlowupError(
                    f"state became non-finite at t={t1:.6g}", time=t1,
                    columns=bad)
            if record:
                states[i + 1] = X

        out = X[:, 0] if squeeze else X
        if record:
            traj_states = states[:, :, 0] if squeeze else states
            return out, Trajectory(nodes, traj_states)
        return out

    def outputs_along(self, traj: Trajectory, u=None):
        """Evaluate y(t) = C(t) x(t) + D(t) u(t) along a recorded trajectory.

        Returns an array of shape (n_nodes, n_y) or (n_nodes, n_y, n_batch).
        """
        plant = self.plant
        states = traj.states
        batched = states.ndim == 3
        shape = (len(traj.times), plant.n_y) + (states.shape[2:] if batched else ())
        dtype = states.dtype
        if u is not None:
            dtype = np.promote_types(dtype, np.asarray(u(traj.times[0])).dtype)
        Y = np.empty(shape, dtype=dtype)
        for i, ti in enumerate(traj.times):
            y = plant.C(ti) @ states[i]
            if u is not None:
                uu = np.asarray(u(ti))
                y = y + plant.D(ti) @ (uu.reshape(plant.n_u, -1) if batched else uu)
            Y[i] = y
        return Y

    # -- monodromy and stability ------------------------------------------

    def monodromy(self, method="auto"):
        """One-period state-transition matrix U(tau, 0).

        ``method`` is one of ``"auto"``, ``"integrate"`` (RK4 on the matrix
        ODE) or ``"expm"`` (product of matrix exponentials over the constant
        pieces; requires ``plant.piecewise_constant``).  Cached per method;
        the cache is race-free.
        """
        if method == "auto":
            method = "expm" if self.plant.piecewise_constant else "integrate"
        with self._lock:
            if method in self._monodromy_cache:
                return self._monodromy_cache[method]
            if method == "integrate":
                M = self.propagate(0.0, self.plant.tau, np.eye(self.plant.n_x))
            elif method == "expm":
                if not self.plant.piecewise_constant:
                    raise ValueError(
                        "expm monodromy requires a piecewise-constant plant")
                bounds = self._boundaries(0.0, self.plant.tau)
                M = np.eye(self.plant.n_x)
                for a, b in zip(bounds[:-1], bounds[1:]):
                    M = scipy.linalg.expm(self.plant.A(a) * (b - a)) @ M
            else:
                raise ValueError(f"unknown monodromy method {method!r}")
            self._monodromy_cache[method] = M
            return M

    def spectral_radius(self, method="auto"):
        return float(np.max(np.abs(np.linalg.eigvals(self.monodromy(method)))))

    def is_exponentially_stable(self, margin=0.0, method="auto"):
        """Exponential-stability verdict from the monodromy spectrum.

        Returns a :class:`StabilityVerdict` with ``stable`` true iff the
        monodromy spectral radius is below ``1 - margin``.
        """
        rho = self.spectral_radius(method)
        return StabilityVerdict(stable=rho < 1.0 - margin,
                                spectral_radius=rho, margin=margin)


def as_evolution_family(obj, step=None):
    """Coerce a PeriodicPlant or EvolutionFamily to an EvolutionFamily."""
    if isinstance(obj, EvolutionFamily):
        return obj
    return EvolutionFamily(obj, step=step)
