"""Periodic vector-valued signals in a truncated Fourier basis.

Signals live in L^2(0, tau; R^m) and are stored as complex coefficients
against the orthonormal basis

    phi_k(t) = exp(i k (2 pi / tau) t) / sqrt(tau),     k = -K .. K,

per channel.  Real-valued signals satisfy the conjugate symmetry
coeff(-k) = conj(coeff(k)), which the module enforces on evaluation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatchError, CorruptedSignalError

DEFAULT_QUAD_POINTS = 4096


@dataclass(frozen=True)
class SignalBasis:
    """Truncated Fourier basis of L^2(0, tau; R^m).

    Parameters
    ----------
    tau : float
        Period.
    K : int
        Truncation order; the basis holds 2K+1 functions per channel.
    m : int
        Channel count (vector dimension of the signal).
    """

    tau: float
    K: int
    m: int = 1

    @property
    def omega(self):
        return 2.0 * np.pi / self.tau

    @property
    def n_funcs(self):
        return 2 * self.K + 1

    @property
    def dim(self):
        return self.m * self.n_funcs

    @property
    def harmonics(self):
        """Integer harmonic numbers -K..K in coefficient order."""
        return np.arange(-self.K, self.K + 1)

    def phi_matrix(self, times):
        """Basis functions evaluated on a time grid: shape (2K+1, n_t)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        phase = np.outer(self.harmonics, self.omega * times)
        return np.exp(1j * phase) / np.sqrt(self.tau)

    def scalar(self):
        """The single-channel basis with the same tau and K."""
        return SignalBasis(self.tau, self.K, 1)

    def with_channels(self, m):
        return SignalBasis(self.tau, self.K, m)


def quadrature_grid(tau, breakpoints=(), n_points=DEFAULT_QUAD_POINTS):
    """Composite-trapezoid nodes and weights on [0, tau].

    The grid is split at every breakpoint so that no panel straddles a
    declared discontinuity; on smooth periodic integrands the rule is
    spectrally accurate.
    """
    bounds = sorted({0.0, float(tau)} | {float(b) % tau for b in breakpoints
                                         if 0.0 < float(b) % tau < tau})
    h = tau / n_points
    nodes = [np.array([0.0])]
    weights = [np.array([0.0])]
    for a, b in zip(bounds[:-1], bounds[1:]):
        n = max(1, int(np.ceil((b - a) / h - 1e-12)))
        seg = np.linspace(a, b, n + 1)
        w = np.full(n + 1, (b - a) / n)
        w[0] *= 0.5
        w[-1] *= 0.5
        # merge shared node with the previous piece
        weights[-1][-1] += w[0]
        nodes.append(seg[1:])
        weights.append(w[1:])
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class PeriodicSignal:
    """Element of L^2(0, tau; R^m) stored as truncated Fourier coefficients.

    Attributes
    ----------
    basis : SignalBasis
    coeffs : ndarray
        Complex array of shape (m, 2K+1); entry (c, k+K) is the inner
        product of channel c with phi_k.
    """

    basis: SignalBasis
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex).reshape(
            self.basis.m, self.basis.n_funcs)

    # -- constructors ----------------------------------------------------

    @classmethod
    def zero(cls, basis):
        return cls(basis, np.zeros((basis.m, basis.n_funcs), dtype=complex))

    @classmethod
    def from_flat(cls, basis, vec):
        return cls(basis, np.asarray(vec, dtype=complex).reshape(
            basis.m, basis.n_funcs))

    @classmethod
    def from_terms(cls, basis, channel_terms):
        """Build a trigonometric signal exactly from per-channel terms.

        ``channel_terms`` is a list (one dict per channel) with optional
        keys ``const`` (float), ``cos`` and ``sin`` (lists of ``[amplitude,
        harmonic]`` pairs, integer harmonics <= K).
        """
        if len(channel_terms) != basis.m:
            raise ValueError("one term dict per channel required")
        sq = np.sqrt(basis.tau)
        coeffs = np.zeros((basis.m, basis.n_funcs), dtype=complex)
        for c, terms in enumerate(channel_terms):
            coeffs[c, basis.K] += terms.get("const", 0.0) * sq
            for a, k in terms.get("cos", []):
                k = int(k)
                coeffs[c, basis.K + k] += 0.5 * a * sq
                coeffs[c, basis.K - k] += 0.5 * a * sq
            for a, k in terms.get("sin", []):
                k = int(k)
                coeffs[c, basis.K + k] += -0.5j * a * sq
                coeffs[c, basis.K - k] += 0.5j * a * sq
        return cls(basis, coeffs)

    # -- algebra -----------------------------------------------------------

    def _check_same_basis(self, other):
        if self.basis != other.basis:
            raise BasisMismatchError(
                f"bases differ: {self.basis} vs {other.basis}")

    def __add__(self, other):
        self._check_same_basis(other)
        return PeriodicSignal(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_same_basis(other)
        return PeriodicSignal(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return PeriodicSignal(self.basis, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicSignal(self.basis, -self.coeffs)

    # -- queries -----------------------------------------------------------

    def flatten(self):
        """Coefficients as one channel-major vector of length m*(2K+1)."""
        return self.coeffs.reshape(-1)

    def norm(self):
        """L^2(0, tau) norm (equals the coefficient 2-norm by Parseval)."""
        return float(np.linalg.norm(self.coeffs))

    def symmetry_defect(self):
        """Max deviation from conjugate symmetry coeff(-k) = conj(coeff(k))."""
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[:, ::-1]))))

    def is_real_symmetric(self, tol=1e-9):
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return self.symmetry_defect() <= tol * scale

    def evaluate_complex(self, t):
        """Complex-valued evaluation; shape (m,) or (m, n_t)."""
        if np.ndim(t) == 0:
            phase = (self.basis.omega * float(t)) * self.basis.harmonics
            phi = np.exp(1j * phase) / np.sqrt(self.basis.tau)
            return self.coeffs @ phi
        return self.coeffs @ self.basis.phi_matrix(t)

    def evaluate(self, t):
        """Real-valued evaluation with a conjugate-symmetry check.

        Raises
        ------
        CorruptedSignalError
            If the coefficients violate conjugate symmetry by more than
            1e-9 relative, i.e. the signal is not real-valued.
        """
        if not self.is_real_symmetric():
            raise CorruptedSignalError(
                "signal is not conjugate-symmetric; use evaluate_complex "
                f"(defect {self.symmetry_defect():.3e})")
        return np.real(self.evaluate_complex(t))

    def __call__(self, t):
        return self.evaluate(t)

    def as_evaluator(self):
        """A plain callable t -> value; real if conjugate-symmetric,
        complex otherwise."""
        if self.is_real_symmetric():
            return lambda t: np.real(self.evaluate_complex(t))
        return self.evaluate_complex


def project(f, basis, breakpoints=(), n_points=DEFAULT_QUAD_POINTS):
    """Project a time-domain evaluator onto a truncated Fourier basis.

    Parameters
    ----------
    f : callable
        Maps time to a value of shape (m,) (scalar allowed when m == 1).
        Vectorized evaluators (accepting a time array) are used directly;
        others are sampled point by point.
    basis : SignalBasis
    breakpoints : sequence of float
        Discontinuity locations in [0, tau); the quadrature grid is split
        there.
    n_points : int
        Nominal grid size.
    """
    nodes, weights = quadrature_grid(basis.tau, breakpoints, n_points)
    samples = _sample(f, nodes, basis.m)
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite samples in projection")
    phi = basis.phi_matrix(nodes)
    coeffs = np.einsum("i,li,ci->cl", weights, np.conj(phi), samples)
    return PeriodicSignal(basis, coeffs)


def _sample(f, nodes, m):
    """Sample an evaluator on a grid, returning shape (m, n_nodes)."""
    try:
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape == (m, len(nodes)):
            return vals
        if m == 1 and vals.shape == (len(nodes),):
            return vals[None, :]
        raise ValueError
    except Exception:
        out = np.empty((m, len(nodes)))
        for i, t in enumerate(nodes):
            out[:, i] = np.reshape(np.asarray(f(t), dtype=float), m)
        return out


def project_samples(times, weights, samples, basis):
    """Project pre-computed samples (shape (n_t, m) or (n_t, m, b)) taken
    on a quadrature grid with the given weights.

    Returns coefficient arrays of shape (m, 2K+1) or (m, 2K+1, b).
    """
    phi = np.conj(basis.phi_matrix(times))
    if samples.ndim == 2:
        return np.einsum("i,li,ic->cl", weights, phi, samples)
    return np.einsum("i,li,icb->clb", weights, phi, samples)


def inner_product(f: PeriodicSignal, g: PeriodicSignal) -> complex:
    """L^2(0, tau) inner product, summed over channels."""
    if f.basis != g.basis:
        raise BasisMismatchError(f"bases differ: {f.basis} vs {g.basis}")
    return complex(np.sum(f.coeffs * np.conj(g.coeffs)))


def signal_from_trace(times, values, basis):
    """Project a sampled trace onto a basis using trapezoid weights on the
    (possibly nonuniform) sample grid.  ``values`` has shape (n_t,) or
    (n_t, m); the grid must span one full period."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if len(times) < 2:
        raise ValueError("need at least two samples")
    span = times[-1] - times[0]
    if abs(span - basis.tau) > 1e-6 * basis.tau:
        raise ValueError(
            f"trace spans {span:.6g}, expected one period {basis.tau:.6g}")
    w = np.empty_like(times)
    w[0] = 0.5 * (times[1] - times[0])
    w[-1] = 0.5 * (times[-1] - times[-2])
    w[1:-1] = 0.5 * (times[2:] - times[:-2])
    coeffs = project_samples(times, w, values, basis)
    return PeriodicSignal(basis, coeffs)
