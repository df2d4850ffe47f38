"""Asymptotic operators A = -i d/dt - S(t) on [0,1] with real ends or on R/Z.

The t-derivative lives on a staggered grid: one real component on the
integer points, the other on the half points. This keeps the discrete
operator exactly symmetric and free of the spurious checkerboard kernel
that plain collocated central differences produce.

    circle, Nt points:  x at t_j = j/Nt,      y at t_{j+1/2}
    strip:              x at t_{j+1/2} (Nt),  y at t_j, j = 1..Nt-1

On the strip the imaginary parts at t = 0 and t = 1 vanish by the boundary
condition and are simply not unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline, make_interp_spline

from .numerics import (
    CRIndexError,
    DegenerateInput,
    Grid1D,
    SpectralData,
    Unstable,
    ValidationError,
    complex_to_real,
    realify,
    symmetric_eig,
)

DOMAINS = ("strip", "circle")
COEFF_SYMMETRY_TOL = 1e-10


class BadDimensions(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class NotUnitary(ValidationError):
    pass


class BoundaryConditionViolated(ValidationError):
    pass


class Degenerate(DegenerateInput):
    pass


def _sym_check(S: np.ndarray, what: str) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    den = np.linalg.norm(S, axis=(-2, -1))
    num = np.linalg.norm(S - np.swapaxes(S, -1, -2), axis=(-2, -1))
    rel = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    if np.max(rel, initial=0.0) > COEFF_SYMMETRY_TOL:
        raise NotSymmetric(f"{what}: symmetry defect {np.max(rel):.2e}")
    return 0.5 * (S + np.swapaxes(S, -1, -2))


@dataclass(frozen=True, eq=False)
class AsymptoticOperator:
    """A = -i d/dt - S(t) acting on C^n valued functions.

    ``kind`` is one of 'constant', 'fourier', 'samples', 'callable'.
    Use make_operator rather than the constructor.
    """

    n: int
    domain: str
    kind: str
    data: object
    label: str = ""

    def coeff(self, t) -> np.ndarray:
        """S at the times t, shape (len(t), 2n, 2n)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        m = 2 * self.n
        if self.kind == "constant":
            return np.broadcast_to(self.data, (t.size, m, m)).copy()
        if self.kind == "fourier":
            c0, cos_terms, sin_terms = self.data
            out = np.broadcast_to(c0, (t.size, m, m)).copy()
            for k, Ck in enumerate(cos_terms, start=1):
                out += np.cos(2 * np.pi * k * t)[:, None, None] * Ck
            for k, Sk in enumerate(sin_terms, start=1):
                out += np.sin(2 * np.pi * k * t)[:, None, None] * Sk
            return out
        if self.kind == "samples":
            return self.data(t)
        out = np.asarray(self.data(t), dtype=float)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def with_label(self, label: str) -> "AsymptoticOperator":
        return AsymptoticOperator(self.n, self.domain, self.kind, self.data, label)


def make_operator(n: int, domain: str, coeff, kind: str | None = None, label: str = "") -> AsymptoticOperator:
    """Build an asymptotic operator.

    coeff may be a (2n, 2n) matrix (constant), a dict with keys 'c0', 'cos',
    'sin' (finite Fourier series in cos/sin(2 pi k t)), an array of shape
    (m, 2n, 2n) of samples on a uniform grid of [0, 1] (endpoints included),
    or a callable t -> (len(t), 2n, 2n).
    """
    realify(n)
    if domain not in DOMAINS:
        raise ValidationError(f"domain must be one of {DOMAINS}, got {domain!r}")
    m = 2 * n
    if callable(coeff) and kind in (None, "callable"):
        probe = np.asarray(coeff(np.array([0.0, 0.5, 1.0])), dtype=float)
        if probe.shape != (3, m, m):
            raise BadDimensions(f"coefficient callable returned shape {probe.shape}")
        probe = _sym_check(probe, "coefficient")
        if domain == "circle" and not np.allclose(probe[0], probe[2], atol=1e-9):
            raise ValidationError("circle coefficient must satisfy S(0) = S(1)")
        return AsymptoticOperator(n, domain, "callable", coeff, label)
    if isinstance(coeff, dict):
        extra = set(coeff) - {"c0", "cos", "sin"}
        if extra:
            raise ValidationError(f"unknown Fourier fields {sorted(extra)}")
        c0 = np.asarray(coeff.get("c0", np.zeros((m, m))), dtype=float)
        cos_terms = [np.asarray(c, dtype=float) for c in coeff.get("cos", [])]
        sin_terms = [np.asarray(c, dtype=float) for c in coeff.get("sin", [])]
        for c in [c0, *cos_terms, *sin_terms]:
            if c.shape != (m, m):
                raise BadDimensions(f"Fourier coefficient has shape {c.shape}, expected {(m, m)}")
        c0 = _sym_check(c0, "c0")
        cos_terms = tuple(_sym_check(c, "cos term") for c in cos_terms)
        sin_terms = tuple(_sym_check(c, "sin term") for c in sin_terms)
        return AsymptoticOperator(n, domain, "fourier", (c0, cos_terms, sin_terms), label)
    arr = np.asarray(coeff, dtype=float)
    if arr.shape == (m, m):
        return AsymptoticOperator(n, domain, "constant", _sym_check(arr, "coefficient"), label)
    if arr.ndim == 3 and arr.shape[1:] == (m, m) and arr.shape[0] >= 4:
        arr = _sym_check(arr, "coefficient samples")
        ts = np.linspace(0.0, 1.0, arr.shape[0])
        if domain == "circle":
            if not np.allclose(arr[0], arr[-1], atol=1e-10):
                raise ValidationError("circle coefficient samples must satisfy S(0) = S(1)")
            spline = CubicSpline(ts, arr, axis=0, bc_type="periodic")
        else:
            spline = CubicSpline(ts, arr, axis=0)
        return AsymptoticOperator(n, domain, "samples", spline, label)
    raise BadDimensions(f"cannot interpret coefficient of shape {arr.shape} for n={n}")


def reference_operator(n: int = 1, domain: str = "strip", sigma: float = 1.0) -> AsymptoticOperator:
    """-i d/dt - sigma C, non-degenerate for every sigma > 0."""
    return make_operator(n, domain, sigma * realify(n).C, label=f"reference(sigma={sigma:g})")


def scalar_operator(n: int, domain: str, c: float) -> AsymptoticOperator:
    """-i d/dt - c, multiplication by the real number c."""
    return make_operator(n, domain, c * np.eye(2 * n))


def combine(a: AsymptoticOperator, b: AsymptoticOperator, wa: float, wb: float) -> AsymptoticOperator:
    """Operator with coefficient wa * S_a + wb * S_b."""
    _same_kind(a, b)
    return AsymptoticOperator(a.n, a.domain, "callable", lambda t: wa * a.coeff(t) + wb * b.coeff(t))


def _same_kind(a, b):
    if a.n != b.n or a.domain != b.domain:
        raise ValidationError("operators must share rank and domain")


# ---------------------------------------------------------------- grids


def staggered_points(domain: str, nt: int):
    """Positions of the x unknowns and of the y unknowns."""
    Grid1D("interval" if domain == "strip" else "circle", nt)
    h = 1.0 / nt
    if domain == "circle":
        return np.arange(nt) * h, (np.arange(nt) + 0.5) * h
    return (np.arange(nt) + 0.5) * h, np.arange(1, nt) * h


def block_size(domain: str, n: int, nt: int) -> int:
    tx, ty = staggered_points(domain, nt)
    return n * (tx.size + ty.size)


def sample_function(f: Callable, n: int, domain: str, nt: int) -> np.ndarray:
    """Real vector of the complex function f: t -> (len(t), n) on the staggered grid."""
    tx, ty = staggered_points(domain, nt)
    fx = np.asarray(f(tx), dtype=complex).reshape(tx.size, n)
    fy = np.asarray(f(ty), dtype=complex).reshape(ty.size, n)
    return np.concatenate([fx.real.T.ravel(), fy.imag.T.ravel()])


def unpack(v: np.ndarray, n: int, domain: str, nt: int):
    """Split a real vector into (x samples (n, Nx), y samples (n, Ny))."""
    tx, ty = staggered_points(domain, nt)
    nx = n * tx.size
    return v[:nx].reshape(n, tx.size), v[nx:].reshape(n, ty.size)


def _difference_blocks(domain: str, nt: int):
    """Matrix G with d/dt y at x points = G y; then -d/dt x at y points = G^T x."""
    h = 1.0 / nt
    if domain == "circle":
        j = np.arange(nt)
        rows = np.concatenate([j, j])
        cols = np.concatenate([j, (j - 1) % nt])
        vals = np.concatenate([np.full(nt, 1 / h), np.full(nt, -1 / h)])
        G = sp.csr_matrix((vals, (rows, cols)), shape=(nt, nt))
        P = sp.csr_matrix((np.full(2 * nt, 0.5), (rows, cols)), shape=(nt, nt))
        return G, P
    # x_j at t_{j+1/2}, j = 0..nt-1; y_k at t_k, k = 1..nt-1 (column k-1)
    rows, cols, vals, pv = [], [], [], []
    for j in range(nt):
        if j + 1 <= nt - 1:
            rows.append(j), cols.append(j), vals.append(1 / h), pv.append(0.5)
        if j >= 1:
            rows.append(j), cols.append(j - 1), vals.append(-1 / h), pv.append(0.5)
    G = sp.csr_matrix((vals, (rows, cols)), shape=(nt, nt - 1))
    P = sp.csr_matrix((pv, (rows, cols)), shape=(nt, nt - 1))
    return G, P


def derivative_part(domain: str, n: int, nt: int) -> sp.csr_matrix:
    """Sparse matrix of -i d/dt in the staggered real layout."""
    G, _ = _difference_blocks(domain, nt)
    eye = sp.identity(n, format="csr")
    top = sp.kron(eye, G)
    return sp.bmat([[None, top], [top.T, None]], format="csr")


def coefficient_part(S_x: np.ndarray, S_y: np.ndarray, domain: str, nt: int) -> sp.csr_matrix:
    """Sparse matrix of the pointwise map S, given S at the x and at the y points.

    S_x has shape (Nx, 2n, 2n), S_y has shape (Ny, 2n, 2n). Only the x-x block
    of S_x, the y-y block of S_y and the x-y block of S_x are used; the
    cross block couples an x point to the average of its two y neighbours.
    """
    _, P = _difference_blocks(domain, nt)
    n = S_x.shape[1] // 2
    blocks = [[None] * (2 * n) for _ in range(2 * n)]
    for a in range(n):
        for b in range(n):
            blocks[a][b] = sp.diags(S_x[:, a, b])
            blocks[n + a][n + b] = sp.diags(S_y[:, n + a, n + b])
            cross = sp.diags(S_x[:, a, n + b]) @ P
            blocks[a][n + b] = cross
            blocks[n + b][a] = cross.T
    return sp.bmat(blocks, format="csr")


def discretize_asymptotic(A: AsymptoticOperator, nt: int, sparse: bool = False):
    """Symmetric real matrix of A on the staggered grid with nt cells."""
    tx, ty = staggered_points(A.domain, nt)
    M = derivative_part(A.domain, A.n, nt) - coefficient_part(A.coeff(tx), A.coeff(ty), A.domain, nt)
    M = ((M + M.T) * 0.5).tocsr()
    return M if sparse else M.toarray()


def spectrum(A: AsymptoticOperator, nt: int) -> SpectralData:
    sd = symmetric_eig(discretize_asymptotic(A, nt))
    return SpectralData(sd.eigenvalues, sd.eigenvectors, Grid1D("interval" if A.domain == "strip" else "circle", nt))


def extrapolated_eigenvalues(A: AsymptoticOperator, k: int, nt: int = 256) -> np.ndarray:
    """The k eigenvalues nearest 0, Richardson-extrapolated from nt and 2 nt."""
    coarse = spectrum(A, nt).nearest_zero(k + 4)
    fine = spectrum(A, 2 * nt).nearest_zero(k + 4)
    out = (4 * fine - coarse) / 3
    idx = np.argsort(np.abs(out), kind="stable")[:k]
    return np.sort(out[idx])


def _closest(A, nt):
    w = spectrum(A, nt).eigenvalues
    return w[np.argmin(np.abs(w))]


def is_nondegenerate(A: AsymptoticOperator, nt: int = 64, tol: float = 1e-6):
    """(non-degenerate?, margin).

    The eigenvalue nearest zero is computed at nt and 2 nt; the margin is its
    Richardson extrapolation. A margin that moves by more than half between
    the two grids raises Unstable.
    """
    lam1 = _closest(A, nt)
    lam2 = _closest(A, 2 * nt)
    margin = abs((4 * lam2 - lam1) / 3)
    if margin <= tol or min(abs(lam1), abs(lam2)) <= tol:
        return False, margin
    if abs(abs(lam2) - abs(lam1)) > 0.5 * abs(lam2):
        raise Unstable(f"margin moved from {abs(lam1):.3e} to {abs(lam2):.3e} under refinement")
    return True, margin


# ---------------------------------------------------------------- solving


def _rk4_transfer(A: AsymptoticOperator, eta: Callable, nt: int):
    """Fundamental matrix and particular solution of xi' = i (S xi + eta).

    Returns Z with Z[j] = [Phi(t_j) | xi_p(t_j)], a (nt+1, 2n, 2n+1) array.
    """
    m = 2 * A.n
    J0 = realify(A.n).J0
    h = 1.0 / nt

    def rhs(t, Z):
        S = A.coeff(t)[0]
        e = np.asarray(eta(np.array([t])), dtype=complex).reshape(-1)
        out = J0 @ S @ Z
        out[:, -1] += J0 @ np.concatenate([e.real, e.imag])
        return out

    Z = np.zeros((nt + 1, m, m + 1))
    Z[0, :, :m] = np.eye(m)
    for j in range(nt):
        t = j * h
        z = Z[j]
        k1 = rhs(t, z)
        k2 = rhs(t + h / 2, z + h / 2 * k1)
        k3 = rhs(t + h / 2, z + h / 2 * k2)
        k4 = rhs(t + h, z + h * k3)
        Z[j + 1] = z + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return Z


def _as_callable(eta, n: int, nt: int, domain: str):
    if callable(eta):
        return eta
    arr = np.asarray(eta, dtype=complex)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[1] != n:
        raise BadDimensions(f"right-hand side has {arr.shape[1]} components, expected {n}")
    ts = np.linspace(0.0, 1.0, arr.shape[0])
    bc = "periodic" if domain == "circle" else "not-a-knot"
    re = CubicSpline(ts, arr.real, axis=0, bc_type=bc)
    im = CubicSpline(ts, arr.imag, axis=0, bc_type=bc)
    return lambda t: re(t) + 1j * im(t)


def solve_asymptotic(A: AsymptoticOperator, eta, nt: int = 256, cond_max: float = 1e10):
    """Solve A xi = eta by the transfer-matrix method.

    eta is a callable t -> (len(t), n) complex array or samples on the
    uniform grid with nt + 1 points. Returns (t, xi) with xi of shape
    (nt + 1, n), complex. Raises Degenerate when the end map is singular.
    """
    n = A.n
    f = _as_callable(eta, n, nt, A.domain)
    Z = _rk4_transfer(A, f, nt)
    m = 2 * n
    Phi1, p1 = Z[-1, :, :m], Z[-1, :, m]
    if A.domain == "strip":
        # xi(0) = (x0, 0) and Im xi(1) = 0
        F = Phi1[n:, :n]
        rhs = -p1[n:]
    else:
        F = Phi1 - np.eye(m)
        rhs = -p1
    s = np.linalg.svd(F, compute_uv=False)
    if s.min() <= s.max() / cond_max:
        raise Degenerate(f"end map is singular (condition {s.max() / max(s.min(), 1e-300):.2e})")
    c = np.linalg.solve(F, rhs)
    x0 = np.concatenate([c, np.zeros(n)]) if A.domain == "strip" else c
    xi_real = Z[:, :, :m] @ x0 + Z[:, :, m]
    t = np.linspace(0.0, 1.0, nt + 1)
    return t, xi_real[:, :n] + 1j * xi_real[:, n:]


def apply_operator(A: AsymptoticOperator, t: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Evaluate A xi = -i xi' - S xi at the sample times, with a degree 7 spline derivative."""
    xi = np.asarray(xi, dtype=complex).reshape(t.size, -1)
    n = xi.shape[1]
    bc = "periodic" if A.domain == "circle" else None
    d = np.zeros_like(xi)
    for part, unit in ((xi.real, 1.0), (xi.imag, 1j)):
        d = d + unit * make_interp_spline(t, part, k=7, bc_type=bc).derivative()(t)
    S = A.coeff(t)
    xr = np.concatenate([xi.real, xi.imag], axis=1)
    Sx = np.einsum("tij,tj->ti", S, xr)
    return -1j * d - (Sx[:, :n] + 1j * Sx[:, n:])


def relative_residual(A: AsymptoticOperator, t, xi, eta) -> float:
    f = _as_callable(eta, A.n, t.size - 1, A.domain)
    target = np.asarray(f(t), dtype=complex).reshape(t.size, -1)
    r = apply_operator(A, t, xi) - target
    den = np.linalg.norm(target)
    return float(np.linalg.norm(r) / den) if den > 0 else float(np.linalg.norm(r))


# ---------------------------------------------------------------- unitary paths


@dataclass(frozen=True, eq=False)
class UnitaryPath:
    """t -> Omega(t), a path of unitary n x n matrices, with optional derivative."""

    n: int
    func: Callable
    deriv: Callable | None = None
    name: str = ""

    def __call__(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.func(t), dtype=complex).reshape(t.size, self.n, self.n)

    def derivative(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.deriv is not None:
            return np.asarray(self.deriv(t), dtype=complex).reshape(t.size, self.n, self.n)
        h = 1e-3
        return (-self(t + 2 * h) + 8 * self(t + h) - 8 * self(t - h) + self(t - 2 * h)) / (12 * h)


def identity_path(n: int) -> UnitaryPath:
    return UnitaryPath(n, lambda t: np.broadcast_to(np.eye(n), (t.size, n, n)),
                       lambda t: np.zeros((t.size, n, n)), "identity")


def diagonal_phase_path(windings, n: int | None = None, full: bool = False) -> UnitaryPath:
    """diag(exp(i pi k_j t)), or exp(2 pi i k_j t) when full is set."""
    k = np.asarray(windings, dtype=float)
    n = n or k.size
    k = np.concatenate([k, np.zeros(n - k.size)])
    rate = (2 * np.pi if full else np.pi) * k

    def f(t):
        out = np.zeros((t.size, n, n), dtype=complex)
        idx = np.arange(n)
        out[:, idx, idx] = np.exp(1j * np.outer(t, rate))
        return out

    def df(t):
        out = np.zeros((t.size, n, n), dtype=complex)
        idx = np.arange(n)
        out[:, idx, idx] = 1j * rate * np.exp(1j * np.outer(t, rate))
        return out

    kind = "full_loop" if full else "half_rotation"
    return UnitaryPath(n, f, df, f"{kind}{list(k.astype(int))}")


def random_unitary_path(rng: np.random.Generator, n: int, domain: str, max_winding: int = 2) -> UnitaryPath:
    """A smooth random path satisfying the boundary requirement of the domain.

    strip:  Omega(t) = O diag(e^{i pi k t}) exp(i sin(pi t) H) exp(t X), with O
            real orthogonal, H real symmetric, X real skew; Omega(0), Omega(1)
            are then real orthogonal.
    circle: Omega(t) = U diag(e^{2 pi i k t}) exp(i sin(2 pi t) H) U^*.
    """
    from scipy.linalg import expm

    k = rng.integers(-max_winding, max_winding + 1, size=n)
    H = rng.normal(size=(n, n))
    H = 0.5 * (H + H.T)
    if domain == "strip":
        O, _ = np.linalg.qr(rng.normal(size=(n, n)))
        X = rng.normal(size=(n, n))
        X = 0.5 * (X - X.T)

        def f(t):
            out = np.empty((t.size, n, n), dtype=complex)
            for i, ti in enumerate(t):
                out[i] = O @ np.diag(np.exp(1j * np.pi * k * ti)) @ expm(1j * np.sin(np.pi * ti) * H) @ expm(ti * X)
            return out
    elif domain == "circle":
        Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        U, _ = np.linalg.qr(Z)

        def f(t):
            out = np.empty((t.size, n, n), dtype=complex)
            for i, ti in enumerate(t):
                out[i] = U @ np.diag(np.exp(2j * np.pi * k * ti)) @ expm(1j * np.sin(2 * np.pi * ti) * H) @ U.conj().T
            return out
    else:
        raise ValidationError(f"unknown domain {domain!r}")
    return UnitaryPath(n, f, None, f"random(k={k.tolist()})")


def check_unitary_path(Omega: UnitaryPath, domain: str, tol: float = 1e-8):
    t = np.linspace(0.0, 1.0, 33)
    W = Omega(t)
    eye = np.eye(Omega.n)
    err = np.max(np.abs(np.conj(np.swapaxes(W, 1, 2)) @ W - eye))
    if err > tol:
        raise NotUnitary(f"path fails unitarity by {err:.2e}")
    if domain == "strip":
        if np.max(np.abs(W[0].imag)) > tol or np.max(np.abs(W[-1].imag)) > tol:
            raise BoundaryConditionViolated("Omega(0) and Omega(1) must preserve R^n")
    elif np.max(np.abs(W[0] - W[-1])) > tol:
        raise BoundaryConditionViolated("a circle path must be a loop")


def conjugate_operator(A: AsymptoticOperator, Omega: UnitaryPath) -> AsymptoticOperator:
    """The operator Omega^{-1} A Omega, again of the form -i d/dt - S'(t).

    S' = i Omega^{-1} Omega' + Omega^{-1} S Omega, written in real form.
    """
    if Omega.n != A.n:
        raise BadDimensions("path and operator have different rank")
    check_unitary_path(Omega, A.domain)
    n = A.n

    def coeff(t):
        t = np.atleast_1d(t)
        W = Omega(t)
        dW = Omega.derivative(t)
        Winv = np.conj(np.swapaxes(W, 1, 2))
        gauge = 1j * Winv @ dW
        gauge = 0.5 * (gauge + np.conj(np.swapaxes(gauge, 1, 2)))
        S = A.coeff(t)
        out = np.empty((t.size, 2 * n, 2 * n))
        for i in range(t.size):
            R = complex_to_real(W[i])
            out[i] = R.T @ S[i] @ R + complex_to_real(gauge[i])
        return out

    return make_operator(n, A.domain, coeff, label=f"conj({A.label or 'A'}, {Omega.name})")


# ---------------------------------------------------------------- random operators


def random_operator(rng: np.random.Generator, n: int, domain: str, scale: float = 3.0, modes: int = 2,
                    nt: int = 64, min_margin: float = 0.2, tries: int = 50) -> AsymptoticOperator:
    """Random smooth symmetric coefficient (Fourier modes up to `modes`), non-degenerate with margin."""
    m = 2 * n

    def sym():
        X = rng.normal(size=(m, m))
        return 0.5 * (X + X.T)

    for _ in range(tries):
        data = {"c0": scale * sym(),
                "cos": [scale / (k + 1) * sym() for k in range(modes)],
                "sin": [scale / (k + 1) * sym() for k in range(modes)]}
        A = make_operator(n, domain, data, label="random")
        try:
            ok, margin = is_nondegenerate(A, nt)
        except CRIndexError:
            continue
        if ok and margin >= min_margin:
            return A
    raise Degenerate("could not draw a non-degenerate operator")
