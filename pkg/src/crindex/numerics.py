"""Real representation, grids, eigensolver and rank decisions.

A complex vector u = x + iy in C^n is stored as (x_1..x_n, y_1..y_n).
Sampled functions on a grid are stored component-major: the value of real
component c at grid point j sits at index c * npoints + j.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class CRIndexError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 2


class ValidationError(CRIndexError):
    exit_code = 2


class NonSymmetric(ValidationError):
    pass


class AmbiguousRank(CRIndexError):
    exit_code = 3


class Unstable(CRIndexError):
    exit_code = 3


class DegenerateInput(CRIndexError):
    exit_code = 4


@dataclass(frozen=True)
class RealStructure:
    n: int
    J0: np.ndarray
    C: np.ndarray


def realify(n: int) -> RealStructure:
    """Matrices of multiplication by i and of complex conjugation on R^(2n)."""
    if int(n) != n or n < 1:
        raise ValidationError(f"complex rank must be a positive integer, got {n!r}")
    n = int(n)
    eye = np.eye(n)
    zero = np.zeros((n, n))
    J0 = np.block([[zero, -eye], [eye, zero]])
    C = np.block([[eye, zero], [zero, -eye]])
    J0.setflags(write=False)
    C.setflags(write=False)
    return RealStructure(n, J0, C)


def complex_to_real(M: np.ndarray) -> np.ndarray:
    """Real 2n x 2n matrix of the complex-linear map u -> M u."""
    M = np.asarray(M, dtype=complex)
    P, Q = M.real, M.imag
    return np.block([[P, -Q], [Q, P]])


def conjugate_linear_to_real(M: np.ndarray) -> np.ndarray:
    """Real matrix of the anti-linear map u -> M conj(u)."""
    M = np.asarray(M, dtype=complex)
    P, Q = M.real, M.imag
    return np.block([[P, Q], [Q, -P]])


def real_to_complex_vector(v: np.ndarray, n: int) -> np.ndarray:
    v = np.asarray(v)
    return v[..., :n] + 1j * v[..., n:]


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on [0, 1] (kind 'interval') or on R/Z (kind 'circle')."""

    kind: str
    nt: int

    def __post_init__(self):
        if self.kind not in ("interval", "circle"):
            raise ValidationError(f"unknown grid kind {self.kind!r}")
        if int(self.nt) != self.nt or self.nt < 8:
            raise ValidationError(f"grid needs at least 8 points, got {self.nt}")

    @property
    def h(self) -> float:
        return 1.0 / self.nt

    @property
    def points(self) -> np.ndarray:
        if self.kind == "interval":
            return np.linspace(0.0, 1.0, self.nt + 1)
        return np.arange(self.nt) / self.nt


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    grid: Grid1D | None = None

    def nearest_zero(self, k: int) -> np.ndarray:
        """The k eigenvalues of smallest modulus, returned in ascending order."""
        idx = np.argsort(np.abs(self.eigenvalues), kind="stable")[:k]
        return np.sort(self.eigenvalues[idx])


SYMMETRY_TOL = 1e-12


def symmetry_defect(M) -> float:
    if sp.issparse(M):
        num = spla.norm(M - M.T)
        den = spla.norm(M)
    else:
        num = np.linalg.norm(M - M.T)
        den = np.linalg.norm(M)
    return float(num / den) if den > 0 else 0.0


def symmetrize(M, tol: float = SYMMETRY_TOL):
    """Return (M + M^T)/2, refusing matrices whose defect exceeds tol."""
    d = symmetry_defect(M)
    if d > tol:
        raise NonSymmetric(f"relative symmetry defect {d:.3e} exceeds {tol:.1e}")
    return (M + M.T) * 0.5


def symmetric_eig(M, tol: float = SYMMETRY_TOL) -> SpectralData:
    if sp.issparse(M):
        M = M.toarray()
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {M.shape}")
    w, V = scipy.linalg.eigh(symmetrize(M, tol))
    return SpectralData(w, V)


@dataclass(frozen=True)
class ThresholdPolicy:
    rel: float = 1e-8
    abs: float = 1e-12
    min_gap: float = 100.0

    def threshold(self, sigma_max: float) -> float:
        return max(self.rel * sigma_max, self.abs)


@dataclass(frozen=True)
class RankDecision:
    """Outcome of counting small singular values.

    ``singular_values`` is ascending. For large sparse operators only the
    smallest part of the spectrum is computed; ``complete`` says which.
    """

    singular_values: np.ndarray
    zero_count: int
    gap_ratio: float
    threshold: float
    complete: bool = True
    basis: np.ndarray | None = field(default=None, repr=False, compare=False)


def _gap(sv: np.ndarray, thr: float) -> float:
    small = sv[sv < thr]
    big = sv[sv >= thr]
    if big.size == 0:
        return float("inf")
    if small.size == 0:
        return float(big.min() / thr)
    lo = small.max()
    if lo == 0.0:
        return float("inf")
    return max(1.0, float(big.min() / lo))


DENSE_LIMIT = 2500


def kernel_dims(M, policy: ThresholdPolicy | None = None, vectors: bool = False):
    """Kernel and cokernel dimensions of a real matrix.

    Returns a pair of RankDecision (kernel, cokernel). With ``vectors`` the
    decisions carry orthonormal bases: kernel vectors in the domain and
    cokernel vectors (kernel of the transpose) in the codomain.
    Raises AmbiguousRank when the singular value gap is below policy.min_gap.
    """
    policy = policy or ThresholdPolicy()
    m, n = M.shape
    if max(m, n) <= DENSE_LIMIT or not sp.issparse(M):
        ker, coker = _dense_dims(M, policy, vectors)
    else:
        ker, coker = _sparse_dims(M.tocsc(), policy, vectors)
    if min(ker.gap_ratio, coker.gap_ratio) < policy.min_gap:
        raise AmbiguousRank(
            f"singular value gap ratio {min(ker.gap_ratio, coker.gap_ratio):.3g} "
            f"below {policy.min_gap:g}"
        )
    return ker, coker


def _dense_dims(M, policy, vectors):
    A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix has non-finite entries")
    m, n = A.shape
    if vectors:
        U, sv, Vt = scipy.linalg.svd(A, lapack_driver="gesvd")
    else:
        sv = scipy.linalg.svdvals(A)
    smax = float(sv.max()) if sv.size else 0.0
    thr = policy.threshold(smax)
    asc = np.sort(sv)
    nz = int(np.sum(sv < thr))
    gap = _gap(asc, thr)
    kb = cb = None
    if vectors:
        r = sv.size - nz
        kb = Vt[r:].T.copy()
        cb = U[:, r:].copy()
    ker = RankDecision(asc, nz + max(0, n - m), gap, thr, True, kb)
    coker = RankDecision(asc, nz + max(0, m - n), gap, thr, True, cb)
    return ker, coker


def largest_singular_value(M) -> float:
    d = min(M.shape)
    v0 = np.ones(d) / np.sqrt(d)
    s = spla.svds(M, k=1, which="LM", v0=v0, tol=1e-4, return_singular_vectors=False)
    return float(s[0])


def _low_modes(K, shift, k, tol, rng, maxit=60, far=np.inf):
    """Eigenpairs of symmetric K nearest `shift` by shift-invert subspace iteration.

    A block method, unlike single-vector Lanczos, resolves repeated
    eigenvalues, which are the rule for kernels. Ritz values are taken for
    the inverse operator, so an indefinite K cannot produce spurious values
    near the shift. Values that stay beyond `far` in modulus on two
    consecutive sweeps only need to be located, not converged.
    """
    N = K.shape[0]
    lu = spla.splu((K - shift * sp.identity(N, format="csc")).tocsc())
    p = min(N, k + 8)
    X = np.linalg.qr(rng.standard_normal((N, p)))[0]
    prev = None
    for _ in range(maxit):
        Y = lu.solve(X)
        nu, Q = np.linalg.eigh(0.5 * (X.T @ Y + Y.T @ X))
        order = np.argsort(-np.abs(nu), kind="stable")
        nu, Q = nu[order], Q[:, order]
        X = np.linalg.qr(Y @ Q)[0]
        lam = shift + 1.0 / nu[:k]
        settled = np.abs(lam - prev) <= np.maximum(tol, 1e-2 * np.abs(lam)) if prev is not None else None
        if prev is not None and np.all(settled | ((np.abs(lam) > far) & (np.abs(prev) > far))):
            order = np.argsort(np.abs(lam), kind="stable")
            return lam[order], X[:, :k][:, order]
        prev = lam
    raise AmbiguousRank("subspace iteration did not converge")


def _sparse_dims(M, policy, vectors):
    # eigenvalues of [[0, M], [M^T, 0]] are +-singular values plus |m-n| zeros
    m, n = M.shape
    smax = largest_singular_value(M)
    thr = policy.threshold(smax)
    K = sp.bmat([[None, M], [M.T, None]], format="csc")
    rng = np.random.default_rng(20240607)
    k = 8 + abs(m - n)
    while True:
        k = min(k, m + n)
        w, V = _low_modes(K, -0.5 * thr, k, 1e-3 * thr, rng, far=1e3 * thr)
        if np.sum(np.abs(w) >= thr) >= 2 or k >= m + n:
            break
        k *= 2
    aw = np.abs(w)
    zero = aw < thr
    z = int(zero.sum())
    if (z - abs(m - n)) % 2:
        raise AmbiguousRank("near-zero eigenvalue count of the augmented matrix is inconsistent")
    paired = (z - abs(m - n)) // 2
    nk = paired + max(0, n - m)
    nc = paired + max(0, m - n)
    # moduli of the augmented eigenvalues; nonzero singular values show up twice
    sv = np.sort(aw)
    gap = _gap(sv, thr)
    kb = cb = None
    if vectors:
        Z = V[:, zero]
        kb = _orth(Z[m:], nk)
        cb = _orth(Z[:m], nc)
    ker = RankDecision(sv, nk, gap, thr, False, kb)
    coker = RankDecision(sv, nc, gap, thr, False, cb)
    return ker, coker


def _orth(B: np.ndarray, r: int) -> np.ndarray:
    if r == 0:
        return np.zeros((B.shape[0], 0))
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    return U[:, :r]
