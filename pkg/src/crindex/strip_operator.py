"""Cauchy-Riemann operators du/ds + i du/dt + S(s,t) u on truncated strips and cylinders.

Writing A(s) = -i d/dt - S(s, .), the operator is d/ds - A(s). In t we reuse the
staggered layout of the asymptotic operators; in s we use the box scheme

    (u_{k+1} - u_k) / ds - A(s_{k+1/2}) (u_k + u_{k+1}) / 2 = f_{k+1/2},

whose one-step map is the Cayley transform of A, so growing and decaying
modes keep their character at any step size. The truncated ends carry
spectral conditions: u(s_min) lies in the eigenspace of A_- above `cut_minus`
and u(s_max) in the eigenspace of A_+ below `cut_plus` (both cuts default to
0). The unknowns at the two end slices are coordinates in those eigenspaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import make_interp_spline

from .asymptotic_ops import (
    AsymptoticOperator,
    block_size,
    coefficient_part,
    derivative_part,
    discretize_asymptotic,
    sample_function,
    staggered_points,
)
from .numerics import (
    CRIndexError,
    DegenerateInput,
    ThresholdPolicy,
    Unstable,
    ValidationError,
    conjugate_linear_to_real,
    kernel_dims,
    symmetric_eig,
)

END_TOL = 1e-9
SETTLE_TOL = 1e-8


class CoefficientNotSettled(ValidationError):
    pass


class EndDegenerate(DegenerateInput):
    pass


class EndMismatch(ValidationError):
    pass


class UnstableIndex(Unstable):
    pass


class SupportTooWide(ValidationError):
    pass


class WindowTooShort(ValidationError):
    pass


class Underflow(CRIndexError):
    exit_code = 3


def t_domain(domain: str) -> str:
    """Domain of the asymptotic operators at the ends of a strip or cylinder."""
    if domain == "strip":
        return "strip"
    if domain == "cylinder":
        return "circle"
    raise ValidationError(f"base domain must be 'strip' or 'cylinder', got {domain!r}")


@dataclass(frozen=True, eq=False)
class CRProblem:
    """du/ds + i du/dt + S(s,t) u (+ alpha(s,t) conj(u)) on [s_min, s_max] x (strip | cylinder).

    ``coeff(s, t)`` returns real (len(t), 2n, 2n) matrices for scalar s;
    ``antilinear(s, t)`` returns complex values alpha of shape (len(t),).
    """

    n: int
    domain: str
    coeff: Callable
    end_minus: AsymptoticOperator
    end_plus: AsymptoticOperator
    s_range: tuple = (-8.0, 8.0)
    antilinear: Callable | None = None
    cut_minus: float = 0.0
    cut_plus: float = 0.0
    check_settled: bool = True
    label: str = ""

    def __post_init__(self):
        td = t_domain(self.domain)
        for end in (self.end_minus, self.end_plus):
            if end.n != self.n or end.domain != td:
                raise ValidationError("end operators must match the problem's rank and domain")
        if not self.s_range[0] < self.s_range[1]:
            raise ValidationError("empty s range")

    def total_coeff(self, s: float, t: np.ndarray) -> np.ndarray:
        S = np.asarray(self.coeff(s, t), dtype=float).reshape(t.size, 2 * self.n, 2 * self.n)
        if self.antilinear is not None:
            a = np.asarray(self.antilinear(s, t), dtype=complex).reshape(t.size)
            eye = np.eye(self.n)
            S = S + np.stack([conjugate_linear_to_real(ai * eye) for ai in a])
        return S

    def shifted(self, ds: float) -> "CRProblem":
        """Same problem translated by ds in s."""
        c, a = self.coeff, self.antilinear
        return replace(
            self,
            coeff=lambda s, t: c(s - ds, t),
            antilinear=None if a is None else (lambda s, t: a(s - ds, t)),
            s_range=(self.s_range[0] + ds, self.s_range[1] + ds),
        )

    def extended(self, by: float) -> "CRProblem":
        """The range widened by `by` at both ends (coefficients must be defined there)."""
        return replace(self, s_range=(self.s_range[0] - by, self.s_range[1] + by))


def translation_invariant(A: AsymptoticOperator, L: float = 8.0) -> CRProblem:
    """The problem d/ds - A on [-L, L]."""
    domain = "strip" if A.domain == "strip" else "cylinder"
    return CRProblem(A.n, domain, lambda s, t: A.coeff(t), A, A, (-L, L), label="d/ds - A")


def check_settled(problem: CRProblem, nt: int = 64):
    t = np.linspace(0.0, 1.0, nt + 1)
    for s, end in ((problem.s_range[0], problem.end_minus), (problem.s_range[1], problem.end_plus)):
        err = np.max(np.abs(problem.total_coeff(s, t) - end.coeff(t)))
        if err > SETTLE_TOL:
            raise CoefficientNotSettled(f"coefficient differs from the end operator by {err:.2e} at s = {s:g}")


@dataclass(eq=False)
class DiscretizedOperator:
    """Constrained box-scheme matrix.

    Columns: coordinates of u(s_min) in the kept eigenspace of A_- (p_minus of
    them), the full slices u_1 .. u_{K-1}, coordinates of u(s_max) in the kept
    eigenspace of A_+ (q_plus). Rows: the K cell equations. For a transposed
    operator (see adjoint) the roles swap.
    """

    matrix: sp.csr_matrix
    n: int
    domain: str
    s_nodes: np.ndarray
    nt: int
    slice_size: int
    basis_minus: np.ndarray
    basis_plus: np.ndarray
    problem: CRProblem | None = None
    transposed: bool = False
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def cells(self) -> int:
        return self.s_nodes.size - 1

    @property
    def p_minus(self) -> int:
        return self.basis_minus.shape[1]

    @property
    def q_plus(self) -> int:
        return self.basis_plus.shape[1]

    @property
    def expected_index(self) -> int:
        """Columns minus rows, which is p_minus + q_plus - slice size."""
        m, n = self.matrix.shape
        return n - m

    def expand(self, x: np.ndarray) -> np.ndarray:
        """Domain vector -> slices u_0 .. u_K, shape (K+1, slice_size)."""
        if self.transposed:
            raise ValidationError("expand applies to the operator, not its adjoint")
        N, p = self.slice_size, self.p_minus
        inner = x[p : p + (self.cells - 1) * N].reshape(self.cells - 1, N)
        first = self.basis_minus @ x[:p]
        last = self.basis_plus @ x[p + (self.cells - 1) * N :]
        return np.vstack([first, inner, last])

    def cell_values(self, y: np.ndarray) -> np.ndarray:
        """Codomain vector -> values at the cell midpoints, shape (K, slice_size)."""
        return y.reshape(self.cells, self.slice_size)


def _coefficient_matrix(S_x, S_y, domain, nt):
    """Sparse matrix of a general (not necessarily symmetric) pointwise map S."""
    sym_x = 0.5 * (S_x + np.swapaxes(S_x, 1, 2))
    sym_y = 0.5 * (S_y + np.swapaxes(S_y, 1, 2))
    out = coefficient_part(sym_x, sym_y, domain, nt)
    skew_x = S_x - sym_x
    skew_y = S_y - sym_y
    if np.max(np.abs(skew_x), initial=0.0) == 0.0 and np.max(np.abs(skew_y), initial=0.0) == 0.0:
        return out
    n = S_x.shape[1] // 2
    from .asymptotic_ops import _difference_blocks

    _, P = _difference_blocks(domain, nt)
    blocks = [[None] * (2 * n) for _ in range(2 * n)]
    for a in range(n):
        for b in range(n):
            if a != b:
                blocks[a][b] = sp.diags(skew_x[:, a, b])
                blocks[n + a][n + b] = sp.diags(skew_y[:, n + a, n + b])
            cross = sp.diags(skew_x[:, a, n + b]) @ P
            blocks[a][n + b] = cross
            blocks[n + b][a] = -cross.T
    for i in range(2 * n):
        size = P.shape[0] if i < n else P.shape[1]
        if blocks[i][i] is None:
            blocks[i][i] = sp.csr_matrix((size, size))
    return out + sp.bmat(blocks, format="csr")


def slice_operator(problem: CRProblem, s: float, nt: int) -> sp.csr_matrix:
    """Sparse matrix of A(s) = -i d/dt - S(s, .) on one slice."""
    td = t_domain(problem.domain)
    tx, ty = staggered_points(td, nt)
    D = derivative_part(td, problem.n, nt)
    return (D - _coefficient_matrix(problem.total_coeff(s, tx), problem.total_coeff(s, ty), td, nt)).tocsr()


def end_basis(A: AsymptoticOperator, nt: int, cut: float, keep: str) -> np.ndarray:
    """Orthonormal basis of the eigenspace of the discretized A above (keep='above') or below the cut."""
    sd = symmetric_eig(discretize_asymptotic(A, nt))
    w = sd.eigenvalues
    if np.min(np.abs(w - cut)) <= END_TOL * max(1.0, np.max(np.abs(w))):
        raise EndDegenerate(f"end operator has an eigenvalue at the cut {cut:g}")
    mask = w > cut if keep == "above" else w < cut
    return sd.eigenvectors[:, mask]


def s_grid(s_range, ns_per_unit: int) -> np.ndarray:
    a, b = s_range
    cells = max(2, int(round((b - a) * ns_per_unit)))
    return np.linspace(a, b, cells + 1)


def discretize_cr(problem: CRProblem, ns: int = 16, nt: int = 64, s_nodes: np.ndarray | None = None) -> DiscretizedOperator:
    """Box-scheme matrix of d/ds - A(s) with spectral end conditions.

    ns is the number of cells per unit of s (ignored if s_nodes is given).
    """
    if problem.check_settled:
        check_settled(problem, nt)
    td = t_domain(problem.domain)
    N = block_size(td, problem.n, nt)
    nodes = s_grid(problem.s_range, ns) if s_nodes is None else np.asarray(s_nodes, dtype=float)
    K = nodes.size - 1
    Vm = end_basis(problem.end_minus, nt, problem.cut_minus, "above")
    Vp = end_basis(problem.end_plus, nt, problem.cut_plus, "below")
    eye = sp.identity(N, format="csr")
    rows = []
    for k in range(K):
        ds = nodes[k + 1] - nodes[k]
        Mk = slice_operator(problem, 0.5 * (nodes[k] + nodes[k + 1]), nt)
        left = -eye / ds - 0.5 * Mk
        right = eye / ds - 0.5 * Mk
        row = [None] * (K + 1)
        row[k] = sp.csr_matrix(left @ Vm) if k == 0 else left
        row[k + 1] = sp.csr_matrix(right @ Vp) if k == K - 1 else right
        rows.append(row)
    # give empty column blocks explicit shapes
    widths = [Vm.shape[1]] + [N] * (K - 1) + [Vp.shape[1]]
    for j in range(K + 1):
        if all(r[j] is None for r in rows):
            rows[0][j] = sp.csr_matrix((N, widths[j]))
    M = sp.bmat(rows, format="csr")
    return DiscretizedOperator(M, problem.n, problem.domain, nodes, nt, N, Vm, Vp, problem,
                               provenance=problem.label)


def adjoint(op: DiscretizedOperator) -> DiscretizedOperator:
    """The transpose with respect to the l2 inner products; its kernel represents the cokernel."""
    return replace(op, matrix=op.matrix.T.tocsr(), transposed=not op.transposed)


@dataclass
class IndexComputation:
    kernel: int
    cokernel: int
    index: int
    gap_ratio: float
    grids: list = field(default_factory=list)
    refined_index: int | None = None
    kernel_basis: np.ndarray | None = field(default=None, repr=False)
    cokernel_basis: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {"kernel": self.kernel, "cokernel": self.cokernel, "index": self.index,
                "gap_ratio": self.gap_ratio, "grids": self.grids, "refined_index": self.refined_index}


def _count(op: DiscretizedOperator, policy, vectors):
    ker, coker = kernel_dims(op.matrix, policy, vectors=vectors)
    return ker, coker


def fredholm_index(op: DiscretizedOperator, refine: bool = True, policy: ThresholdPolicy | None = None,
                   vectors: bool = False) -> IndexComputation:
    """Kernel, cokernel and index of a discretized problem.

    With ``refine`` the problem is rebuilt with doubled s and t resolution and
    the range widened by 2 at both ends; the two integers must agree.
    """
    ker, coker = _count(op, policy, vectors)
    grid = {"cells": op.cells, "nt": op.nt, "s_range": [float(op.s_nodes[0]), float(op.s_nodes[-1])]}
    out = IndexComputation(ker.zero_count, coker.zero_count, ker.zero_count - coker.zero_count,
                           min(ker.gap_ratio, coker.gap_ratio), [grid],
                           kernel_basis=ker.basis, cokernel_basis=coker.basis)
    if refine:
        if op.problem is None:
            raise ValidationError("refinement needs the originating problem")
        per_unit = op.cells / (op.s_nodes[-1] - op.s_nodes[0])
        fine_problem = op.problem.extended(2.0)
        fine = discretize_cr(fine_problem, ns=int(round(2 * per_unit)), nt=2 * op.nt)
        fk, fc = _count(fine, policy, False)
        out.refined_index = fk.zero_count - fc.zero_count
        out.grids.append({"cells": fine.cells, "nt": fine.nt,
                          "s_range": [float(fine.s_nodes[0]), float(fine.s_nodes[-1])]})
        if out.refined_index != out.index:
            raise UnstableIndex(f"index {out.index} changed to {out.refined_index} under refinement")
    return out


# ---------------------------------------------------------------- translation invariant solves


@dataclass
class TranslationInvariantSolution:
    s: np.ndarray
    u: np.ndarray          # (len(s), slice) real layout
    eta: np.ndarray        # (len(s), slice) real layout
    eigenvalues: np.ndarray
    residual: float


def _gauss(points=8):
    x, w = np.polynomial.legendre.leggauss(points)
    return 0.5 * (x + 1), 0.5 * w


def _sample_source(eta, A: AsymptoticOperator, nt: int):
    """Return s -> (len(s), slice) real samples of eta on the staggered grid."""
    if callable(eta):
        def f(svals):
            svals = np.atleast_1d(svals)
            return np.stack([sample_function(lambda t, s=s: eta(s, t), A.n, A.domain, nt) for s in svals])
        return f
    raise ValidationError("eta must be a callable (s, t) -> complex (len(t), n)")


def solve_translation_invariant(A: AsymptoticOperator, eta, L: float = 12.0, ns: int = 32, nt: int = 64,
                                support_margin: float = 2.0) -> TranslationInvariantSolution:
    """Bounded solution of du/ds - A u = eta on the line, mode by mode.

    Each eigenmode w_k of the discretized A obeys w' - lam_k w = eta_k; for
    lam_k < 0 it is the forward convolution with exp(lam_k (s - s')), for
    lam_k > 0 the backward one. The convolution over each cell is done by
    8-point Gauss quadrature, exact for the exponential weight times a
    polynomial of degree 15.
    """
    sd = symmetric_eig(discretize_asymptotic(A, nt))
    lam, V = sd.eigenvalues, sd.eigenvectors
    if np.min(np.abs(lam)) <= END_TOL:
        from .asymptotic_ops import Degenerate

        raise Degenerate("asymptotic operator has a zero eigenvalue")
    src = _sample_source(eta, A, nt)
    s = s_grid((-L, L), ns)
    E = src(s)
    scale = np.max(np.abs(E)) if E.size else 0.0
    if scale > 0:
        mass = np.max(np.abs(E), axis=1)
        outside = np.abs(s) > L - support_margin
        if np.any(mass[outside] > 1e-12 * scale):
            raise SupportTooWide(f"source is not supported in |s| < {L - support_margin:g}")
    h = s[1] - s[0]
    xg, wg = _gauss()
    Eg = np.stack([src(s[j] + h * xg) @ V for j in range(s.size - 1)])  # (K, 8, modes)
    Ek = E @ V
    W = np.zeros_like(Ek)
    decay = lam < 0
    # forward for lam < 0: w(s_{j+1}) = e^{lam h} w(s_j) + int_0^h e^{lam (h - x)} eta(s_j + x) dx
    fw = np.exp(lam[decay] * h)
    kern_f = np.exp(np.outer(h * (1 - xg), lam[decay])) * (h * wg)[:, None]
    for j in range(s.size - 1):
        W[j + 1, decay] = fw * W[j, decay] + np.sum(kern_f * Eg[j][:, decay], axis=0)
    # backward for lam > 0: w(s_j) = e^{-lam h} w(s_{j+1}) - int_0^h e^{-lam x} eta(s_j + x) dx
    grow = ~decay
    bw = np.exp(-lam[grow] * h)
    kern_b = np.exp(-np.outer(h * xg, lam[grow])) * (h * wg)[:, None]
    for j in range(s.size - 2, -1, -1):
        W[j, grow] = bw * W[j + 1, grow] - np.sum(kern_b * Eg[j][:, grow], axis=0)
    U = W @ V.T
    res = translation_residual(A, s, U, E, nt)
    return TranslationInvariantSolution(s, U, E, lam, res)


def translation_residual(A: AsymptoticOperator, s, U, E, nt) -> float:
    """Relative l2 norm of du/ds - A u - eta, du/ds by a degree 7 spline."""
    M = discretize_asymptotic(A, nt)
    dU = make_interp_spline(s, U, k=7).derivative()(s)
    R = dU - U @ M.T - E
    den = np.linalg.norm(E)
    return float(np.linalg.norm(R) / den) if den > 0 else float(np.linalg.norm(R))


def box_solve(A: AsymptoticOperator, eta, L: float = 12.0, ns: int = 32, nt: int = 64) -> tuple:
    """Solve the box-discretized translation-invariant system directly (independent check)."""
    prob = translation_invariant(A, L)
    op = discretize_cr(prob, ns=ns, nt=nt)
    if op.matrix.shape[0] != op.matrix.shape[1]:
        raise ValidationError("translation-invariant system should be square")
    src = _sample_source(eta, A, nt)
    s = op.s_nodes
    E = src(s)
    rhs = 0.5 * (E[:-1] + E[1:]).ravel()
    x = spla.spsolve(op.matrix.tocsc(), rhs)
    return s, op.expand(x)


def decay_rates(s: np.ndarray, u: np.ndarray, windows, floor: float = 1e-13):
    """Least-squares slopes of log ||u(s, .)|| over the two windows ((a, b) for s > 0, (c, d) for s < 0).

    Norms below `floor` times the maximum are excluded from the fit.
    """
    norms = np.linalg.norm(u, axis=1)
    top = norms.max() if norms.size else 0.0
    out = []
    for lo, hi in windows:
        mask = (s >= lo) & (s <= hi)
        if mask.sum() < 4:
            raise WindowTooShort(f"window [{lo}, {hi}] holds fewer than 4 samples")
        keep = mask & (norms > floor * max(top, 1e-300))
        if keep.sum() < 4:
            raise Underflow(f"norms in window [{lo}, {hi}] are below {floor:g}")
        slope = np.polyfit(s[keep], np.log(norms[keep]), 1)[0]
        out.append(float(slope))
    return tuple(out)


# ---------------------------------------------------------------- gluing


def _same_operator(a: AsymptoticOperator, b: AsymptoticOperator, nt: int = 32) -> bool:
    if a.n != b.n or a.domain != b.domain:
        return False
    return np.max(np.abs(discretize_asymptotic(a, nt) - discretize_asymptotic(b, nt))) <= SETTLE_TOL * 10


def glue(minus: CRProblem, plus: CRProblem, rho: float) -> CRProblem:
    """Join two problems along a neck of length 3 rho carrying their common end operator."""
    if minus.domain != plus.domain or minus.n != plus.n:
        raise EndMismatch("problems live on different domains")
    if not _same_operator(minus.end_plus, plus.end_minus):
        raise EndMismatch("positive end of the first problem differs from the negative end of the second")
    if rho <= 0:
        raise ValidationError("neck parameter must be positive")
    b = minus.s_range[1]
    shift = b + 3 * rho - plus.s_range[0]
    common = minus.end_plus
    mc, pc = minus.coeff, plus.coeff
    ma, pa = minus.antilinear, plus.antilinear

    def coeff(s, t):
        if s <= b:
            return mc(s, t)
        if s >= b + 3 * rho:
            return pc(s - shift, t)
        return common.coeff(t)

    anti = None
    if ma is not None or pa is not None:
        def anti(s, t):
            if s <= b:
                return ma(s, t) if ma is not None else np.zeros(t.size)
            if s >= b + 3 * rho:
                return pa(s - shift, t) if pa is not None else np.zeros(t.size)
            return np.zeros(t.size)

    return CRProblem(minus.n, minus.domain, coeff, minus.end_minus, plus.end_plus,
                     (minus.s_range[0], plus.s_range[1] + shift), anti,
                     minus.cut_minus, plus.cut_plus, minus.check_settled and plus.check_settled,
                     label=f"glue({minus.label}, {plus.label}, rho={rho:g})")


def direct_sum_problem(p1: CRProblem, p2: CRProblem) -> CRProblem:
    """Block-diagonal problem on C^(n1 + n2)."""
    if p1.domain != p2.domain or p1.s_range != p2.s_range:
        raise ValidationError("direct sum needs equal domains and ranges")
    from .asymptotic_ops import make_operator

    n1, n2 = p1.n, p2.n
    n = n1 + n2

    def embed(S1, S2):
        out = np.zeros((S1.shape[0], 2 * n, 2 * n))
        i1 = np.r_[0:n1, n:n + n1]
        i2 = np.r_[n1:n, n + n1:2 * n]
        out[:, i1[:, None], i1[None, :]] = S1
        out[:, i2[:, None], i2[None, :]] = S2
        return out

    coeff = lambda s, t: embed(p1.total_coeff(s, t), p2.total_coeff(s, t))
    td = t_domain(p1.domain)
    em = make_operator(n, td, lambda t: embed(p1.end_minus.coeff(t), p2.end_minus.coeff(t)))
    ep = make_operator(n, td, lambda t: embed(p1.end_plus.coeff(t), p2.end_plus.coeff(t)))
    return CRProblem(n, p1.domain, coeff, em, ep, p1.s_range, label="direct sum")
