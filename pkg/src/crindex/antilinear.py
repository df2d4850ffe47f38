"""Anti-linear perturbations dbar u + sigma alpha(z) conj(u) and their six local models.

Here dbar = d/dx + i d/dy. The model operators live on the plane or on the
closed upper half-plane (u real on the real axis). We discretize them in
log-polar coordinates: with z = r e^{i theta}, r = e^{kappa s}, theta = kappa t
(kappa = 2 pi on the plane, pi on the half-plane), multiplying the equation by
kappa r e^{-i theta} gives

    du/ds + i du/dt + kappa r e^{-i theta} sigma alpha(z) conj(u),

a Cauchy-Riemann problem on a cylinder (plane) or a strip (half-plane). The
origin becomes the end s -> -inf; functions regular at the origin are the
modes with eigenvalue >= 0 of -i d/dt there, so that end keeps the
eigenspace above -pi (plane) or -pi/2 (half-plane). The outer arc r = R
carries the usual spectral condition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .asymptotic_ops import make_operator, reference_operator, staggered_points
from .numerics import CRIndexError, ValidationError, conjugate_linear_to_real
from .strip_operator import (
    CRProblem,
    DiscretizedOperator,
    UnstableIndex,
    discretize_cr,
    fredholm_index,
)


class GridTooCoarse(ValidationError):
    pass


class NoElement(CRIndexError):
    exit_code = 2


class ZerosTooClose(ValidationError):
    pass


class UnsupportedConfiguration(ValidationError):
    pass


class EmptyKernel(CRIndexError):
    exit_code = 4


class BoundaryConditionViolated(ValidationError):
    pass


# ---------------------------------------------------------------- the six kinds of zeros

_FORMS = {
    "-z": lambda z: -z,
    "+z": lambda z: z,
    "+zbar": lambda z: np.conj(z),
    "-zbar": lambda z: -np.conj(z),
}


@dataclass(frozen=True)
class ZeroType:
    tag: str
    count: int
    form: str
    boundary: bool

    def alpha(self, z):
        return _FORMS[self.form](np.asarray(z, dtype=complex))

    @property
    def table_dims(self) -> tuple:
        return {1: (1, 0), 0: (0, 0), -1: (0, 1)}[self.count]


ZERO_TYPES = {
    "interior+": ZeroType("interior+", 1, "-z", False),
    "interior-": ZeroType("interior-", -1, "+zbar", False),
    "(+,+)": ZeroType("(+,+)", 1, "+z", True),
    "(+,-)": ZeroType("(+,-)", 0, "-z", True),
    "(-,+)": ZeroType("(-,+)", 0, "+zbar", True),
    "(-,-)": ZeroType("(-,-)", -1, "-zbar", True),
}
TAG_ORDER = ["interior+", "interior-", "(+,+)", "(+,-)", "(-,+)", "(-,-)"]

_DUAL_FORM = {"+z": "-zbar", "-z": "+zbar", "+zbar": "-z", "-zbar": "+z"}


def zero_type(tag) -> ZeroType:
    if isinstance(tag, ZeroType):
        return tag
    key = str(tag).replace("−", "-").replace(" ", "")
    try:
        return ZERO_TYPES[key]
    except KeyError:
        raise ValidationError(f"unknown zero type {tag!r}; expected one of {TAG_ORDER}") from None


def classify_zero(alpha, z0: complex, boundary: bool, h: float = 1e-5) -> str:
    """Tag of an isolated zero of alpha from the signs of its linearization."""
    z0 = complex(z0)
    ax = (alpha(z0 + h) - alpha(z0 - h)) / (2 * h)
    if boundary:
        ay = (alpha(z0 + 1j * h) - alpha(z0)) / h
    else:
        ay = (alpha(z0 + 1j * h) - alpha(z0 - 1j * h)) / (2 * h)
    det = ax.real * ay.imag - ax.imag * ay.real
    if abs(det) < 1e-8:
        raise ValidationError(f"zero at {z0} is degenerate")
    first = "+" if det > 0 else "-"
    if not boundary:
        return "interior" + first
    second = "+" if ax.real > 0 else "-"
    return f"({first},{second})"


# ---------------------------------------------------------------- log-polar models


@dataclass(frozen=True, eq=False)
class ModelOperator:
    """dbar + sigma alpha(z) C on the disk of radius R (plane) or the half-disk."""

    tag: str
    sigma: float = 1.0
    R: float = 6.0
    grid: int = 96
    r_min: float = 1e-3
    alpha_override: object = None

    def __post_init__(self):
        zero_type(self.tag)
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.R < 4 * self.sigma ** -0.5:
            raise ValidationError(f"R = {self.R} does not contain the Gaussian of width sigma^-1/2")

    @property
    def zero(self) -> ZeroType:
        return zero_type(self.tag)

    @property
    def half(self) -> bool:
        return self.zero.boundary

    @property
    def kappa(self) -> float:
        return np.pi if self.half else 2 * np.pi

    def alpha(self, z):
        if self.alpha_override is not None:
            return self.alpha_override(z)
        return self.zero.alpha(z)

    def points_per_width(self) -> float:
        ds = np.log(self.R / self.r_min) / self.grid
        dtheta = (np.pi if self.half else 2 * np.pi) / self.grid
        return min(1.0 / ds, 1.0 / dtheta)


def dual_model(model: ModelOperator) -> ModelOperator:
    """The duality involution dbar +- sigma z C <-> dbar -+ sigma zbar C."""
    form = _DUAL_FORM[model.zero.form]
    tag = next(t for t in TAG_ORDER if ZERO_TYPES[t].form == form and ZERO_TYPES[t].boundary == model.half)
    return ModelOperator(tag, model.sigma, model.R, model.grid, model.r_min)


def log_polar_problem(alpha, sigma: float, R: float, half: bool, r_min: float = 1e-3, label: str = "") -> CRProblem:
    kappa = np.pi if half else 2 * np.pi
    s_lo, s_hi = np.log(r_min) / kappa, np.log(R) / kappa

    def gamma(s, t):
        r = np.exp(kappa * s)
        theta = kappa * np.asarray(t)
        z = r * np.exp(1j * theta)
        return kappa * r * np.exp(-1j * theta) * sigma * alpha(z)

    def frozen(s0):
        def S(t):
            return np.stack([conjugate_linear_to_real(np.array([[g]])) for g in gamma(s0, np.atleast_1d(t))])
        return make_operator(1, "strip" if half else "circle", S)

    zero = lambda s, t: np.zeros((np.size(t), 2, 2))
    return CRProblem(
        1, "strip" if half else "cylinder", zero, frozen(s_lo), frozen(s_hi), (s_lo, s_hi),
        antilinear=gamma, cut_minus=-np.pi / 2 if half else -np.pi, cut_plus=0.0,
        check_settled=False, label=label,
    )


def discretize_model(model: ModelOperator, check_grid: bool = True) -> DiscretizedOperator:
    if check_grid and model.points_per_width() < 6:
        raise GridTooCoarse(f"only {model.points_per_width():.1f} grid points per Gaussian width")
    prob = log_polar_problem(model.alpha, model.sigma, model.R, model.half, model.r_min, label=model.tag)
    cells = model.grid
    nodes = np.linspace(prob.s_range[0], prob.s_range[1], cells + 1)
    op = discretize_cr(prob, nt=model.grid, s_nodes=nodes)
    op.meta.update(geometry="log-polar", kappa=model.kappa, model=model)
    return op


def local_model(tag, sigma: float = 1.0, R: float = 6.0, grid: int = 96) -> DiscretizedOperator:
    """Discretized local model for one of the six kinds of zeros."""
    return discretize_model(ModelOperator(zero_type(tag).tag, sigma, R, grid))


def model_dims(tag, sigma: float = 1.0, R: float = 6.0, grid: int = 96, vectors: bool = False):
    op = local_model(tag, sigma, R, grid)
    return op, fredholm_index(op, refine=False, vectors=vectors)


# ---------------------------------------------------------------- sampling on the grid


def slice_geometry(op: DiscretizedOperator, where: str = "nodes"):
    """Complex positions and area weights of the unknowns.

    Returns (zx, zy, wx, wy), each of shape (slices, points): positions of the
    real-part unknowns, of the imaginary-part unknowns and their quadrature
    weights. ``where`` is 'nodes' (domain) or 'cells' (codomain).
    """
    td = "strip" if op.domain == "strip" else "circle"
    tx, ty = staggered_points(td, op.nt)
    nodes = op.s_nodes
    if where == "nodes":
        s = nodes
        ds = np.diff(nodes, prepend=nodes[0], append=nodes[-1])
        ds = 0.5 * (ds[:-1] + ds[1:])
    else:
        s = 0.5 * (nodes[:-1] + nodes[1:])
        ds = np.diff(nodes)
    dt = 1.0 / op.nt
    geo = op.meta.get("geometry")
    if geo == "log-polar":
        k = op.meta["kappa"]
        r = np.exp(k * s)[:, None]
        zx, zy = r * np.exp(1j * k * tx)[None, :], r * np.exp(1j * k * ty)[None, :]
        wx = (k * r) ** 2 * ds[:, None] * dt * np.ones_like(tx)[None, :]
        wy = (k * r) ** 2 * ds[:, None] * dt * np.ones_like(ty)[None, :]
    elif geo == "strip":
        W = op.meta["width"]
        zx = W * (s[:, None] + 1j * tx[None, :])
        zy = W * (s[:, None] + 1j * ty[None, :])
        wx = W * W * ds[:, None] * dt * np.ones_like(tx)[None, :]
        wy = W * W * ds[:, None] * dt * np.ones_like(ty)[None, :]
    else:
        raise ValidationError("operator carries no geometry")
    return zx, zy, wx, wy


def _split(slices: np.ndarray, op: DiscretizedOperator):
    td = "strip" if op.domain == "strip" else "circle"
    tx, _ = staggered_points(td, op.nt)
    return slices[:, : tx.size], slices[:, tx.size :]


# ---------------------------------------------------------------- explicit kernel elements


@dataclass(frozen=True)
class GaussianElement:
    """phase * exp(-sigma |z|^2 / 2), a kernel or cokernel element of a local model."""

    tag: str
    role: str
    phase: complex
    sigma: float = 1.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        return self.phase * np.exp(-0.5 * self.sigma * np.abs(z) ** 2)

    def sample(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Values on the Cartesian grid x (columns) by y (rows), normalized in l2."""
        Z = x[None, :] + 1j * y[:, None]
        v = self(Z)
        return v / np.linalg.norm(v)


def gaussian_element(tag, sigma: float = 1.0) -> GaussianElement:
    zt = zero_type(tag)
    if zt.count == 0:
        raise NoElement(f"zeros of type {zt.tag} carry neither kernel nor cokernel")
    role = "kernel" if zt.count > 0 else "cokernel"
    phase = 1j if zt.tag in ("interior+", "interior-") else 1.0
    return GaussianElement(zt.tag, role, phase, sigma)


def _real_inner(op, slices, f, where, transform):
    """Weighted real inner products <u, f>, <u, u>, <f, f> of grid data u with a function f."""
    zx, zy, wx, wy = slice_geometry(op, where)
    ux, uy = _split(slices, op)
    fx, fy = f(zx), f(zy)
    if transform:
        # cokernel of the transformed problem pairs with w f, in the (s, t) measure
        k = op.meta["kappa"]
        fx = k * np.conj(zx) * fx
        fy = k * np.conj(zy) * fy
        wx = wx / (k * np.abs(zx)) ** 2
        wy = wy / (k * np.abs(zy)) ** 2
    gx, gy = fx.real, fy.imag
    ip = np.sum(wx * ux * gx) + np.sum(wy * uy * gy)
    uu = np.sum(wx * ux * ux) + np.sum(wy * uy * uy)
    ff = np.sum(wx * gx * gx) + np.sum(wy * gy * gy)
    return ip, uu, ff


def kernel_overlap(tag, sigma: float = 1.0, R: float = 6.0, grid: int = 96) -> float:
    """|<computed (co)kernel vector, Gaussian element>| after normalization."""
    g = gaussian_element(tag, sigma)
    op, comp = model_dims(tag, sigma, R, grid, vectors=True)
    if g.role == "kernel":
        if comp.kernel != 1:
            raise CRIndexError(f"expected a one-dimensional kernel, found {comp.kernel}")
        slices = op.expand(comp.kernel_basis[:, 0])
        ip, uu, ff = _real_inner(op, slices, g, "nodes", False)
    else:
        if comp.cokernel != 1:
            raise CRIndexError(f"expected a one-dimensional cokernel, found {comp.cokernel}")
        slices = op.cell_values(comp.cokernel_basis[:, 0])
        ip, uu, ff = _real_inner(op, slices, g, "cells", op.meta.get("geometry") == "log-polar")
    return float(abs(ip) / np.sqrt(uu * ff))


# ---------------------------------------------------------------- Bochner-Weitzenboeck


@dataclass(frozen=True)
class Field2D:
    """Complex samples on a uniform Cartesian grid (rows follow y)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    @property
    def Z(self):
        return self.x[None, :] + 1j * self.y[:, None]

    @property
    def cell_area(self) -> float:
        return float((self.x[1] - self.x[0]) * (self.y[1] - self.y[0]))

    def norm2(self, f=None) -> float:
        f = self.values if f is None else f
        return float(np.sum(np.abs(f) ** 2) * self.cell_area)

    def dbar(self) -> np.ndarray:
        dx = np.gradient(self.values, self.x, axis=1, edge_order=2)
        dy = np.gradient(self.values, self.y, axis=0, edge_order=2)
        return dx + 1j * dy

    def d(self) -> np.ndarray:
        dx = np.gradient(self.values, self.x, axis=1, edge_order=2)
        dy = np.gradient(self.values, self.y, axis=0, edge_order=2)
        return dx - 1j * dy


def cartesian_grid(half: bool, R: float = 6.0, n: int = 241):
    x = np.linspace(-R, R, n)
    y = np.linspace(0.0, R, (n + 1) // 2) if half else np.linspace(-R, R, n)
    return x, y


def sample_field(f, half: bool, R: float = 6.0, n: int = 241) -> Field2D:
    x, y = cartesian_grid(half, R, n)
    Z = x[None, :] + 1j * y[:, None]
    return Field2D(x, y, np.asarray(f(Z), dtype=complex))


def bochner_residual(tag, v, R: float = 6.0, n: int = 241) -> float:
    """RHS - LHS of the local Bochner-Weitzenboeck inequality for the model of `tag`.

    For alpha = +-z:    |dbar v|^2 + |z v|^2 <= |dbar v + alpha conj v|^2 + 2 |v|^2
    for alpha = +-zbar: |dbar v|^2 + |z v|^2 <= |dbar v + alpha conj v|^2
    (L2 norms squared). v is a callable of z or a Field2D.
    """
    zt = zero_type(tag)
    F = v if isinstance(v, Field2D) else sample_field(v, zt.boundary, R, n)
    if zt.boundary:
        edge = F.values[0]
        if np.max(np.abs(edge.imag), initial=0.0) > 1e-8 * max(1.0, np.max(np.abs(F.values))):
            raise BoundaryConditionViolated("test function must be real on the real axis")
    Z = F.Z
    dv = F.dbar()
    lhs = F.norm2(dv) + F.norm2(Z * F.values)
    rhs = F.norm2(dv + zt.alpha(Z) * np.conj(F.values))
    if zt.form in ("+z", "-z"):
        rhs += 2 * F.norm2()
    return float(rhs - lhs), float(rhs)


def random_test_function(rng: np.random.Generator, half: bool, bumps: int = 3):
    """Sum of Gaussian bumps; on the half-plane reflected so that it is real on the axis."""
    c = rng.normal(size=bumps) + 1j * rng.normal(size=bumps)
    a = rng.uniform(-1.5, 1.5, size=bumps) + 1j * rng.uniform(-1.5, 1.5, size=bumps)
    w = rng.uniform(0.5, 1.2, size=bumps)

    def f(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros_like(z)
        for cj, aj, wj in zip(c, a, w):
            out += cj * np.exp(-np.abs(z - aj) ** 2 / (2 * wj * wj))
        return out

    if not half:
        return f
    return lambda z: f(z) + np.conj(f(np.conj(z)))


# ---------------------------------------------------------------- global deformations


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _saturate(x):
    """Odd, slope 1 at 0, equal to sign(x) for |x| >= pi/2 (C^1)."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) >= np.pi / 2, np.sign(x), np.sin(np.clip(x, -np.pi / 2, np.pi / 2)))


STRIP_WIDTH = 8.0
MIN_SEPARATION = 4.0


@dataclass(frozen=True, eq=False)
class Deformation:
    """alpha for a zero configuration together with the geometry it lives on."""

    zeros: tuple
    geometry: str           # 'disk', 'half-disk' or 'strip'
    alpha: object
    width: float = STRIP_WIDTH
    settle: float = 0.0     # alpha == 1 for |x| >= settle on the strip

    @property
    def total_count(self) -> int:
        return int(sum(zero_type(t).count for _, t in self.zeros))


def _alpha_disk(zt: ZeroType):
    return lambda z: zt.alpha(z) / np.sqrt(1 + np.abs(z) ** 2)


def _alpha_interior_pair(zp: complex, zm: complex, W: float):
    c = 0.5 * (zp + zm)

    def alpha(z):
        z = np.asarray(z, dtype=complex)
        a0 = (z - zp) * np.conj(z - zm) / np.sqrt((1 + np.abs(z - zp) ** 2) * (1 + np.abs(z - zm) ** 2))
        om = 1 - _smoothstep((np.abs(z - c) - 5.0) / 2.0)
        a = (1 - om) + om * a0
        y = z.imag
        chi = _smoothstep((y - 0.5) / 0.75) * _smoothstep((W - 0.5 - y) / 0.75)
        return a.real + 1j * chi * a.imag

    return alpha


def _alpha_boundary_pair(x1: float, x2: float, m: float, W: float):
    def alpha(z):
        z = np.asarray(z, dtype=complex)
        x, y = z.real, z.imag
        lam = 1 - _smoothstep(y / (W / 2))
        p = lam * _saturate(x - x1) * _saturate(x - x2) + (1 - lam)
        psi = _smoothstep((x - (x1 - 2.5)) / 1.5) * _smoothstep(((x2 + 2.5) - x) / 1.5)
        q = m * psi * (W / np.pi) * np.sin(np.pi * y / W)
        return p + 1j * q

    return alpha


def deformation_for(zeros) -> Deformation:
    """Choose geometry and alpha for a list of (position, tag) pairs."""
    zs = [(complex(p), zero_type(t).tag) for p, t in zeros]
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if abs(zs[i][0] - zs[j][0]) < MIN_SEPARATION:
                raise ZerosTooClose(f"zeros {zs[i][0]} and {zs[j][0]} are closer than {MIN_SEPARATION}")
    if not zs:
        return Deformation((), "strip", lambda z: np.ones_like(np.asarray(z, dtype=complex)), settle=1.0)
    if len(zs) == 1:
        (p, tag), zt = zs[0], zero_type(zs[0][1])
        if abs(p) > 1e-12:
            raise UnsupportedConfiguration("a single zero must sit at the origin")
        return Deformation(tuple(zs), "half-disk" if zt.boundary else "disk", _alpha_disk(zt))
    if len(zs) == 2:
        tags = sorted(t for _, t in zs)
        if tags == ["interior+", "interior-"]:
            zp = next(p for p, t in zs if t == "interior+")
            zm = next(p for p, t in zs if t == "interior-")
            if abs(zp.imag - zm.imag) > 1e-12:
                raise UnsupportedConfiguration("interior pair must sit at a common height")
            W = 2 * zp.imag
            if W < STRIP_WIDTH - 1e-12:
                raise UnsupportedConfiguration(f"interior pair must sit at height >= {STRIP_WIDTH / 2}")
            settle = max(abs(zp.real), abs(zm.real)) + 7.5
            return Deformation(tuple(zs), "strip", _alpha_interior_pair(zp, zm, W), W, settle)
        pairs = {("(+,+)", "(-,-)"): 1.0, ("(-,+)", "(+,-)"): -1.0}
        for (right, left), m in pairs.items():
            if tags == sorted([right, left]):
                xl = next(p for p, t in zs if t == left)
                xr = next(p for p, t in zs if t == right)
                if abs(xl.imag) > 1e-12 or abs(xr.imag) > 1e-12:
                    raise UnsupportedConfiguration("boundary zeros must lie on the real axis")
                if not xl.real < xr.real:
                    raise UnsupportedConfiguration(f"{left} must lie to the left of {right}")
                settle = max(abs(xl.real), abs(xr.real)) + 4.5
                return Deformation(tuple(zs), "strip", _alpha_boundary_pair(xl.real, xr.real, m, STRIP_WIDTH),
                                   STRIP_WIDTH, settle)
    raise UnsupportedConfiguration(
        "supported configurations: none; one zero at 0; interior+/interior- pair; "
        "(-,-)/(+,+) or (+,-)/(-,+) pair on the real axis")


def _strip_nodes(zero_x, settle: float, W: float, fine: float, coarse: float = 0.25):
    """Physical s nodes, spacing `fine` within 1.5 of each zero and `coarse` elsewhere."""
    lo, hi = -settle - 1.0, settle + 1.0
    marks = sorted(zero_x)
    pts = [lo]
    x = lo
    while x < hi:
        near = any(abs(x - m) < 1.5 for m in marks) or any(abs(x + coarse - m) < 1.5 for m in marks)
        x = x + (fine if near else coarse)
        pts.append(min(x, hi))
    return np.unique(np.array(pts))


def build_deformation(zeros, sigma: float, grid: int = 96, fine: float | None = None) -> DiscretizedOperator:
    """Discretized dbar + sigma alpha C for the given zero configuration.

    Single zeros use the log-polar disk or half-disk of radius 6; pairs use a
    strip of width 8 with alpha = 1 near both ends.
    """
    dfm = deformation_for(zeros)
    if dfm.geometry in ("disk", "half-disk"):
        tag = dfm.zeros[0][1]
        model = ModelOperator(tag, sigma, 6.0, grid, alpha_override=dfm.alpha)
        op = discretize_model(model, check_grid=False)
        op.meta.update(deformation=dfm)
        return op
    W = dfm.width
    h = fine if fine is not None else min(0.25, 1.0 / (3.0 * np.sqrt(sigma)))
    nt = max(16, int(2 * np.ceil(W / h / 2)))
    xs = _strip_nodes([p.real for p, _ in dfm.zeros], dfm.settle, W, h)
    alpha = dfm.alpha
    end = reference_operator(1, "strip", W * sigma)

    prob = CRProblem(
        1, "strip", lambda s, t: np.zeros((np.size(t), 2, 2)), end, end, (xs[0] / W, xs[-1] / W),
        antilinear=lambda s, t: W * sigma * alpha(W * (s + 1j * np.asarray(t))),
        label=f"deformation(sigma={sigma:g})",
    )
    op = discretize_cr(prob, nt=nt, s_nodes=xs / W)
    op.meta.update(geometry="strip", width=W, deformation=dfm)
    return op


def deformation_index(zeros, sigma: float, grid: int = 96, fine: float | None = None, refine: bool = False):
    """(operator, IndexComputation) for a configuration.

    With ``refine`` the index is recomputed on a finer grid (4/3 the polar
    resolution, or 3/4 the fine spacing on the strip) and must not change.
    """
    op = build_deformation(zeros, sigma, grid=grid, fine=fine)
    comp = fredholm_index(op, refine=False, vectors=True)
    if refine:
        if op.meta["geometry"] == "log-polar":
            op2 = build_deformation(zeros, sigma, grid=int(round(grid * 4 / 3)))
        else:
            h = fine if fine is not None else min(0.25, 1.0 / (3.0 * np.sqrt(sigma)))
            op2 = build_deformation(zeros, sigma, fine=0.75 * h)
        fc = fredholm_index(op2, refine=False)
        comp.refined_index = fc.index
        comp.grids.append({"cells": op2.cells, "nt": op2.nt})
        if fc.index != comp.index:
            raise UnstableIndex(f"index {comp.index} changed to {fc.index} under refinement")
    return op, comp


def kernel_mass_fraction(op: DiscretizedOperator, basis: np.ndarray, sigma: float, radius_factor: float = 4.0):
    """Share of the kernel's l2 mass within radius_factor / sqrt(sigma) of the zeros."""
    if basis is None or basis.shape[1] == 0:
        raise EmptyKernel("configuration has no kernel at this sigma")
    dfm = op.meta["deformation"]
    centers = np.array([p for p, _ in dfm.zeros])
    zx, zy, wx, wy = slice_geometry(op, "nodes")
    rad = radius_factor / np.sqrt(sigma)
    inside_x = np.min(np.abs(zx[..., None] - centers), axis=-1) <= rad
    inside_y = np.min(np.abs(zy[..., None] - centers), axis=-1) <= rad
    total = inside = 0.0
    for j in range(basis.shape[1]):
        ux, uy = _split(op.expand(basis[:, j]), op)
        mx, my = wx * ux * ux, wy * uy * uy
        total += mx.sum() + my.sum()
        inside += mx[inside_x].sum() + my[inside_y].sum()
    return float(inside / total)


def concentration_profile(zeros, sigmas, **kw) -> list:
    """Kernel mass fraction near the zeros for each sigma."""
    out = []
    for sg in sigmas:
        op, comp = deformation_index(zeros, sg, **kw)
        out.append({"sigma": float(sg), "kernel": comp.kernel, "cokernel": comp.cokernel, "index": comp.index,
                    "fraction": kernel_mass_fraction(op, comp.kernel_basis, sg)})
    return out


def global_bochner_terms(alpha, sigma: float, xi: Field2D):
    """(|B xi|^2, sigma^-2 |D xi|^2, sigma^-1 |xi|^2) for B xi = alpha conj(xi)."""
    Z = xi.Z
    B = alpha(Z) * np.conj(xi.values)
    D = xi.dbar() + sigma * B
    return xi.norm2(B), xi.norm2(D) / sigma ** 2, xi.norm2() / sigma


def sup_d_alpha(alpha, x, y) -> float:
    """sup |d alpha| (d = d/dx - i d/dy) on the grid; an upper bound for the global constant."""
    Z = x[None, :] + 1j * y[:, None]
    F = Field2D(x, y, alpha(Z))
    return float(np.max(np.abs(F.d())))


def random_section(rng, W: float, xr: float, bumps: int = 4):
    """Random smooth section on the strip [-xr, xr] x [0, W], real on both edges."""
    a = rng.normal(size=bumps)
    b = rng.normal(size=bumps)
    cen = rng.uniform(-xr + 1, xr - 1, size=bumps) + 1j * rng.uniform(0, W, size=bumps)
    wid = rng.uniform(0.4, 1.5, size=bumps)

    def f(Z):
        out = np.zeros(Z.shape, dtype=complex)
        for aj, bj, cj, wj in zip(a, b, cen, wid):
            g = np.exp(-np.abs(Z - cj) ** 2 / (2 * wj * wj))
            out += aj * g + 1j * bj * g * np.sin(np.pi * Z.imag / W)
        return out

    return f


def calibrate_global_constant(alpha, sigma: float, W: float, xr: float, rng, count: int = 200, n: int = 401):
    """Smallest C with |B xi|^2 <= sigma^-2 |D xi|^2 + C sigma^-1 |xi|^2 over `count` random sections."""
    x = np.linspace(-xr, xr, n)
    y = np.linspace(0, W, max(33, int(n * W / (2 * xr))))
    best = 0.0
    for _ in range(count):
        f = random_section(rng, W, xr)
        F = Field2D(x, y, f(x[None, :] + 1j * y[:, None]))
        b2, d2, v2 = global_bochner_terms(alpha, sigma, F)
        best = max(best, (b2 - d2) / v2)
    return best


# ---------------------------------------------------------------- rescaling


def bump(r):
    """1 on r <= 1/2, 0 on r >= 1, polynomial smoothstep in between."""
    return 1 - _smoothstep((np.asarray(r) - 0.5) / 0.5)


BUMP_SLOPE = 3.0


def _resample(F: Field2D, Zq):
    re = RegularGridInterpolator((F.y, F.x), F.values.real, bounds_error=False, fill_value=0.0)
    im = RegularGridInterpolator((F.y, F.x), F.values.imag, bounds_error=False, fill_value=0.0)
    pts = np.stack([Zq.imag.ravel(), Zq.real.ravel()], axis=1)
    return (re(pts) + 1j * im(pts)).reshape(Zq.shape)


def rescale_in(v: Field2D, sigma: float, zeta: complex, x: np.ndarray, y: np.ndarray) -> Field2D:
    """rho(z - zeta) sigma^(1/2) v(sigma^(1/2) (z - zeta)) on the grid (x, y)."""
    Z = x[None, :] + 1j * y[:, None] - zeta
    vals = bump(np.abs(Z)) * np.sqrt(sigma) * _resample(v, np.sqrt(sigma) * Z)
    return Field2D(x, y, vals)


def rescale_out(u: Field2D, sigma: float, zeta: complex, x: np.ndarray, y: np.ndarray) -> Field2D:
    """sigma^(-1/2) rho(sigma^(-1/2) w) u(zeta + sigma^(-1/2) w) on the grid (x, y)."""
    Wg = x[None, :] + 1j * y[:, None]
    q = Wg / np.sqrt(sigma)
    vals = bump(np.abs(q)) / np.sqrt(sigma) * _resample(u, zeta + q)
    return Field2D(x, y, vals)


def inner(a: Field2D, b: Field2D) -> float:
    """Real L2 inner product of two fields on the same grid."""
    return float(np.sum((np.conj(a.values) * b.values).real) * a.cell_area)


def commutation_defect(v: Field2D, sigma: float, tag, x: np.ndarray, y: np.ndarray):
    """(|D^sigma Phi(v) - sigma^(1/2) Phi(D^1 v)|, c |v| on the annulus sigma^(1/2)/2 <= |w| <= sigma^(1/2)).

    The second number is the bound with c = sup |grad rho| = 3.
    """
    zt = zero_type(tag)
    Dv = Field2D(v.x, v.y, v.dbar() + zt.alpha(v.Z) * np.conj(v.values))
    Phi_v = rescale_in(v, sigma, 0.0, x, y)
    lhs_vals = Phi_v.dbar() + sigma * zt.alpha(Phi_v.Z) * np.conj(Phi_v.values)
    rhs_vals = np.sqrt(sigma) * rescale_in(Dv, sigma, 0.0, x, y).values
    # stay away from the outer grid edge where one-sided differences act
    defect = np.sqrt(Phi_v.norm2(lhs_vals - rhs_vals))
    r = np.abs(v.Z)
    ring = (r >= np.sqrt(sigma) / 2) & (r <= np.sqrt(sigma))
    bound = BUMP_SLOPE * np.sqrt(v.norm2(np.where(ring, v.values, 0)))
    return float(defect), float(bound)
