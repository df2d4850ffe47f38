"""Conley-Zehnder indices of asymptotic operators.

Two independent routes:

* spectral flow of A(s) = (1 - b(s)) A_ref + b(s) A, with eigenvalue branches
  followed through eigenvector overlaps;
* the Fredholm index of d/ds - A(s) on a truncated strip or cylinder with
  spectral end conditions.

The reference operator is -i d/dt - C, whose index is 0 by definition. The
Fredholm index counts eigenvalues leaving the positive half-line, so it is
minus the usual (negative-to-positive) spectral flow; CZ_SIGN records this.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .asymptotic_ops import (
    AsymptoticOperator,
    UnitaryPath,
    check_unitary_path,
    discretize_asymptotic,
    is_nondegenerate,
    reference_operator,
)
from .numerics import CRIndexError, DegenerateInput, Unstable, ValidationError
from .strip_operator import CRProblem, discretize_cr, fredholm_index

CZ_SIGN = -1


class EndpointDegenerate(DegenerateInput):
    pass


class UnresolvedCrossing(CRIndexError):
    exit_code = 3


def smoothstep(s):
    x = np.clip(s, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def smootherstep(s):
    x = np.clip(s, 0.0, 1.0)
    return x ** 3 * (x * (6 * x - 15) + 10)


PROFILES: dict[str, Callable] = {"smoothstep": smoothstep, "smootherstep": smootherstep}


def get_profile(profile) -> Callable:
    if callable(profile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError:
        raise ValidationError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}") from None


@dataclass(frozen=True, eq=False)
class OperatorPath:
    """s -> (1 - b(s)) A_from + b(s) A_to, sampled at ns + 1 points of [-0.5, 1.5]."""

    A_from: AsymptoticOperator
    A_to: AsymptoticOperator
    profile: Callable = smoothstep
    ns: int = 64

    def __post_init__(self):
        if self.A_from.n != self.A_to.n or self.A_from.domain != self.A_to.domain:
            raise ValidationError("path endpoints must share rank and domain")
        b = self.profile(np.array([-0.5, 0.0, 1.0, 1.5]))
        if abs(b[1]) > 1e-12 or abs(b[2] - 1) > 1e-12 or abs(b[0]) > 1e-12 or abs(b[3] - 1) > 1e-12:
            raise ValidationError("profile must be 0 for s <= 0 and 1 for s >= 1")
        grid = np.linspace(0.0, 1.0, 201)
        if np.any(np.diff(self.profile(grid)) < -1e-14):
            raise ValidationError("profile must be non-decreasing")

    @property
    def samples(self) -> np.ndarray:
        return np.linspace(-0.5, 1.5, self.ns + 1)


@dataclass
class FlowRecord:
    crossings: list = field(default_factory=list)
    net: int = 0
    min_abs_eigenvalue: float = float("inf")
    decisions: list = field(default_factory=list)
    ns: int = 0
    nt: int = 0

    def as_dict(self) -> dict:
        return {"net": self.net, "crossings": self.crossings, "min_abs_eigenvalue": self.min_abs_eigenvalue,
                "decisions": self.decisions, "ns": self.ns, "nt": self.nt}


class _Tracker:
    def __init__(self, path: OperatorPath, nt: int, tol: float):
        self.Mf = discretize_asymptotic(path.A_from, nt)
        self.Mt = discretize_asymptotic(path.A_to, nt)
        self.beta = path.profile
        self.tol = tol
        self.record = FlowRecord(ns=path.ns, nt=nt)

    def eig(self, s):
        b = float(self.beta(np.array([s]))[0])
        w, V = np.linalg.eigh((1 - b) * self.Mf + b * self.Mt)
        return w, V

    def sample(self, s, h):
        w, V = self.eig(s)
        if np.min(np.abs(w)) < self.tol:
            s2 = s + 0.25 * h
            self.record.decisions.append(f"eigenvalue within {self.tol:g} of 0 at s={s:.6g}; moved to {s2:.6g}")
            s, (w, V) = s2, self.eig(s2)
        self.record.min_abs_eigenvalue = min(self.record.min_abs_eigenvalue, float(np.min(np.abs(w))))
        return s, w, V

    def step(self, a, b, state_a, state_b, depth=0):
        """Crossings between two samples, bisecting when the matching is doubtful."""
        (sa, wa, Va, br_a), (sb, wb, Vb) = state_a, state_b
        overlap = np.abs(Va.T @ Vb)
        rows, cols = linear_sum_assignment(-overlap)
        perm = np.empty_like(cols)
        perm[rows] = cols
        new_w = wb[perm]
        flips = np.nonzero(np.sign(wa) != np.sign(new_w))[0]
        doubtful = [i for i in flips if overlap[i, perm[i]] < 0.9]
        if doubtful and len(flips) > 1:
            if depth >= 2:
                raise UnresolvedCrossing(f"several crossings between s={sa:.6g} and s={sb:.6g}")
            mid = 0.5 * (sa + sb)
            sm, wm, Vm = self.sample(mid, 0.5 * (sb - sa))
            left, br_m = self.step(a, mid, state_a, (sm, wm, Vm), depth + 1)
            right, br_b = self.step(mid, b, (sm, wm, Vm, br_m), state_b, depth + 1)
            return left + right, br_b
        crossings = []
        for i in flips:
            direction = int((np.sign(new_w[i]) - np.sign(wa[i])) / 2)
            frac = wa[i] / (wa[i] - new_w[i])
            crossings.append({"s": float(sa + frac * (sb - sa)), "direction": direction, "branch": int(br_a[i])})
        br_b = np.empty_like(br_a)
        br_b[perm] = br_a
        return crossings, br_b


def spectral_flow(path: OperatorPath, nt: int = 64, tol: float = 1e-9) -> FlowRecord:
    """Signed count of eigenvalue crossings (negative to positive counts +1)."""
    tr = _Tracker(path, nt, tol)
    # discrete eigenvalues carry an O(h^2) error, so decide on the extrapolated margin
    for A, name in ((path.A_from, "start"), (path.A_to, "end")):
        if not is_nondegenerate(A, nt)[0]:
            raise EndpointDegenerate(f"{name} operator of the path is degenerate")
    s_pts = path.samples
    h = s_pts[1] - s_pts[0]
    s0, w0, V0 = tr.sample(s_pts[0], h)
    state = (s0, w0, V0, np.arange(w0.size))
    for s in s_pts[1:]:
        sb, wb, Vb = tr.sample(s, h)
        crossings, br = tr.step(state[0], sb, state, (sb, wb, Vb))
        tr.record.crossings.extend(crossings)
        state = (sb, wb, Vb, br)
    tr.record.net = int(sum(c["direction"] for c in tr.record.crossings))
    # the net flow must equal the change in the number of positive eigenvalues
    pos = lambda M: int(np.sum(np.linalg.eigvalsh(M) > 0))
    if tr.record.net != pos(tr.Mt) - pos(tr.Mf):
        raise UnresolvedCrossing("net crossing count disagrees with the eigenvalue count")
    return tr.record


def cz_index(A: AsymptoticOperator, nt: int = 64, ns: int = 64, profile="smoothstep", verify: bool = True,
             record: bool = False):
    """Conley-Zehnder index by spectral flow from the reference operator.

    With ``verify`` the flow is recomputed with nt and ns doubled and the two
    integers must agree.
    """
    ref = reference_operator(A.n, A.domain, 1.0)
    path = OperatorPath(ref, A, get_profile(profile), ns)
    rec = spectral_flow(path, nt)
    value = CZ_SIGN * rec.net
    if verify:
        fine = spectral_flow(OperatorPath(ref, A, get_profile(profile), 2 * ns), 2 * nt)
        if CZ_SIGN * fine.net != value:
            raise Unstable(f"index {value} changed to {CZ_SIGN * fine.net} under refinement")
    return (value, rec) if record else value


def interpolation_problem(A_from: AsymptoticOperator, A_to: AsymptoticOperator, L: float = 4.0,
                          profile="smoothstep") -> CRProblem:
    """d/ds - A(s) on [-L, L + 1] with A(s) running from A_from to A_to over [0, 1]."""
    if A_from.n != A_to.n or A_from.domain != A_to.domain:
        raise ValidationError("endpoints must share rank and domain")
    beta = get_profile(profile)

    def coeff(s, t):
        b = float(beta(np.array([s]))[0])
        if b == 0.0:
            return A_from.coeff(t)
        if b == 1.0:
            return A_to.coeff(t)
        return (1 - b) * A_from.coeff(t) + b * A_to.coeff(t)

    domain = "strip" if A_from.domain == "strip" else "cylinder"
    return CRProblem(A_from.n, domain, coeff, A_from, A_to, (-L, L + 1.0),
                     label=f"interpolation({A_from.label or 'A'} -> {A_to.label or 'B'})")


def cz_problem(A: AsymptoticOperator, L: float = 4.0, profile="smoothstep") -> CRProblem:
    """Interpolation from the reference operator to A."""
    return interpolation_problem(reference_operator(A.n, A.domain), A, L, profile)


def zc_problem(A: AsymptoticOperator, L: float = 4.0, profile="smoothstep") -> CRProblem:
    """Interpolation from A back to the reference operator."""
    return interpolation_problem(A, reference_operator(A.n, A.domain), L, profile)


def cz_index_direct(A: AsymptoticOperator, L: float = 4.0, ns: int = 8, nt: int = 32, profile="smoothstep",
                    refine: bool = True, detail: bool = False):
    """Conley-Zehnder index as the Fredholm index of the interpolating operator."""
    if L < 4:
        raise ValidationError("truncation L must be at least 4")
    comp = fredholm_index(discretize_cr(cz_problem(A, L, profile), ns, nt), refine=refine)
    return (comp.index, comp) if detail else comp.index


def parity_shift(Omega: UnitaryPath, domain: str) -> int:
    """0 when det Omega(0) det Omega(1) = +1 (strip) and always 0 on the circle; else 1."""
    check_unitary_path(Omega, domain)
    if domain == "circle":
        return 0
    d = np.linalg.det(Omega(np.array([0.0, 1.0])))
    sign = np.sign((d[0] * d[1]).real)
    return 0 if sign > 0 else 1
