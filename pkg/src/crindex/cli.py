"""Command line front end: `crindex COMMAND [PROBLEM.json] [flags]`.

Problem files are JSON objects with a "version" (1), one payload among
"asymptotic", "cz", "strip_problem", "deformation", "surface_index", and an
optional "params" block. Unknown fields are rejected. Reports are JSON with
sorted keys, so repeated runs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import nullcontext

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import polar

from . import acceptance
from . import antilinear as al
from .asymptotic_ops import (
    UnitaryPath,
    conjugate_operator,
    extrapolated_eigenvalues,
    identity_path,
    is_nondegenerate,
    make_operator,
    reference_operator,
    relative_residual,
    solve_asymptotic,
    spectrum,
)
from .cz_flow import cz_index, cz_index_direct, interpolation_problem, parity_shift
from .numerics import CRIndexError, Unstable, ValidationError
from .strip_operator import decay_rates, discretize_cr, fredholm_index, glue, solve_translation_invariant
from .surface import SurfaceSpec, TransitionData, assemble_index, named_transition

VERSION = 1
PAYLOADS = ("asymptotic", "cz", "strip_problem", "deformation", "surface_index")
PARAMS = {"nt", "ns", "L", "sigma", "tol", "seed", "refine", "rho", "grid", "k"}
COMMANDS = ("spectrum", "cz", "parity", "index-strip", "glue", "solve", "local-models", "deform",
            "concentrate", "index", "verify")
EXIT_VERIFY_FAILED = 1


# ---------------------------------------------------------------- parsing problem files


def _only(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ValidationError(f"{where} must be an object")
    extra = set(d) - allowed
    if extra:
        raise ValidationError(f"unknown fields in {where}: {sorted(extra)}")


def parse_transition(spec, n: int, domain: str) -> UnitaryPath:
    """A generator name or {"real": samples, "imag": samples} on a uniform grid of [0, 1]."""
    if spec is None or spec == "identity":
        return identity_path(n)
    if isinstance(spec, str):
        return named_transition(spec, n)
    _only(spec, {"real", "imag"}, "transition")
    W = np.asarray(spec["real"], dtype=float) + 1j * np.asarray(spec.get("imag", 0.0), dtype=float)
    if W.ndim != 3 or W.shape[1:] != (n, n) or W.shape[0] < 4:
        raise ValidationError(f"transition samples must have shape (m >= 4, {n}, {n})")
    ts = np.linspace(0.0, 1.0, W.shape[0])
    bc = "periodic" if domain == "circle" else "not-a-knot"
    re = CubicSpline(ts, W.real, axis=0, bc_type=bc)
    im = CubicSpline(ts, W.imag, axis=0, bc_type=bc)

    def f(t):
        raw = re(t) + 1j * im(t)
        return np.stack([polar(m)[0] for m in raw])   # nearest unitary

    return UnitaryPath(n, f, None, "samples")


def parse_operator(spec: dict, where: str = "operator"):
    _only(spec, {"n", "domain", "coeff", "reference", "conjugate_by", "label"}, where)
    n = int(spec.get("n", 1))
    domain = spec.get("domain", "strip")
    if ("coeff" in spec) == ("reference" in spec):
        raise ValidationError(f"{where} needs exactly one of 'coeff' or 'reference'")
    if "reference" in spec:
        ref = spec["reference"] or {}
        _only(ref, {"sigma"}, f"{where}.reference")
        A = reference_operator(n, domain, float(ref.get("sigma", 1.0)))
    else:
        A = make_operator(n, domain, spec["coeff"], label=spec.get("label", ""))
    if "conjugate_by" in spec:
        A = conjugate_operator(A, parse_transition(spec["conjugate_by"], n, domain))
    return A


def parse_zeros(items) -> list:
    out = []
    for k, z in enumerate(items):
        _only(z, {"position", "tag"}, f"zeros[{k}]")
        x, y = z.get("position", [0.0, 0.0])
        out.append((complex(x, y), al.zero_type(z["tag"]).tag))
    return out


def load_problem(path: str | None) -> dict:
    if path is None:
        return {"version": VERSION, "params": {}}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read problem file: {exc}") from None
    _only(data, {"version", "params", *PAYLOADS}, "problem file")
    if data.get("version", VERSION) != VERSION:
        raise ValidationError(f"unsupported version {data.get('version')!r}")
    present = [p for p in PAYLOADS if p in data]
    if len(present) > 1:
        raise ValidationError(f"problem file holds several payloads: {present}")
    params = data.get("params", {}) or {}
    _only(params, PARAMS, "params")
    data["params"] = params
    return data


def _payload(problem: dict, *names):
    for nm in names:
        if nm in problem:
            return nm, problem[nm]
    raise ValidationError(f"this command needs a problem file with one of {list(names)}")


# ---------------------------------------------------------------- commands


def _resolved(problem: dict, args, **defaults) -> dict:
    """Defaults, overridden by the file's params, overridden by flags."""
    out = dict(defaults)
    out.update({k: v for k, v in problem["params"].items() if k in defaults})
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    if "sigma" in out and not isinstance(out["sigma"], (list, tuple)):
        out["sigma"] = [out["sigma"]]
    if "refine" in out:
        out["refine"] = bool(int(out["refine"]))
    return out


def _index_entry(comp) -> dict:
    return {"value": comp.index, "kernel": comp.kernel, "cokernel": comp.cokernel, "gap_ratio": comp.gap_ratio,
            "refined_value": comp.refined_index, "grids": comp.grids}


def cmd_spectrum(problem, args):
    _, spec = _payload(problem, "asymptotic", "cz")
    A = parse_operator(spec["operator"] if "operator" in spec else spec)
    p = _resolved(problem, args, nt=64, k=8, tol=1e-6)
    lam = spectrum(A, p["nt"]).nearest_zero(p["k"])
    lam2 = spectrum(A, 2 * p["nt"]).nearest_zero(p["k"])
    ok, margin = is_nondegenerate(A, p["nt"], p["tol"])
    return p, {"eigenvalues": lam.tolist(), "eigenvalues_refined": lam2.tolist(),
               "extrapolated": extrapolated_eigenvalues(A, p["k"], 2 * p["nt"]).tolist(),
               "nondegenerate": ok, "margin": margin}


def _cz_payload(problem):
    _, spec = _payload(problem, "cz", "asymptotic")
    if "operator" in spec:
        _only(spec, {"operator", "profile", "transition"}, "cz")
        return parse_operator(spec["operator"]), spec.get("profile", "smoothstep"), spec.get("transition")
    return parse_operator(spec), "smoothstep", None


def _cz_report(A, p, profile):
    v1, rec = cz_index(A, nt=p["nt"], ns=p["ns"], profile=profile, verify=False, record=True)
    out = {"value": v1, "spectral_flow": rec.as_dict()}
    if p["refine"]:
        v2 = cz_index(A, nt=2 * p["nt"], ns=2 * p["ns"], profile=profile, verify=False)
        out["refined_value"] = v2
        if v2 != v1:
            raise Unstable(f"index {v1} changed to {v2} under refinement")
    return out


def cmd_cz(problem, args):
    A, profile, _ = _cz_payload(problem)
    p = _resolved(problem, args, nt=64, ns=64, L=8.0, refine=1)
    flow = _cz_report(A, p, profile)
    direct = cz_index_direct(A, L=p["L"], ns=16, nt=p["nt"], profile=profile, refine=p["refine"], detail=True)[1]
    return p, {"flow": flow, "direct": _index_entry(direct), "agree": flow["value"] == direct.index}


def cmd_parity(problem, args):
    A, profile, tr = _cz_payload(problem)
    p = _resolved(problem, args, nt=64, ns=64, refine=1)
    Om = parse_transition(tr, A.n, A.domain)
    before = _cz_report(A, p, profile)
    after = _cz_report(conjugate_operator(A, Om), p, profile)
    shift = parity_shift(Om, A.domain)
    return p, {"cz": before, "cz_conjugated": after, "parity_shift": shift,
               "consistent": (after["value"] - before["value"]) % 2 == shift}


def _strip_ops(problem):
    _, spec = _payload(problem, "strip_problem")
    _only(spec, {"minus", "plus", "middle", "profile"}, "strip_problem")
    ops = {k: parse_operator(spec[k], k) for k in ("minus", "plus", "middle") if k in spec}
    if "minus" not in ops or "plus" not in ops:
        raise ValidationError("strip_problem needs 'minus' and 'plus' operators")
    return ops, spec.get("profile", "smoothstep")


def cmd_index_strip(problem, args):
    ops, profile = _strip_ops(problem)
    p = _resolved(problem, args, nt=64, ns=16, L=8.0, refine=1)
    prob = interpolation_problem(ops["minus"], ops["plus"], p["L"], profile)
    comp = fredholm_index(discretize_cr(prob, p["ns"], p["nt"]), refine=p["refine"])
    cm = cz_index(ops["minus"], nt=p["nt"])
    cp = cz_index(ops["plus"], nt=p["nt"])
    return p, {"index": _index_entry(comp), "cz_minus": cm, "cz_plus": cp,
               "formula": cp - cm, "agree": comp.index == cp - cm}


def cmd_glue(problem, args):
    ops, profile = _strip_ops(problem)
    if "middle" not in ops:
        raise ValidationError("glue needs a 'middle' operator")
    p = _resolved(problem, args, nt=32, ns=8, L=4.0, refine=1, rho=4.0)
    dm = interpolation_problem(ops["minus"], ops["middle"], p["L"], profile)
    dp = interpolation_problem(ops["middle"], ops["plus"], p["L"], profile)
    res = {}
    for name, prob in (("minus", dm), ("plus", dp), ("glued", glue(dm, dp, p["rho"]))):
        res[name] = _index_entry(fredholm_index(discretize_cr(prob, p["ns"], p["nt"]), refine=p["refine"]))
    res["additive"] = res["glued"]["value"] == res["minus"]["value"] + res["plus"]["value"]
    return p, res


def _source(spec, n):
    """eta(t) = c0 + sum cos(2 pi k t) cos_k + sin(2 pi k t) sin_k, complex vectors as [re, im] pairs."""
    spec = spec or {"c0": [[1.0, 0.0]] + [[0.0, 0.0]] * (n - 1)}
    _only(spec, {"c0", "cos", "sin"}, "source")

    def vec(v):
        a = np.asarray(v, dtype=float)
        if a.shape != (n, 2):
            raise ValidationError(f"source coefficients must have shape ({n}, 2)")
        return a[:, 0] + 1j * a[:, 1]

    c0 = vec(spec.get("c0", [[0.0, 0.0]] * n))
    cos = [vec(c) for c in spec.get("cos", [])]
    sin = [vec(c) for c in spec.get("sin", [])]

    def eta(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.broadcast_to(c0, (t.size, n)).astype(complex)
        for k, c in enumerate(cos, start=1):
            out = out + np.cos(2 * np.pi * k * t)[:, None] * c
        for k, c in enumerate(sin, start=1):
            out = out + np.sin(2 * np.pi * k * t)[:, None] * c
        return out

    return eta


def cmd_solve(problem, args):
    _, spec = _payload(problem, "asymptotic")
    spec = dict(spec)
    src = spec.pop("source", None)
    A = parse_operator(spec)
    p = _resolved(problem, args, nt=256, ns=32, L=12.0)
    eta = _source(src, A.n)
    t, xi = solve_asymptotic(A, eta, p["nt"])
    res_t = relative_residual(A, t, xi, eta(t))
    nt_line = min(p["nt"], 64)
    sol = solve_translation_invariant(A, lambda s, tt: np.exp(-s * s) * eta(tt), L=p["L"], ns=p["ns"], nt=nt_line)
    lam = sol.eigenvalues
    w = (0.3 * p["L"], 0.75 * p["L"])
    up, down = decay_rates(sol.s, sol.u, [w, (-w[1], -w[0])])
    return p, {"asymptotic": {"residual": res_t, "t": t[:: max(1, p["nt"] // 32)].tolist(),
                              "abs_xi": np.abs(xi[:: max(1, p["nt"] // 32)]).tolist()},
               "translation_invariant": {"residual": sol.residual, "decay_plus": up, "decay_minus": down,
                                         "largest_negative_eigenvalue": float(lam[lam < 0].max()),
                                         "smallest_positive_eigenvalue": float(lam[lam > 0].min())}}


def cmd_local_models(problem, args):
    p = _resolved(problem, args, sigma=[1.0], grid=96)
    rows = []
    for sg in p["sigma"]:
        for tag in al.TAG_ORDER:
            _, comp = al.model_dims(tag, float(sg), 6.0, int(p["grid"]))
            row = {"sigma": float(sg), "tag": tag, "kernel": comp.kernel, "cokernel": comp.cokernel,
                   "index": comp.index, "gap_ratio": comp.gap_ratio, "count": al.zero_type(tag).count}
            if al.zero_type(tag).count != 0:
                row["gaussian_overlap"] = al.kernel_overlap(tag, float(sg), 6.0, int(p["grid"]))
            rows.append(row)
    return p, {"table": rows, "matches_counts": all(r["index"] == r["count"] for r in rows)}


def _deformation_payload(problem):
    _, spec = _payload(problem, "deformation")
    _only(spec, {"zeros"}, "deformation")
    return parse_zeros(spec.get("zeros", []))


def _deform_rows(zeros, p, concentration):
    expected = sum(al.zero_type(t).count for _, t in zeros)
    rows = []
    for sg in p["sigma"]:
        op, comp = al.deformation_index(zeros, float(sg), refine=p["refine"])
        row = {"sigma": float(sg), **_index_entry(comp), "expected": expected}
        if concentration:
            row["mass_fraction"] = al.kernel_mass_fraction(op, comp.kernel_basis, float(sg))
        rows.append(row)
    return rows


def _write_csv(path, rows, keys):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow([r.get(k) for k in keys])


def cmd_deform(problem, args):
    zeros = _deformation_payload(problem)
    p = _resolved(problem, args, sigma=list(acceptance.SIGMAS), refine=1)
    rows = _deform_rows(zeros, p, False)
    if args.csv:
        _write_csv(args.csv, rows, ["sigma", "value", "kernel", "cokernel", "gap_ratio", "expected"])
    return p, {"sweep": rows, "constant": len({r["value"] for r in rows}) == 1,
               "matches_counts": all(r["value"] == r["expected"] for r in rows)}


def cmd_concentrate(problem, args):
    zeros = _deformation_payload(problem)
    p = _resolved(problem, args, sigma=list(acceptance.SIGMAS), refine=0)
    rows = _deform_rows(zeros, p, True)
    if args.csv:
        _write_csv(args.csv, rows, ["sigma", "mass_fraction", "kernel", "cokernel", "value"])
    fr = [r["mass_fraction"] for r in rows]
    return p, {"profile": rows, "non_decreasing": all(b >= a - 0.02 for a, b in zip(fr, fr[1:]))}


def cmd_index(problem, args):
    _, spec = _payload(problem, "surface_index")
    _only(spec, {"surface", "n", "ends", "transitions", "default_end"}, "surface_index")
    surface = SurfaceSpec.from_dict(spec.get("surface", {}))
    n = int(spec.get("n", 1))
    p = _resolved(problem, args, nt=32, ns=8, L=4.0)
    ends = {}
    for name, sign, kind in surface.ends():
        if name in spec.get("ends", {}):
            ends[name] = parse_operator(spec["ends"][name], f"ends.{name}")
        elif spec.get("default_end", "reference") == "reference":
            ends[name] = reference_operator(n, kind)
        else:
            raise ValidationError(f"no operator for puncture {name}")
    extra = set(spec.get("ends", {})) - set(ends)
    if extra:
        raise ValidationError(f"operators given for unknown punctures {sorted(extra)}")
    kinds = {name: kind for name, _, kind in surface.ends()}
    trans = TransitionData(n, {name: parse_transition(tr, n, kinds.get(name, "strip"))
                               for name, tr in (spec.get("transitions") or {}).items()})
    rep = assemble_index(surface, n, trans, ends, L=p["L"], ns=p["ns"], nt=p["nt"])
    return p, {"surface": surface.as_dict(), **rep.as_dict()}


def cmd_verify(problem, args):
    only = [int(x) for x in args.only.split(",")] if args.only else None
    p = _resolved(problem, args, seed=None)
    results = acceptance.run_all(only, log=lambda s: print(s, file=sys.stderr, flush=True), seed=p["seed"])
    out = {"criteria": [{k: v for k, v in r.as_dict().items() if k != "seconds"} for r in results],
           "passed": sum(r.passed for r in results), "total": len(results)}
    return {"only": only, "seed": p["seed"]}, out


HANDLERS = {
    "spectrum": cmd_spectrum, "cz": cmd_cz, "parity": cmd_parity, "index-strip": cmd_index_strip,
    "glue": cmd_glue, "solve": cmd_solve, "local-models": cmd_local_models, "deform": cmd_deform,
    "concentrate": cmd_concentrate, "index": cmd_index, "verify": cmd_verify,
}


# ---------------------------------------------------------------- entry point


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crindex", description="Fredholm indices of Cauchy-Riemann operators.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("problem", nargs="?", help="JSON problem file")
    ap.add_argument("--out", help="write the report here instead of stdout")
    ap.add_argument("--nt", type=int)
    ap.add_argument("--ns", type=int)
    ap.add_argument("--L", type=float)
    ap.add_argument("--sigma", type=_float_list)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--refine", type=int, choices=(0, 1))
    ap.add_argument("--csv", help="also write the sigma sweep as CSV (deform, concentrate)")
    ap.add_argument("--only", help="comma-separated criterion numbers (verify)")
    return ap


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _thread_limit():
    value = os.environ.get("CRINDEX_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    report = {"command": args.command, "problem_file": args.problem}
    code = 0
    try:
        problem = load_problem(args.problem)
        report["inputs"] = {k: v for k, v in problem.items()}
        with _thread_limit():
            params, results = HANDLERS[args.command](problem, args)
        report["parameters"] = params
        report["results"] = results
        if args.command == "verify" and results["passed"] != results["total"]:
            code = EXIT_VERIFY_FAILED
    except CRIndexError as exc:
        report["error"] = {"type": type(exc).__name__, "message": str(exc)}
        code = exc.exit_code
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
