"""Indices add under gluing.

Two interpolation problems sharing a middle end operator are joined along
a neck of length 3 rho. The glued problem has index equal to the sum.
"""

import numpy as np

import crindex as cr
from crindex.cz_flow import interpolation_problem

I2 = np.eye(2)
ends = [cr.make_operator(1, "strip", th * I2, label=f"theta={th}") for th in (0.5, -2.5, 4.0)]

left = interpolation_problem(ends[0], ends[1], L=4)
right = interpolation_problem(ends[1], ends[2], L=4)
glued = cr.glue(left, right, rho=4.0)

for name, prob in (("left", left), ("right", right), ("glued", glued)):
    comp = cr.fredholm_index(cr.discretize_cr(prob, ns=8, nt=32))
    print(f"{name:6s} kernel {comp.kernel}  cokernel {comp.cokernel}  index {comp.index}"
          f"  (refined {comp.refined_index})")
