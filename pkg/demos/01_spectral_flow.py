"""Conley-Zehnder index of a loop of symmetric matrices, computed two ways.

The index is first read off from the spectral flow of the path that starts
at the reference operator, then recomputed as the Fredholm index of
d/ds - A(s) on a long strip. Conjugating by a loop of unitaries shifts the
index by an even number; the script shows the shift.
"""

import numpy as np

import crindex as cr
from crindex.surface import named_transition

S = {"c0": np.diag([0.3, 0.3, -0.2, -0.2]),
     "cos": [np.array([[0.4, 0.1, 0.0, 0.0],
                       [0.1, 0.0, 0.0, 0.2],
                       [0.0, 0.0, 0.1, 0.0],
                       [0.0, 0.2, 0.0, -0.3]])]}
A = cr.make_operator(2, "circle", S, label="demo")

lam = cr.spectrum(A, 64).nearest_zero(6)
print("eigenvalues nearest zero:", np.round(lam, 4))
ok, margin = cr.is_nondegenerate(A, 64)
print(f"nondegenerate: {ok} (margin {margin:.3f})")

flow = cr.cz_index(A, nt=32, ns=32)
direct = cr.cz_index_direct(A, L=4, ns=8, nt=32)
print(f"CZ by spectral flow: {flow}   by Fredholm index: {direct}")

loop = named_transition("full_loop_1", 2)
B = cr.conjugate_operator(A, loop)
print(f"after conjugating by a full loop: {cr.cz_index(B, nt=32, ns=32)}"
      f"  (parity shift {cr.parity_shift(loop, 'circle')})")
