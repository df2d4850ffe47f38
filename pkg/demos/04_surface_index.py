"""Index of a Cauchy-Riemann operator on a punctured surface.

The index is n times the Euler term, plus a Maslov term from the
trivialization changes at the ends, plus the Conley-Zehnder indices of the
positive ends minus those of the negative ends. For a strip (a disk with
one positive and one negative boundary puncture) the script checks the
assembled number against a direct computation.
"""

import crindex as cr
from crindex.surface import TransitionData, named_transition, reference_ends

for surface in (cr.SurfaceSpec.disk("+-"), cr.SurfaceSpec(0, (("+", "-", "+"),), 1, 0), cr.SurfaceSpec.closed(2, 3)):
    ends = reference_ends(surface, 1)
    rep = cr.assemble_index(surface, 1, TransitionData(1), ends, numeric=False)
    print(f"{surface.as_dict()}: euler {rep.euler_term}  index {rep.assembled}")

strip = cr.SurfaceSpec.disk("+-")
trans = TransitionData(1, {"b0.0": named_transition("half_rotation_1")})
rep = cr.assemble_index(strip, 1, trans, reference_ends(strip, 1))
print(f"strip with a half rotation at the positive end: assembled {rep.assembled}"
      f"  numerical {rep.numerical}  agree {rep.agreement}")
