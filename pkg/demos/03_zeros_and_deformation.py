"""Zeros of an anti-linear term and where the kernel lives.

Part one tabulates kernel and cokernel of dbar + sigma * alpha * conj for
the six local models alpha = +-z, +-zbar (plane) and the two half-plane
models. Part two deforms a global operator with one interior zero and
follows the index and the kernel's mass near the zero as sigma grows.
Takes about a minute.
"""

import crindex as cr
from crindex.antilinear import kernel_mass_fraction, model_dims

print("local models at sigma = 1")
for tag in cr.TAG_ORDER:
    _, comp = model_dims(tag, 1.0, 6.0, 96)
    print(f"  {tag:10s} kernel {comp.kernel}  cokernel {comp.cokernel}  gap {comp.gap_ratio:.1e}")

zeros = [(0j, "interior+")]
print("disk with one interior+ zero")
for sigma in (1.0, 4.0, 16.0):
    op, comp = cr.deformation_index(zeros, sigma)
    mass = kernel_mass_fraction(op, comp.kernel_basis, sigma)
    print(f"  sigma {sigma:5.1f}  index {comp.index}  mass within 4/sqrt(sigma) of the zero {mass:.6f}")
