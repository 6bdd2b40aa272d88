"""
Spacetime meshes and finite element spaces
==========================================

Builds the structured spacetime slab, refines it, and shows how
discrete fields interpolate a smooth function.
"""

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from stwave import FESpace, build_structured, interpolate_nodal, refine_uniform
from stwave.analysis import l2_error

# the slab is (0, T) x (0, 1) with time as the FIRST coordinate; the
# observation strip omega must align with the vertical grid lines
mesh = build_structured(10, 13, 2.0, omega=(0.1, 0.3))
print(f"crisscross mesh: {mesh.ntri} triangles, {mesh.nvert} vertices, "
      f"h = {mesh.h:.4f}")
print(f"observation strip covers {mesh.tri_in_omega.sum()} triangles")

# one uniform refinement quarters every triangle and halves h
fine = refine_uniform(mesh)
print(f"after refinement: {fine.ntri} triangles, h = {fine.h:.4f}")

# interpolate a smooth function at increasing polynomial degree; the
# L2 interpolation error drops by roughly h^(p+1)
class Smooth:
    value = staticmethod(lambda t, x: np.sin(np.pi * x) * np.cos(2 * t))
    dt = staticmethod(lambda t, x: -2 * np.sin(np.pi * x) * np.sin(2 * t))
    dx = staticmethod(lambda t, x: np.pi * np.cos(np.pi * x) * np.cos(2 * t))

for degree in (1, 2, 3):
    space = FESpace(mesh, degree)
    u = interpolate_nodal(space, Smooth.value)
    err = l2_error(u, Smooth, relative=False)
    print(f"P{degree}: {space.ndof:5d} dofs, interpolation error {err:.2e}")

# draw the coarse mesh with the observation strip shaded
fig, ax = plt.subplots(figsize=(4, 6))
ax.triplot(mesh.vertices[:, 1], mesh.vertices[:, 0], mesh.triangles,
           lw=0.5, color="gray")
ax.axvspan(0.1, 0.3, color="orange", alpha=0.3, label="omega")
ax.set_xlabel("x")
ax.set_ylabel("t")
ax.legend(loc="upper right")
fig.tight_layout()
fig.savefig("demo_mesh.png", dpi=120)
print("wrote demo_mesh.png")
