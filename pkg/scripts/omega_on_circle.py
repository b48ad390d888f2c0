"""Omega bound on S^1 x_cone half-line.

The weakened lower bound d_X + R d_P <= d_cone fails for antipodal points on
S^1 (going through the cone tip costs about 2R, less than R*pi), so the
product bound can fail for a phi whose oscillation exceeds twice its
Lipschitz constant.  Trigonometric phi stay inside it.
"""
import math

import numpy as np

from corona_lab.cone import build_cone, verify_lower_bound
from corona_lab.functions import constant, cos_log
from corona_lab.spaces import build_halfline, build_sphere_graph
from corona_lab.tensor import verify_omega_bound

S = build_sphere_graph(2, math.pi / 16)
X = build_halfline(64)
cone = build_cone(S, X)
lb = verify_lower_bound(cone, 8.0)
print(f"weakened lower bound at R=8: worst margin {lb.worst_margin:.3f} (tol {lb.tol:.3f})")

th = np.arctan2(S.positions[:, 1], S.positions[:, 0])
for pname, psi in [("constant", constant(X)), ("cos_log", cos_log(X))]:
    for name, phi in [("cos", np.cos(th)), ("dist_to_0", S.dist[0])]:
        rep = verify_omega_bound(phi, psi, cone, [1, 2, 4, 8, 16, 32])
        worst = max(r["measured"] / r["bound"] for r in rep.rows)
        print(f"psi={pname:9s} phi={name:10s} C_phi={rep.C_phi:.3f} osc={np.ptp(phi):.3f} "
              f"worst measured/bound={worst:.3f} passed={rep.passed}")
