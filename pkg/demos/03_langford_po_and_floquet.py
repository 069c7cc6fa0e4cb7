"""Periodic-orbit family of the Langford system and its torus bifurcation.

At eps = 0 the system carries a family of circular orbits whose Floquet
multipliers can be continued in rho.  A complex pair crosses the unit
circle near rho = 0.6154: the Neimark-Sacker (TR) point where an invariant
torus is born.  This script finds the orbit by forward simulation, corrects
it by collocation, and walks the family watching the TR test function.
"""

import numpy as np

from torcont import colloc, contin, ivp, odesys, po

vf = odesys.builtin_langford()
p0 = np.array([3.5, 1.5, 0.0])
T = 2 * np.pi / p0[0]

# transient simulation onto the attracting orbit, then one period of samples
res = ivp.integrate(vf, [0.0, 100 * T], np.array([0.3, 0.4, 0.0]), p0)
mesh = colloc.build_mesh(20, 4)
orbit = po.solve_po(vf, po.sample_orbit(vf, res.y[-1], p0, mesh, T), p0)
print(f"corrected orbit: period {orbit.period:.6f}, x(0) = {orbit.traj.x_bp[0]}")

floq = po.floquet(vf, orbit)
print("multipliers at rho = 1.5:", np.round(floq.multipliers, 6))
print("TR test value:", po.tr_test_function(floq))

problem, u0 = po.continuation_problem(vf, orbit, released=["rho"],
                                      bounds={"rho": (0.2, 2.0)})
state = contin.ContinuationState(h=0.05, h_min=1e-4, h_max=0.25, pt_max=40,
                                 bi_direct=True)
branch = contin.run(problem, u0, state, progress=None)

print(f"\n{len(branch.points)} labeled points; termination: {branch.termination}")
for pt in branch.points:
    if pt.ptype != "RO":
        print(f"  label {pt.label:3d} {pt.ptype:>3}  rho = {pt.monitors['rho']:.6f}")

trs = branch.by_type("TR")
if trs:
    tr_orbit = problem.embed(trs[0].u)
    floq_tr = po.floquet(vf, tr_orbit)
    alpha = floq_tr.tr_angle
    print(f"\nTR point: rho = {trs[0].monitors['rho']:.6f}")
    print(f"  multiplier angle alpha = {alpha:.6f}")
    print(f"  torus frequencies at birth: om1 = {alpha / tr_orbit.period:.6f}, "
          f"om2 = {2 * np.pi / tr_orbit.period:.6f}")
    print(f"  rotation number varrho = {alpha / (2 * np.pi):.6f}")
