"""
Inside one DMPC step
====================

Build the condensed QP for a single follower, solve it, and look at the
assumed trajectory it hands to the next vehicle.
"""

import numpy as np

from platoon_dmpc import dmpc, qp
from platoon_dmpc.checks import brute_force_qp
from platoon_dmpc.dynamics import LeaderProfile, discretize
from platoon_dmpc.riccati import DEFAULT_K

A_d, B_d = discretize(0.1)
ctrl = dmpc.VehicleController(2, dmpc.ControllerParams(), A_d, B_d, DEFAULT_K.copy())
leader = LeaderProfile()

# Vehicle 2 sits 0.5 m behind its slot at t = 10 s; its observer is exact.
t = 10.0
x0 = leader.state(t)
x = x0 - ctrl.offset - np.array([0.5, 0.0, 0.0])
dmpc.init_assumed(ctrl, x, x0)

pred = dmpc.propagate_observation(x0 - np.array([20.0, 0.0, 0.0]), 10, A_d)
built = dmpc.build_problem(ctrl, x, pred, D_pred=0.8, use_string=True)
print(f"{built.qp.n} variables, {len(built.qp.beq)} equalities, {len(built.qp.bin)} string rows")
print("string bound beta * D =", built.bound)

sol = qp.solve(built.qp)
print("status", sol.status, "after", sol.iterations, "iterations; KKT", f"{sol.kkt.max():.1e}")
print("jerk plan:", np.round(sol.z[:10], 3), " slack:", round(sol.z[10], 6))

# The exact dual active-set solver agrees.
status, z, _ = qp.dual_active_set(built.qp)
print("active-set objective gap:", abs(built.qp.objective(z) - sol.objective))

# Small instance against the enumeration oracle.
small = qp.QpProblem(2 * np.eye(2), [-2.0, -6.0], Ain=[[1.0, 1.0]], bin=[2.0], lb=[-1, -1], ub=[1, 3])
print("oracle:", brute_force_qp(small)[0], " solver:", np.round(qp.solve(small).z, 6))

# Apply the first input; the shifted plan plus the terminal law is what
# vehicle 3 will receive.
u0, bundle, diag = dmpc.step_vehicle(ctrl, x, pred, 0.8, True, t=t)
print("applied u0 =", round(u0, 4), " terminal input:", round(bundle.self_assumed.inputs[-1], 4))
print("consistency error:", bundle.self_assumed.consistency_error(A_d, B_d))
