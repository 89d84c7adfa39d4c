"""
Distributed leader observer under switching
===========================================

Each follower estimates the leader's (p, v, a) from whatever the current
graph lets it hear. The coupling gain kappa grows while the estimates
disagree and then freezes.
"""

import numpy as np

from platoon_dmpc import markov, observer, riccati, topology
from platoon_dmpc.dynamics import A_CT, LeaderProfile

# The default P satisfies the Riccati inequality; a fresh CARE solve works too.
P = riccati.DEFAULT_P
R = riccati.care_lhs(P, A_CT)
print("eig(PA + A'P - 2P^2) =", np.round(np.linalg.eigvalsh(R), 4))
print("CARE solution with Q = I:\n", np.round(riccati.solve_observer_care(A_CT, np.eye(3)), 4))

design = riccati.ObserverDesign.from_P(P)
leader = LeaderProfile()
modes = topology.standard_topologies(5)

# Start every follower with an O(1) estimation error.
rng = np.random.default_rng(0)
net = observer.ObserverNetwork.start(leader.state(0.0) + rng.normal(size=(5, 3)), design)
chain = markov.start_chain(markov.DEFAULT_MU, 1, seed=0)

print(f"{'t':>5} {'max |theta|':>12}  kappa")
for k in range(200):
    t = 0.1 * k
    path, _ = markov.advance(chain, markov.DEFAULT_MU, t + 0.1)
    graphs = [modes.mode(m) for m in markov.quantize_path(path, t, 0.01, 10)]
    if k % 20 == 0:
        err = np.abs(net.observation_errors(leader.state(t))).max()
        print(f"{t:5.1f} {err:12.3e}  {np.round(net.kappa(leader.state(t), graphs[0]), 3)}")
    net.integrate(t, graphs, 0.01, leader)

print("varrho after 20 s:", np.round(net.varrho, 4))
