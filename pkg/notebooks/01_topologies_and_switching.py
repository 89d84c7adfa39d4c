"""
Communication graphs and Markovian switching
============================================

Four graphs take turns carrying information through a five-vehicle
platoon. A continuous-time Markov chain decides which one is live.
"""

import numpy as np

from platoon_dmpc import markov, topology

# The four modes, in chain order.
modes = topology.standard_topologies(5)
for phi, g in enumerate(modes.graphs, 1):
    print(f"mode {phi}: {g.name}")
    print(topology.information_matrix(g))
    print("reachable from the leader:", sorted(topology.reachable_from_leader(g)))
    print()

# PF-failure on its own strands followers 3..5, but the union of all modes
# still has a spanning tree rooted at the leader.
print("union has a leader spanning tree:", topology.has_leader_spanning_tree(modes.union))

# Invariant law of the generator.
pi = markov.invariant_distribution(markov.DEFAULT_MU)
print("pi =", pi, " |pi mu| =", np.abs(pi @ markov.DEFAULT_MU).max())

# Long-run occupancy approaches pi.
for horizon in (1e2, 1e3, 1e4):
    path, _ = markov.advance(markov.start_chain(markov.DEFAULT_MU, 1, seed=0), markov.DEFAULT_MU, horizon)
    occ = markov.occupancy(path, horizon, 4)
    print(f"T = {horizon:>7g}  occupancy {np.round(occ, 3)}  L1 {np.abs(occ - pi).sum():.4f}")

# What a controller sees: modes held on the 10 ms integration grid.
path, _ = markov.advance(markov.start_chain(markov.DEFAULT_MU, 1, seed=3), markov.DEFAULT_MU, 2.0)
grid = markov.quantize_path(path, 0.0, 0.01, 200)
print("switch events:", [(round(t, 3), m) for t, m in path])
print("first grid steps:", grid[:40])
