"""Dictionary families with built-in overlap structure, and their
support-dependency graphs.

A generic dictionary admits no nonzero model signals at all; the families
below are built so that consecutive patches can agree.  The dependency graph
makes that structure explicit, walks in it are candidate support sequences,
and sampling from a walk's kernel generates model signals.
"""

import numpy as np

from patchsparse import (build_graph, compute_transfers, enumerate_paths,
                         heaviside, is_realizable, multi_signature,
                         realize_graph, sample_signal, signature)
from patchsparse.dictionaries import random_signature_spec
from patchsparse.graphmodel import DependencyGraph

rng = np.random.default_rng(1)

# --- a generic dictionary has an (almost surely) empty model
from patchsparse.core import Dictionary
G0 = build_graph(Dictionary(rng.standard_normal((5, 7))), 2)
print(f"random gaussian dictionary: {len(G0.nonempty_edges)} compatible "
      "support pairs (good dictionaries have measure zero)")

# --- cyclic windows of one base signal: a single directed cycle
base = rng.standard_normal(10)
D = signature(base, 6)
G = build_graph(D, 1)
print(f"\nsignature dictionary (n=6, m=10): {len(G.nonempty_nodes)} supports, "
      f"edges {sorted(G.nonempty_edges)[:3]} ... (one cycle)")
enum = enumerate_paths(G, 30)
print(f"closed walks of length 30: {len(enum)} (one per starting shift)")
S = enum.paths[0]
ok, dim = is_realizable(S, D, 30)
x, gamma = sample_signal(S, D, 30, rng)
print(f"first walk realizable: {ok}, kernel dimension {dim}; sampled signal "
      f"has per-patch sparsity {gamma.l0inf(tol=1e-12)}")

# --- several mixed base signals: tuples of atoms, kernel dimension k*s
spec = random_signature_spec(10, 12, 2, rng)
Dm = multi_signature(spec)
sups = [tuple(range((i % 6) * 2, (i % 6) * 2 + 2)) for i in range(24)]
from patchsparse.core import SupportSequence
ok, dim = is_realizable(SupportSequence(tuple(sups), 12), Dm, 24)
print(f"\nmulti-signature (n=10, m=12, tuples of 2): single-shift path "
      f"realizable: {ok}, kernel dimension {dim}")

# --- abstract graph -> dictionary: prescribe a cycle with unit transfers
m = 7
nodes = tuple(sorted([()] + [(i,) for i in range(m)]))
edges = frozenset({((), ())} | {((i,), ((i + 1) % m,)) for i in range(m)})
transfer = {((i,), ((i + 1) % m,)): np.array([[1.0]]) for i in range(m)}
abstract = DependencyGraph(nodes=nodes, edges=edges, source=(5, m, 1),
                           transfer=transfer)
Dr = realize_graph(abstract, 5, rng=rng)
back = build_graph(Dr, 1)
print(f"\nrealized a 7-cycle as a 5x7 dictionary; rebuilt graph contains the "
      f"cycle: {set(edges) - {((), ())} <= set(back.nonempty_edges)}")

# --- the step dictionary generates piecewise-constant signals
Dh = heaviside(4)
Gh = build_graph(Dh, 2)
print(f"\nstep dictionary (n=4): {len(Gh.nonempty_nodes)} supports, "
      f"{len(Gh.nonempty_edges)} compatible pairs (jumps slide through patches)")
