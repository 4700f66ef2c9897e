"""Spectral stability verification at desk scale.

Runs the full key=value report twice: once on a planted two-block graph that
satisfies both stability conditions, and once on a fixed 10-node two-cluster
instance at q=0.01 where the mean second-eigenvector rotation lands near 0.07.

Usage:
    python3 scripts/spectral_verification.py [--trials 500] [--seed 4]
"""

import argparse
import sys

from gdn.graphs import Graph, synth_cluster_graph
from gdn.spectral import verification_report

TEN_NODE_EDGES = [
    (0, 2), (0, 4), (1, 2), (1, 3), (1, 4), (1, 6), (1, 8), (2, 4),
    (4, 9), (5, 6), (5, 8), (5, 9), (6, 7), (6, 8), (7, 8), (7, 9),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--q-planted", type=float, default=0.004)
    ap.add_argument("--epsilon", type=float, default=2.0)
    args = ap.parse_args()

    planted, _ = synth_cluster_graph(60, 2, 0.475, 23.8, seed=1000)
    print("# planted two-block graph (n=60)")
    print(verification_report(planted, args.q_planted, args.epsilon, args.trials, args.seed))

    ten = Graph.from_edges(10, TEN_NODE_EDGES)
    print("# 10-node two-cluster instance, q=0.01")
    print(verification_report(ten, 0.01, args.epsilon, args.trials, args.seed))
    return 0


if __name__ == "__main__":
    sys.exit(main())
