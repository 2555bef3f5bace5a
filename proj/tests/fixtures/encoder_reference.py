"""Dense reference for the encoder forward pass.

Builds a four-edge exfiltration window (read_config, summarize, http_post
invokes plus the http_post egress) with closed-form weights, runs a dense-matrix
implementation of the three mean-aggregation layers and the edge head, and
prints the scores tests/unit/test_encoder.cpp pins, first without and then with
the appended feature row.
"""

import numpy as np

D, H = 4, 3
F_ROW = 17
N_NODE_TYPES, N_EDGE_TYPES = 8, 6

# node types: agent=0, mcp_server=1, tool=2, device=3, remote=4
NODE_IDS = [2, 5, 9, 14, 21]
NODE_TYPES = [0, 2, 2, 2, 4]
# (src id, dst id, etype) with invoke=0, net_out=2
EDGES = [(2, 5, 0), (2, 9, 0), (2, 14, 0), (14, 21, 2)]
SCORED = [0, 1, 2, 3]


def param(group, rows, cols):
    i = np.arange(rows * cols, dtype=np.float64)
    return (0.05 + 0.6 * np.sin(1.3 * group + 2.1 * i + 0.4)).reshape(rows, cols)


def feature_row(k):
    return np.array([((k + 1) * (j + 1) % 7) / 7.0 for j in range(F_ROW)])


def scores(F):
    node_emb = param(0, N_NODE_TYPES, D)
    edge_emb = param(1, N_EDGE_TYPES, D)
    layers = [(param(2 + 3 * l, D, D), param(3 + 3 * l, D, D), param(4 + 3 * l, 1, D)[0]) for l in range(3)]
    w1 = param(11, H, 3 * D + F)
    b1 = param(12, 1, H)[0]
    w2 = param(13, 1, H)[0]
    b2 = param(14, 1, 1)[0, 0]

    n = len(NODE_IDS)
    local = {nid: k for k, nid in enumerate(NODE_IDS)}
    adj = np.zeros((n, n))
    for s, t, _ in EDGES:
        adj[local[s], local[t]] += 1
        adj[local[t], local[s]] += 1
    deg = adj.sum(axis=1, keepdims=True)
    mean = np.divide(adj, deg, out=np.zeros_like(adj), where=deg > 0)

    h = node_emb[NODE_TYPES]
    for w_self, w_nbr, b in layers:
        h = np.maximum(0.0, h @ w_self.T + (mean @ h) @ w_nbr.T + b)
    assert not np.allclose(h[1], h[3]), "message passing lost the http_post neighborhood"

    for k, i in enumerate(SCORED):
        s, t, et = EDGES[i]
        x = np.concatenate([h[local[s]], h[local[t]], edge_emb[et], feature_row(k)[:F]])
        z1 = np.maximum(0.0, w1 @ x + b1)
        z2 = w2 @ z1 + b2
        print(f"{1.0 / (1.0 + np.exp(-z2)):.17g}")


if __name__ == "__main__":
    scores(0)
    scores(F_ROW)
