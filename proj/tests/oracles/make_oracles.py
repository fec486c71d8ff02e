"""Reference values for the C++ tests, computed with numpy/scipy.

Run once and commit the output; the tests only read tests/data/oracles.json.

    python3 tests/oracles/make_oracles.py
"""

import itertools
import json
import math
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.optimize import linear_sum_assignment, linprog
from scipy.spatial.distance import cdist
from scipy.stats import multivariate_normal

rng = np.random.default_rng(20240611)


def lp_transport(cost, a, b):
    n, m = cost.shape
    a_eq = []
    for i in range(n):
        row = np.zeros(n * m)
        row[i * m:(i + 1) * m] = 1
        a_eq.append(row)
    for j in range(m):
        col = np.zeros(n * m)
        col[j::m] = 1
        a_eq.append(col)
    res = linprog(cost.ravel(), A_eq=np.array(a_eq), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.status == 0
    return float(res.fun)


def brute_force(cost):
    n = cost.shape[0]
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, perm[i]] for i in range(n))
        if total < best:
            best, best_perm = total, perm
    return best, list(best_perm)


out = {}

# Square uniform OT against enumeration.
cases = []
for n in (5, 6):
    for _ in range(5):
        cost = rng.uniform(size=(n, n))
        best, perm = brute_force(cost)
        cases.append({"cost": cost.tolist(), "assignment_cost": best, "permutation": perm,
                      "ot_objective": best / n})
out["assignment"] = cases

# General marginals against an LP solver.
cases = []
for _ in range(30):
    n, m = rng.integers(1, 7, size=2)
    cost = rng.uniform(size=(n, m))
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(m))
    cases.append({"cost": cost.tolist(), "a": a.tolist(), "b": b.tolist(),
                  "objective": lp_transport(cost, a, b)})
out["transport_lp"] = cases

# Identity-optimal costs with non-uniform a = b.
cases = []
for _ in range(10):
    n = int(rng.integers(2, 7))
    cost = rng.uniform(0.5, 1.5, size=(n, n))
    np.fill_diagonal(cost, rng.uniform(0.0, 0.4, size=n))
    assert brute_force(cost)[1] == list(range(n))
    a = rng.dirichlet(np.ones(n)) * 0.9 + 0.1 / n
    cases.append({"cost": cost.tolist(), "a": a.tolist(),
                  "objective": lp_transport(cost, a, a),
                  "diagonal_objective": float(np.dot(a, np.diag(cost)))})
out["identity_plan_lp"] = cases

# Exact W1 between empirical measures.
x = rng.normal(size=(20, 2))
y = rng.normal(size=(20, 2)) + [0.5, 0.0]
d = cdist(x, y)
r, c = linear_sum_assignment(d)
w1 = {"uniform": {"x": x.tolist(), "y": y.tolist(), "value": float(d[r, c].sum() / 20)}}
x = rng.normal(size=(8, 3))
y = rng.normal(size=(5, 3))
wx = rng.dirichlet(np.ones(8))
wy = rng.dirichlet(np.ones(5))
w1["weighted"] = {"x": x.tolist(), "y": y.tolist(), "wx": wx.tolist(), "wy": wy.tolist(),
                  "value": lp_transport(cdist(x, y), wx, wy)}
out["w1"] = w1

# Ward partitions.
cases = []
for spread in (0.6, 1.2):
    centers = np.array([[0.0, 0.0], [3.0, 0.0], [1.5, 2.5]])
    pts = np.concatenate([c + spread * rng.normal(size=(25, 2)) for c in centers])
    pts = pts[rng.permutation(len(pts))]
    for k in (2, 3, 5):
        labels = cut_tree(linkage(pts, method="ward"), n_clusters=k).ravel()
        cases.append({"points": pts.tolist(), "clusters": k, "labels": labels.tolist()})
out["ward"] = cases

# GMM responsibilities and log-likelihood.
means = [np.array([0.0, 0.0]), np.array([2.0, 1.0]), np.array([-1.0, 3.0])]
covs = []
for _ in range(3):
    a = rng.normal(size=(2, 2))
    covs.append(a @ a.T + 0.3 * np.eye(2))
weights = np.array([0.5, 0.3, 0.2])
pts = rng.normal(size=(15, 2)) * 2
dens = np.stack([w * multivariate_normal(m, c).pdf(pts) for w, m, c in zip(weights, means, covs)], 1)
out["gmm"] = {
    "means": [m.tolist() for m in means],
    "covariances": [c.tolist() for c in covs],
    "weights": weights.tolist(),
    "points": pts.tolist(),
    "responsibilities": (dens / dens.sum(1, keepdims=True)).tolist(),
    "mean_log_likelihood": float(np.log(dens.sum(1)).mean()),
}

# Weighted cross-entropy and its logit gradient.
logits = rng.normal(size=(6, 4))
labels = rng.integers(0, 4, size=6)
cw = rng.uniform(0.2, 2.0, size=4)
z = logits - logits.max(1, keepdims=True)
soft = np.exp(z) / np.exp(z).sum(1, keepdims=True)
w = cw[labels]
loss = float(np.mean(w * -np.log(soft[np.arange(6), labels])))
grad = soft.copy()
grad[np.arange(6), labels] -= 1
grad *= (w / 6)[:, None]
out["cross_entropy"] = {"logits": logits.tolist(), "labels": labels.tolist(),
                        "class_weights": cw.tolist(), "loss": loss, "grad": grad.tolist()}

# Two-layer ReLU forward pass.
w0 = rng.normal(size=(5, 3))
b0 = rng.normal(size=5)
w1m = rng.normal(size=(2, 5))
b1 = rng.normal(size=2)
xin = rng.normal(size=(4, 3))
hid = np.maximum(xin @ w0.T + b0, 0)
out["mlp_forward"] = {"w0": w0.tolist(), "b0": b0.tolist(), "w1": w1m.tolist(), "b1": b1.tolist(),
                      "x": xin.tolist(), "y": (hid @ w1m.T + b1).tolist()}

# Weighted-ratio supremum on the same grid definition, written independently.
cases = []
for _ in range(5):
    mus = [rng.normal(size=2) * 3 for _ in range(3)]
    shift = rng.normal(size=2)
    s = float(rng.uniform(0.2, 2.0))
    ps = rng.dirichlet(np.ones(3))
    pt = rng.dirichlet(np.ones(3))
    allm = np.array(mus + [m + shift for m in mus])
    lo = allm.min(0) - 3 * math.sqrt(s)
    hi = allm.max(0) + 3 * math.sqrt(s)
    res = 101
    gx, gy = np.meshgrid(np.linspace(lo[0], hi[0], res), np.linspace(lo[1], hi[1], res))
    grid = np.stack([gx.ravel(), gy.ravel()], 1)
    best = 0.0
    for k in range(3):
        src = multivariate_normal(mus[k], s * np.eye(2)).logpdf(grid)
        tgt = multivariate_normal(mus[k] + shift, s * np.eye(2)).logpdf(grid)
        best = max(best, float(np.exp(np.max(tgt - src) + math.log(pt[k] / ps[k]))))
    cases.append({"means": [m.tolist() for m in mus], "shift": shift.tolist(), "cov_scale": s,
                  "source_proportions": ps.tolist(), "target_proportions": pt.tolist(),
                  "resolution": res, "value": best})
out["weighted_ratio"] = cases

path = Path(__file__).resolve().parent.parent / "data" / "oracles.json"
path.write_text(json.dumps(out, indent=1) + "\n")
print("wrote", path)
