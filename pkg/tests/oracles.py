"""Slow, loop-based reference implementations used as test oracles."""
import itertools
import math

import numpy as np


def brute_push_valid(b, d, pts, obj_mask, c, k, depth, d_push, l_act, width):
    """Accept/reject of one push by explicit per-pixel enumeration."""
    h, w = obj_mask.shape
    cu, cv = math.floor(c[0] + 0.5), math.floor(c[1] + 0.5)
    if not (0 <= cu < w and 0 <= cv < h and obj_mask[cv, cu]):
        return False
    own = set((int(u), int(v)) for u, v in pts)
    zs = sorted(depth.values[v, u] for u, v in own if depth.valid[v, u])
    n = len(zs)
    z = zs[n // 2] if n % 2 else 0.5 * (zs[n // 2 - 1] + zs[n // 2])
    f = 0.5 * (k.fx + k.fy)
    length, half = d_push * f / z, 0.5 * width * f / z
    for v in range(h):
        for u in range(w):
            if not obj_mask[v, u] or (u, v) in own:
                continue
            du, dv = u - b[0], v - b[1]
            back = -(du * d[0] + dv * d[1])
            across = abs(-du * d[1] + dv * d[0])
            if 0 < back <= length and across <= half:
                return False
    su, sv = math.floor(d[0] * length + 0.5), math.floor(d[1] * length + 0.5)
    hits = 0
    for u, v in own:
        tu, tv = u + su, v + sv
        if 0 <= tu < w and 0 <= tv < h and obj_mask[tv, tu] and (tu, tv) not in own:
            hits += 1
    return hits / len(own) <= l_act


def brute_boundary(pts):
    own = set((int(u), int(v)) for u, v in pts)
    return {p for p in own if any((p[0] + a, p[1] + b) not in own
                                  for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1)))}


def brute_prf(pred, gt, dilation=2):
    """Overlap and boundary P/R/F from per-pixel loops and an exhaustive
    search over all one-to-one assignments (small instance counts only)."""
    h, w = gt.shape
    pids = sorted(set(int(x) for x in pred.ravel()) - {0})
    gids = sorted(set(int(x) for x in gt.ravel()) - {0})

    def count(a, b):
        return sum(1 for v in range(h) for u in range(w) if pred[v, u] == a and gt[v, u] == b)

    size_p = {i: sum(1 for x in pred.ravel() if x == i) for i in pids}
    size_g = {i: sum(1 for x in gt.ravel() if x == i) for i in gids}
    inter = {(a, b): count(a, b) for a in pids for b in gids}
    F = {(a, b): 2 * inter[a, b] / (size_p[a] + size_g[b]) for a in pids for b in gids}
    best, best_pairs = -1.0, []
    small, large = (pids, gids) if len(pids) <= len(gids) else (gids, pids)
    for perm in itertools.permutations(large, len(small)):
        pairs = list(zip(small, perm)) if small is pids else [(p, g) for g, p in zip(small, perm)]
        score = sum(F[p] for p in pairs)
        if score > best + 1e-12:
            best, best_pairs = score, pairs
    pairs = [(a, b) for a, b in best_pairs if inter[a, b] > 0]
    tp = sum(inter[p] for p in pairs)
    n_p, n_g = sum(size_p.values()), sum(size_g.values())
    op = tp / n_p if n_p else 1.0
    orr = tp / n_g if n_g else 1.0

    def bnd(mask, i):
        out = set()
        for v in range(h):
            for u in range(w):
                if mask[v, u] != i:
                    continue
                for a, b in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    qu, qv = min(max(u + a, 0), w - 1), min(max(v + b, 0), h - 1)
                    if mask[qv, qu] != i:
                        out.add((u, v))
                        break
        return out

    pb = {i: bnd(pred, i) for i in pids}
    gb = {i: bnd(gt, i) for i in gids}

    def near(s, t):
        return sum(1 for (u, v) in s if any(max(abs(u - x), abs(v - y)) <= dilation for x, y in t))

    tpp = sum(near(pb[a], gb[b]) for a, b in pairs)
    tpg = sum(near(gb[b], pb[a]) for a, b in pairs)
    nbp, nbg = sum(map(len, pb.values())), sum(map(len, gb.values()))
    bp = tpp / nbp if nbp else 1.0
    br = tpg / nbg if nbg else 1.0

    def f(p, r):
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    rate = (sum(1 for p in pairs if F[p] >= 0.75) / len(gids)) if gids else 1.0
    return (op, orr, f(op, orr)), (bp, br, f(bp, br)), rate


def brute_component(region, seed):
    """4-connected component of ``region`` containing ``seed`` (u, v), by explicit BFS."""
    h, w = region.shape
    out = np.zeros((h, w), bool)
    stack = [seed]
    while stack:
        u, v = stack.pop()
        if not (0 <= u < w and 0 <= v < h) or out[v, u] or not region[v, u]:
            continue
        out[v, u] = True
        stack.extend([(u + 1, v), (u - 1, v), (u, v + 1), (u, v - 1)])
    return out
