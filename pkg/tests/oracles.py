"""Independent brute-force references used by the tests."""

import itertools
import math
from collections import deque


def brute_force_circle(points):
    """Smallest circle by trying every pair diameter and every triple
    circumcircle. O(K^4)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) == 1:
        return pts[0][0], pts[0][1], 0.0
    cands = []
    for a, b in itertools.combinations(pts, 2):
        c = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        cands.append((c[0], c[1], math.dist(a, c)))
    for a, b, c in itertools.combinations(pts, 3):
        ax, ay = a
        bx, by = b
        cx, cy = c
        d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
        if d == 0:
            continue
        ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
              + (cx * cx + cy * cy) * (ay - by)) / d
        uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
              + (cx * cx + cy * cy) * (bx - ax)) / d
        cands.append((ux, uy, max(math.dist(p, (ux, uy)) for p in (a, b, c))))
    cands.sort(key=lambda c: c[2])
    for c in cands:
        if all(math.dist(p, c[:2]) <= c[2] * (1 + 1e-12) + 1e-12 for p in pts):
            return c
    raise AssertionError("no enclosing candidate")


def brute_force_bottleneck(agents, targets):
    """Minimum over all permutations of the largest matched distance."""
    K = len(agents)
    D = [[math.hypot(agents[i][0] - targets[j][0], agents[i][1] - targets[j][1])
          for j in range(K)] for i in range(K)]
    return min(max(D[i][p[i]] for i in range(K)) for p in itertools.permutations(range(K)))


def matched_bottleneck(agents, targets, perm):
    """Largest matched distance of ``perm``, measured like the brute force."""
    return max(math.hypot(agents[i][0] - targets[j][0], agents[i][1] - targets[j][1])
               for i, j in enumerate(perm))


def bfs_connected(adj):
    n = len(adj)
    if n <= 1:
        return True
    seen = {0}
    q = deque([0])
    while q:
        i = q.popleft()
        for j in range(n):
            if adj[i][j] and j not in seen:
                seen.add(j)
                q.append(j)
    return len(seen) == n


def finite_difference(f, arrays, h=1e-5):
    """Central differences of scalar ``f()`` with respect to every entry of
    every array in ``arrays`` (perturbed in place)."""
    import numpy as np
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        if a.size == 0:
            out.append(g)
            continue
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = a[idx]
            a[idx] = old + h
            fp = f()
            a[idx] = old - h
            fm = f()
            a[idx] = old
            g[idx] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def max_rel_error(a_list, b_list, floor=1e-7):
    """Largest |a-b| / max(|a|+|b|, floor) over all entries."""
    import numpy as np
    worst = 0.0
    for a, b in zip(a_list, b_list):
        den = np.maximum(np.abs(a) + np.abs(b), floor)
        worst = max(worst, float((np.abs(a - b) / den).max()) if a.size else 0.0)
    return worst


def norm_rel_error(a_list, b_list, floor=1e-12):
    """Worst per-array ||a-b|| / max(||a||+||b||, floor)."""
    import numpy as np
    worst = 0.0
    for a, b in zip(a_list, b_list):
        den = max(float(np.linalg.norm(a) + np.linalg.norm(b)), floor)
        worst = max(worst, float(np.linalg.norm(a - b)) / den)
    return worst
