"""Naive reference implementations used only by the tests.

Written for obviousness, not speed: plain loops, the literal definitions,
no shared code with the package.
"""
import itertools
import math
from fractions import Fraction
from statistics import median


def sign(v):
    return (v > 0) - (v < 0)


def mk_s(x):
    n = len(x)
    return sum(sign(x[j] - x[i]) for i in range(n) for j in range(i + 1, n))


def mk_var(x):
    n = len(x)
    groups = {}
    for v in x:
        groups[v] = groups.get(v, 0) + 1
    ties = sum(t * (t - 1) * (2 * t + 5) for t in groups.values())
    return Fraction(n * (n - 1) * (2 * n + 5) - ties, 18)


def sen(x):
    n = len(x)
    return median((x[j] - x[i]) / (j - i) for i in range(n) for j in range(i + 1, n))


def pettitt_u(x):
    n = len(x)
    return [sum(sign(x[i] - x[j]) for i in range(t + 1) for j in range(t + 1, n)) for t in range(n - 1)]


def pettitt_k_tau(x):
    u = pettitt_u(x)
    k = max(abs(v) for v in u)
    return k, [abs(v) for v in u].index(k)


def midranks(values):
    """Average 1-based ranks by counting, O(n^2)."""
    out = []
    for v in values:
        less = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        out.append(Fraction(2 * less + equal + 1, 2))
    return out


def wilcoxon_exact_brute(d):
    """Two-sided exact p: fraction of the 2^n sign flips at least as far from the mean."""
    d = [v for v in d if v != 0]
    n = len(d)
    r = midranks([abs(v) for v in d])
    observed = sum(ri for ri, v in zip(r, d) if v > 0)
    mean = Fraction(n * (n + 1), 4)
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(ri for ri, s in zip(r, signs) if s)
        if abs(w - mean) >= abs(observed - mean):
            hits += 1
    return hits / float(2 ** n)


def auc_pairs(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def auc_trapezoid(scores, labels):
    """Area under the empirical ROC curve, thresholds swept over distinct scores."""
    P = sum(labels)
    N = len(labels) - P
    pts = [(0.0, 0.0)]
    for thr in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= thr and y == 0)
        pts.append((fp / N, tp / P))
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def gini(labels):
    n = len(labels)
    if n == 0:
        return 0.0
    p = sum(labels) / n
    return 1.0 - p * p - (1 - p) * (1 - p)


def exhaustive_best_split(X, y, min_leaf=1):
    """Lowest size-weighted Gini over every feature and every midpoint threshold."""
    n = len(y)
    best = (math.inf, None, None)
    for f in range(len(X[0])):
        vals = sorted(set(row[f] for row in X))
        for a, b in zip(vals, vals[1:]):
            t = (a + b) / 2
            left = [y[i] for i in range(n) if X[i][f] <= t]
            right = [y[i] for i in range(n) if X[i][f] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            w = (len(left) * gini(left) + len(right) * gini(right)) / n
            if w < best[0] - 1e-12:
                best = (w, f, t)
    return best


def mk_direction(x, alpha=0.05):
    """Mann-Kendall direction by the textbook recipe; 'short' below 5 points."""
    n = len(x)
    if n < 5:
        return "none"
    s = mk_s(x)
    var = float(mk_var(x))
    if var <= 0:
        return "none"
    z = (s - sign(s)) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2))
    if p >= alpha:
        return "none"
    return "up" if s > 0 else "down"


def pettitt_homogeneous(x, alpha=0.05):
    n = len(x)
    if n < 5:
        return True, None
    k, tau = pettitt_k_tau(x)
    p = min(1.0, 2 * math.exp(-6 * k * k / (n ** 3 + n ** 2)))
    return p >= alpha, tau


def impact_parameter(x, inc_rank, flat_rank, alpha=0.05):
    """The county branch table written out literally. Returns (rank, score)."""
    while x and x[0] == 0:
        x = x[1:]
    if not x:
        return None, None
    homogeneous, cut = pettitt_homogeneous(x, alpha)
    if homogeneous:
        if mk_direction(x, alpha) == "up":
            return inc_rank, sen(x)
        return None, None
    pre, post = x[:cut], x[cut:]  # the changepoint day opens the second segment
    if mk_direction(pre, alpha) != "up":
        return None, None
    d = mk_direction(post, alpha)
    if d == "up":
        return inc_rank, sen(post)
    if d == "none":
        return flat_rank, sen(pre)
    return 5, -abs(sen(post))


def impact_county(cases, deaths, alpha=0.05):
    ifr = [d / c if c else 0.0 for c, d in zip(cases, deaths)]
    results = [
        ("IFR",) + impact_parameter(list(ifr), 1, 3, alpha),
        ("Deaths",) + impact_parameter([float(v) for v in deaths], 2, 3, alpha),
        ("Cases",) + impact_parameter([float(v) for v in cases], 4, 5, alpha),
    ]
    valid = [r for r in results if r[1] is not None]
    if not valid:
        return None, None, None
    best = min(valid, key=lambda r: r[1])  # min keeps the first of equal ranks: IFR, Deaths, Cases
    return best[1], best[2], best[0]
