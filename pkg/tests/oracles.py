"""Independent brute-force oracles for the metric suite.

Everything here is written from the metric definitions with plain loops (or
an independent convex solver for the transport LP), deliberately sharing no
code with the package implementations.
"""

import math

import numpy as np

EPS = np.finfo(np.float64).eps


def oracle_mae(pred, gt):
    total = 0.0
    h, w = np.asarray(pred).shape
    for i in range(h):
        for j in range(w):
            total += abs(float(pred[i][j]) - float(gt[i][j]))
    return total / (h * w)


def oracle_r_mae(pred, gt):
    total = 0
    h, w = np.asarray(pred).shape
    for i in range(h):
        for j in range(w):
            total += abs(int(pred[i][j]) - int(gt[i][j]))
    return total / (h * w)


def _thresholds():
    return [k / 256.0 for k in range(1, 256)]


def oracle_mean_f(pred, gt, beta_sq=0.3):
    pred = np.asarray(pred, dtype=float)
    gt_fg = np.asarray(gt, dtype=float) > 0.5
    h, w = pred.shape
    n_fg = int(gt_fg.sum())
    scores = []
    for t in _thresholds():
        tp = fp = 0
        for i in range(h):
            for j in range(w):
                if pred[i, j] >= t:
                    if gt_fg[i, j]:
                        tp += 1
                    else:
                        fp += 1
        if tp == 0 or n_fg == 0 or (tp + fp) == 0:
            scores.append(0.0)
            continue
        p = tp / (tp + fp)
        r = tp / n_fg
        scores.append((1 + beta_sq) * p * r / (beta_sq * p + r))
    return sum(scores) / len(scores)


def oracle_mean_e(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt_fg = np.asarray(gt, dtype=float) > 0.5
    h, w = pred.shape
    n = h * w
    scores = []
    for t in _thresholds():
        fm = pred >= t
        if not gt_fg.any():
            enhanced = [[1.0 - float(fm[i, j]) for j in range(w)] for i in range(h)]
        elif gt_fg.all():
            enhanced = [[float(fm[i, j]) for j in range(w)] for i in range(h)]
        else:
            mu_fm = float(fm.sum()) / n
            mu_gt = float(gt_fg.sum()) / n
            enhanced = []
            for i in range(h):
                row = []
                for j in range(w):
                    dfm = float(fm[i, j]) - mu_fm
                    dgt = float(gt_fg[i, j]) - mu_gt
                    align = 2.0 * dgt * dfm / (dgt * dgt + dfm * dfm + EPS)
                    row.append((align + 1.0) ** 2 / 4.0)
                enhanced.append(row)
        scores.append(sum(sum(r) for r in enhanced) / n)
    return sum(scores) / len(scores)


def _mean(vals):
    return sum(vals) / len(vals) if vals else 0.0


def _sample_std(vals):
    if len(vals) <= 1:
        return 0.0
    m = _mean(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def oracle_object_similarity(pred, gt):
    pred = np.asarray(pred, dtype=float)
    fg = np.asarray(gt, dtype=float) > 0.5
    h, w = pred.shape

    def obj(values):
        if not values:
            return 0.0
        x = _mean(values)
        return 2.0 * x / (x * x + 1.0 + _sample_std(values) + EPS)

    fg_vals = [pred[i, j] for i in range(h) for j in range(w) if fg[i, j]]
    bg_vals = [1.0 - pred[i, j] for i in range(h) for j in range(w) if not fg[i, j]]
    u = len(fg_vals) / (h * w)
    return u * obj(fg_vals) + (1 - u) * obj(bg_vals)


def _block_ssim(p_vals, g_vals):
    n = len(p_vals)
    if n == 0:
        return 0.0
    x, y = _mean(p_vals), _mean(g_vals)
    if n > 1:
        sx = sum((v - x) ** 2 for v in p_vals) / (n - 1)
        sy = sum((v - y) ** 2 for v in g_vals) / (n - 1)
        sxy = sum((p - x) * (g - y) for p, g in zip(p_vals, g_vals)) / (n - 1)
    else:
        sx = sy = sxy = 0.0
    alpha = 4.0 * x * y * sxy
    beta = (x * x + y * y) * (sx + sy)
    if alpha != 0.0:
        q = alpha / (beta + EPS)
    elif beta == 0.0:
        q = 1.0
    else:
        q = 0.0
    return max(0.0, q)


def oracle_region_similarity(pred, gt):
    pred = np.asarray(pred, dtype=float)
    fg = np.asarray(gt, dtype=float) > 0.5
    h, w = pred.shape
    coords = [(i, j) for i in range(h) for j in range(w) if fg[i, j]]
    if not coords:
        cy, cx = h // 2, w // 2
    else:
        cy = min(int(round(_mean([i for i, _ in coords]))) + 1, h)
        cx = min(int(round(_mean([j for _, j in coords]))) + 1, w)
    score = 0.0
    for rows, cols in [
        (range(0, cy), range(0, cx)),
        (range(0, cy), range(cx, w)),
        (range(cy, h), range(0, cx)),
        (range(cy, h), range(cx, w)),
    ]:
        p_vals = [pred[i, j] for i in rows for j in cols]
        g_vals = [float(fg[i, j]) for i in rows for j in cols]
        score += (len(p_vals) / (h * w)) * _block_ssim(p_vals, g_vals)
    return score


def oracle_s_measure(pred, gt, alpha=0.5):
    gt = np.asarray(gt, dtype=float)
    pred = np.asarray(pred, dtype=float)
    y = float(gt.mean())
    if y == 0.0:
        return 1.0 - float(pred.mean())
    if y == 1.0:
        return float(pred.mean())
    return alpha * oracle_object_similarity(pred, gt) + \
        (1 - alpha) * oracle_region_similarity(pred, gt)


# ----------------------------------------------------------------------
# fixation metrics
# ----------------------------------------------------------------------

def _normalized(a):
    a = np.asarray(a, dtype=float)
    s = float(a.sum())
    if s > 0:
        return a / s
    return np.full(a.shape, 1.0 / a.size)


def oracle_sim(pred, gt):
    p, q = _normalized(pred), _normalized(gt)
    h, w = p.shape
    return sum(min(p[i, j], q[i, j]) for i in range(h) for j in range(w))


def oracle_cc(pred, gt):
    p, q = _normalized(pred), _normalized(gt)
    pv = [float(v) for v in p.ravel()]
    qv = [float(v) for v in q.ravel()]
    mp, mq = _mean(pv), _mean(qv)
    num = sum((a - mp) * (b - mq) for a, b in zip(pv, qv))
    dp = math.sqrt(sum((a - mp) ** 2 for a in pv))
    dq = math.sqrt(sum((b - mq) ** 2 for b in qv))
    if dp == 0 or dq == 0:
        return 0.0
    return num / (dp * dq)


def oracle_kld(pred, gt, eps=1e-12):
    p, q = _normalized(pred), _normalized(gt)
    h, w = p.shape
    return sum(q[i, j] * math.log((q[i, j] + eps) / (p[i, j] + eps))
               for i in range(h) for j in range(w))


def oracle_emd(pred, gt):
    """Transport LP via cvxpy with an independent solver."""
    import cvxpy as cp

    p, q = _normalized(pred), _normalized(gt)
    ar, ac = np.nonzero(p)
    br, bc = np.nonzero(q)
    a = p[ar, ac]
    b = q[br, bc]
    na, nb = len(a), len(b)
    dist = np.zeros((na, nb))
    for i in range(na):
        for j in range(nb):
            dist[i, j] = math.hypot(float(ar[i]) - float(br[j]),
                                    float(ac[i]) - float(bc[j]))
    flow = cp.Variable((na, nb), nonneg=True)
    constraints = [cp.sum(flow, axis=1) == a, cp.sum(flow, axis=0) == b]
    problem = cp.Problem(cp.Minimize(cp.sum(cp.multiply(dist, flow))), constraints)
    for solver in ("GLPK", "CLARABEL", "SCS"):
        try:
            problem.solve(solver=solver)
        except Exception:
            continue
        if problem.status in ("optimal", "optimal_inaccurate"):
            return float(problem.value)
    raise RuntimeError(f"oracle transport LP failed: {problem.status}")


def oracle_nss(pred, points):
    pred = np.asarray(pred, dtype=float)
    vals = [float(v) for v in pred.ravel()]
    m = _mean(vals)
    var = _mean([(v - m) ** 2 for v in vals])
    if var == 0:
        return 0.0
    std = math.sqrt(var)
    return _mean([(pred[y, x] - m) / std for x, y in np.asarray(points)])


def oracle_pair_auc(pos, neg):
    """Mann-Whitney by counting every (positive, negative) pair."""
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def oracle_auc_judd(pred, points):
    pred = np.asarray(pred, dtype=float)
    fix = np.zeros(pred.shape, dtype=bool)
    for x, y in np.asarray(points):
        fix[y, x] = True
    pos = [float(pred[i, j]) for i in range(pred.shape[0])
           for j in range(pred.shape[1]) if fix[i, j]]
    neg = [float(pred[i, j]) for i in range(pred.shape[0])
           for j in range(pred.shape[1]) if not fix[i, j]]
    return oracle_pair_auc(pos, neg)


def oracle_auc_borji(pred, points):
    pred = np.asarray(pred, dtype=float)
    pos = [float(pred[y, x]) for x, y in np.asarray(points)]
    neg = [float(v) for v in pred.ravel()]
    return oracle_pair_auc(pos, neg)


def oracle_shuffled_auc(pred, points, pool, n_shuffles=100, seed=0):
    """Re-derives the documented sampling contract, scores rounds by pair
    counting."""
    pred = np.asarray(pred, dtype=float)
    points = np.asarray(points)
    pool = np.asarray(pool)
    pos = [float(pred[y, x]) for x, y in points]
    n_neg = min(len(pos), len(pool))
    rng = np.random.default_rng(seed)
    rounds = []
    for _ in range(n_shuffles):
        idx = rng.choice(len(pool), size=n_neg, replace=False)
        neg = [float(pred[pool[i][1], pool[i][0]]) for i in idx]
        rounds.append(oracle_pair_auc(pos, neg))
    return _mean(rounds)
