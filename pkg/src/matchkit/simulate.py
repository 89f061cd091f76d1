"""Monte-Carlo engine for the discrete-time matching chain.

Each trajectory runs in a numba kernel that keeps one ring buffer of arrival
times per class, so the word state (needed by FCFM and LCFM) is available to
every policy. Trajectory ``t`` draws arrivals from
``SeedSequence([seed, t, 0])`` and policy decisions from
``SeedSequence([seed, t, 1])``; decision draws are consumed one per random
choice, so results do not depend on chunk size or thread count.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np

from .errors import ValidationError
from .measures import Measure
from .policies import (FCFM, LCFM, MAX_WEIGHT, PRIORITY, RANDOM, CompiledPolicy,
                       PolicySpec, compile_policy)
from .structures import MatchingStructure, named

MAX_HIST = 1 << 22

# layout of the per-trajectory integer accumulator
(A_N, A_ZERO, A_ZERO3, A_COUNT3, A_SUMTOT, A_MAXTOT, A_SN, A_SNN, A_SY, A_SNY,
 A_LASTZ, A_RETSUM, A_RETCNT, A_DIVERGED, A_DRAW, A_RESETS, A_REC, A_ARRIVED) = range(18)
N_ACC = 18


@dataclass
class SimConfig:
    """Run parameters.

    ``record_empirical_up_to`` is the longest word kept in the empirical
    histogram (-1 disables it). ``reset_every`` > 0 restarts the chain from
    ``x0`` every that many steps and accumulates the increments, which gives
    Monte-Carlo drift estimates of the skeleton chain.
    """

    steps: int
    trajectories: int = 1
    seed: int = 0
    burn_in: int = 0
    state_cap: int = 100_000
    record_empirical_up_to: int = -1
    threads: int | None = None
    x0: dict | None = None
    reset_every: int = 0
    chunk: int = 1 << 16
    record_path: bool = False

    def __post_init__(self):
        if self.steps <= 0 or self.trajectories <= 0:
            raise ValidationError("steps and trajectories must be positive")
        if not 0 <= self.burn_in < self.steps:
            raise ValidationError("burn_in must lie in [0, steps)")
        if self.state_cap <= 0:
            raise ValidationError("state_cap must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


@dataclass
class TrajectoryStats:
    """Summary of one trajectory."""

    index: int
    steps_done: int
    diverged: bool
    construction_point_fraction: float
    construction_point_fraction_mod3: float
    empty_at_end: bool
    empty_buffer_count_at_end: int
    mean_total_queue: float
    max_total_queue: int
    drift_slope: float
    return_time_sum: int
    return_count: int
    final_counts: list
    drift_increment: list = field(default_factory=list)
    resets: int = 0
    last_empty_step: int = -1


@dataclass
class SimResult:
    trajectories: list
    aggregate: dict
    empirical: dict
    path: np.ndarray | None = None

    def rows(self):
        return [asdict(t) for t in self.trajectories]


# kernel

@nb.njit(nogil=True, cache=True)
def _insert_sorted(ts, cls, n, t, c):
    k = n
    while k > 0 and ts[k - 1] > t:
        ts[k] = ts[k - 1]
        cls[k] = cls[k - 1]
        k -= 1
    ts[k] = t
    cls[k] = c


@nb.njit(nogil=True, cache=True)
def _lex_less(a, b, n):
    for k in range(n):
        if a[k] != b[k]:
            return a[k] < b[k]
    return False


@nb.njit(nogil=True, cache=True)
def _kernel(arrivals, draws, edges, esize, node_edges, node_deg, code, v2fav, beta,
            rewards, prio, isv1, ring, head, cnt, x0, acc, drift, hist, hist_len,
            burn_in, state_cap, reset_every, path):
    q = cnt.shape[0]
    cap = ring.shape[1]
    rmax = edges.shape[1]
    cands = np.empty(edges.shape[0], dtype=np.int64)
    keep = np.empty(edges.shape[0], dtype=np.int64)
    key = np.empty(rmax, dtype=np.int64)
    best_key = np.empty(rmax, dtype=np.int64)
    wts = np.empty(hist_len + 1, dtype=np.int64)
    wcls = np.empty(hist_len + 1, dtype=np.int64)
    total = 0
    for i in range(q):
        total += cnt[i]
    n_arr = arrivals.shape[0]
    for step in range(n_arr):
        if acc[A_DIVERGED]:
            break
        v = arrivals[step]
        n = acc[A_N] + 1
        acc[A_N] = n
        tstamp = acc[A_ARRIVED]
        acc[A_ARRIVED] += 1
        # feasible edges, in edge-index order
        nc = 0
        for a in range(node_deg[v]):
            j = node_edges[v, a]
            ok = True
            if esize[j] == 1:
                ok = cnt[v] >= 1
            else:
                for b in range(esize[j]):
                    u = edges[j, b]
                    if u != v and cnt[u] == 0:
                        ok = False
                        break
            if ok:
                cands[nc] = j
                nc += 1
        if nc > 0 and v2fav:
            nk = 0
            for a in range(nc):
                j = cands[a]
                good = True
                if esize[j] == 1:
                    good = not isv1[v]
                else:
                    for b in range(esize[j]):
                        u = edges[j, b]
                        if u != v and isv1[u]:
                            good = False
                if good:
                    keep[nk] = j
                    nk += 1
            if nk > 0:
                for a in range(nk):
                    cands[a] = keep[a]
                nc = nk
        chosen = -1
        if nc == 1:
            chosen = cands[0]
        elif nc > 1:
            if code == FCFM or code == LCFM:
                for a in range(nc):
                    j = cands[a]
                    np_ = 0
                    if esize[j] == 1:
                        if code == FCFM:
                            key[0] = ring[v, head[v]]
                        else:
                            key[0] = -ring[v, (head[v] + cnt[v] - 1) % cap]
                        np_ = 1
                    else:
                        for b in range(esize[j]):
                            u = edges[j, b]
                            if u == v:
                                continue
                            if code == FCFM:
                                t = ring[u, head[u]]
                            else:
                                t = -ring[u, (head[u] + cnt[u] - 1) % cap]
                            # keep key sorted ascending
                            k = np_
                            while k > 0 and key[k - 1] > t:
                                key[k] = key[k - 1]
                                k -= 1
                            key[k] = t
                            np_ += 1
                    if chosen < 0 or _lex_less(key, best_key, np_):
                        chosen = j
                        for k in range(np_):
                            best_key[k] = key[k]
            elif code == PRIORITY:
                for a in range(prio.shape[1]):
                    j = prio[v, a]
                    if j < 0:
                        break
                    for b in range(nc):
                        if cands[b] == j:
                            chosen = j
                            break
                    if chosen >= 0:
                        break
            elif code == RANDOM:
                u01 = draws[acc[A_DRAW]]
                acc[A_DRAW] += 1
                idx = int(u01 * nc)
                if idx >= nc:
                    idx = nc - 1
                chosen = cands[idx]
            else:
                top = -np.inf
                nb_ = 0
                for a in range(nc):
                    j = cands[a]
                    xs = 0
                    for b in range(esize[j]):
                        xs += cnt[edges[j, b]]
                    sc = beta * float(xs) + rewards[j]
                    if sc > top:
                        top = sc
                        nb_ = 0
                    if sc == top:
                        keep[nb_] = j
                        nb_ += 1
                if nb_ == 1:
                    chosen = keep[0]
                else:
                    u01 = draws[acc[A_DRAW]]
                    acc[A_DRAW] += 1
                    idx = int(u01 * nb_)
                    if idx >= nb_:
                        idx = nb_ - 1
                    chosen = keep[idx]
        if chosen < 0:
            if cnt[v] >= cap:
                acc[A_DIVERGED] = 1
                break
            ring[v, (head[v] + cnt[v]) % cap] = tstamp
            cnt[v] += 1
            total += 1
        else:
            if esize[chosen] == 1:
                partners = 1
            else:
                partners = esize[chosen] - 1
            for b in range(esize[chosen]):
                u = edges[chosen, b]
                if esize[chosen] > 1 and u == v:
                    continue
                if code == LCFM:
                    cnt[u] -= 1
                else:
                    head[u] = (head[u] + 1) % cap
                    cnt[u] -= 1
            total -= partners
        if total > state_cap:
            acc[A_DIVERGED] = 1
        if path.shape[0] > 0:
            for i in range(q):
                path[step, i] = cnt[i]
        if total == 0:
            if acc[A_LASTZ] >= 0:
                acc[A_RETSUM] += n - acc[A_LASTZ]
                acc[A_RETCNT] += 1
            acc[A_LASTZ] = n
        if n > burn_in:
            acc[A_REC] += 1
            if total == 0:
                acc[A_ZERO] += 1
            if n % 3 == 0:
                acc[A_COUNT3] += 1
                if total == 0:
                    acc[A_ZERO3] += 1
            acc[A_SUMTOT] += total
            if total > acc[A_MAXTOT]:
                acc[A_MAXTOT] = total
            acc[A_SN] += n
            acc[A_SNN] += n * n
            acc[A_SY] += total
            acc[A_SNY] += n * total
            if hist_len >= 0 and total <= hist_len:
                m_ = 0
                for i in range(q):
                    for k in range(cnt[i]):
                        _insert_sorted(wts, wcls, m_, ring[i, (head[i] + k) % cap], i)
                        m_ += 1
                cde = 0
                mul = 1
                for k in range(m_):
                    cde += (wcls[k] + 1) * mul
                    mul *= q + 1
                hist[cde] += 1
        if reset_every > 0 and n % reset_every == 0:
            for i in range(q):
                drift[i] += cnt[i] - x0[i]
            acc[A_RESETS] += 1
            total = 0
            s_ = 0
            for i in range(q):
                total += x0[i]
            for i in range(q):
                head[i] = 0
                cnt[i] = x0[i]
                for k in range(x0[i]):
                    ring[i, k] = -total + s_
                    s_ += 1
    return total


def _structure_arrays(s: MatchingStructure):
    rmax = max(len(e) for e in s.edges)
    edges = np.full((s.m, rmax), -1, dtype=np.int64)
    esize = np.zeros(s.m, dtype=np.int64)
    for j, e in enumerate(s.edges):
        idx = sorted(s.index[v] for v in e)
        edges[j, :len(idx)] = idx
        esize[j] = len(idx)
    maxdeg = max(s.degree(v) for v in s.nodes)
    node_edges = np.full((s.q, max(maxdeg, 1)), -1, dtype=np.int64)
    node_deg = np.zeros(s.q, dtype=np.int64)
    for k, v in enumerate(s.nodes):
        own = s.edges_of(v)
        node_edges[k, :len(own)] = own
        node_deg[k] = len(own)
    isv1 = np.array([v in s.v1 for v in s.nodes])
    return edges, esize, node_edges, node_deg, isv1


def _prepare_measure(s, m):
    if isinstance(m, Measure):
        if m.mode == "intensity":
            m = m.normalized()
        p = m.vector(s)
    else:
        p = np.asarray(m, dtype=float)
        if p.shape != (s.q,) or (p <= 0).any() or abs(p.sum() - 1) > 1e-9:
            raise ValidationError("arrival probabilities must be positive and sum to 1")
    cum = np.cumsum(p)
    cum[-1] = 1.0
    return p, cum


def arrival_rng(seed: int, traj: int):
    return np.random.default_rng(np.random.SeedSequence([seed, traj, 0]))


def decision_rng(seed: int, traj: int):
    return np.random.default_rng(np.random.SeedSequence([seed, traj, 1]))


def draw_arrivals(gen, cum, n):
    return np.searchsorted(cum, gen.random(n), side="right").astype(np.int64)


def _x0_vector(s, c):
    x0 = np.zeros(s.q, dtype=np.int64)
    if c.x0:
        for k, v in c.x0.items():
            if str(k) not in s.index or int(v) < 0:
                raise ValidationError(f"bad initial count {k}: {v}")
            x0[s.index[str(k)]] = int(v)
    return x0


def _run_one(s, arrays, cp: CompiledPolicy, cum, c: SimConfig, traj: int):
    edges, esize, node_edges, node_deg, isv1 = arrays
    x0 = _x0_vector(s, c)
    cap = max(c.state_cap + 1, int(x0.max()) + 1)
    ring = np.zeros((s.q, cap), dtype=np.int64)
    head = np.zeros(s.q, dtype=np.int64)
    cnt = x0.copy()
    tot0 = int(x0.sum())
    pos = 0
    for i in range(s.q):
        for k in range(x0[i]):
            ring[i, k] = -tot0 + pos
            pos += 1
    acc = np.zeros(N_ACC, dtype=np.int64)
    acc[A_LASTZ] = 0 if tot0 == 0 else -1
    drift = np.zeros(s.q, dtype=np.int64)
    L = c.record_empirical_up_to
    if L >= 0 and (s.q + 1) ** L > MAX_HIST:
        raise ValidationError(f"empirical word length {L} too large for q={s.q}")
    hist = np.zeros((s.q + 1) ** L if L >= 0 else 1, dtype=np.int64)
    path = np.zeros((c.steps if c.record_path else 0, s.q), dtype=np.int64)
    agen, dgen = arrival_rng(c.seed, traj), decision_rng(c.seed, traj)
    draws = np.empty(0)
    done = 0
    total = tot0
    while done < c.steps and not acc[A_DIVERGED]:
        n = min(c.chunk, c.steps - done)
        arr = draw_arrivals(agen, cum, n)
        draws = np.concatenate([draws[acc[A_DRAW]:], dgen.random(n)])
        acc[A_DRAW] = 0
        sub = path[done:done + n] if c.record_path else path
        total = _kernel(arr, draws, edges, esize, node_edges, node_deg, cp.code, cp.v2fav,
                        cp.beta, cp.rewards, cp.prio, isv1, ring, head, cnt, x0, acc, drift,
                        hist, L, c.burn_in, c.state_cap, c.reset_every, sub)
        done += n
    rec = int(acc[A_REC])
    slope = math.nan
    if rec >= 2:
        # least squares slope of the total queue against n (exact integer sums)
        sxx = rec * int(acc[A_SNN]) - int(acc[A_SN]) ** 2
        sxy = rec * int(acc[A_SNY]) - int(acc[A_SN]) * int(acc[A_SY])
        slope = sxy / sxx if sxx else math.nan
    stats = TrajectoryStats(
        index=traj, steps_done=int(acc[A_N]), diverged=bool(acc[A_DIVERGED]),
        construction_point_fraction=acc[A_ZERO] / rec if rec else math.nan,
        construction_point_fraction_mod3=acc[A_ZERO3] / acc[A_COUNT3] if acc[A_COUNT3] else math.nan,
        empty_at_end=total == 0,
        empty_buffer_count_at_end=int((cnt == 0).sum()),
        mean_total_queue=acc[A_SUMTOT] / rec if rec else math.nan,
        max_total_queue=int(acc[A_MAXTOT]), drift_slope=slope,
        return_time_sum=int(acc[A_RETSUM]), return_count=int(acc[A_RETCNT]),
        final_counts=cnt.tolist(), drift_increment=drift.tolist(), resets=int(acc[A_RESETS]),
        last_empty_step=int(acc[A_LASTZ]))
    return stats, hist, (path if c.record_path else None)


def _mean(vals):
    vals = [v for v in vals if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def decode_word(s: MatchingStructure, code: int) -> tuple:
    out = []
    while code:
        code, d = divmod(code, s.q + 1)
        out.append(s.nodes[d - 1])
    return tuple(out)


def encode_word(s: MatchingStructure, w) -> int:
    code, mul = 0, 1
    for a in w:
        code += (s.index[str(a)] + 1) * mul
        mul *= s.q + 1
    return code


def run(s: MatchingStructure, p, m, c: SimConfig) -> SimResult:
    """Simulate ``c.trajectories`` independent trajectories from the empty state
    (or ``c.x0``) and aggregate them in trajectory order."""
    p = PolicySpec.parse(p) if not isinstance(p, (PolicySpec, CompiledPolicy)) else p
    cp = p if isinstance(p, CompiledPolicy) else compile_policy(s, p)
    _, cum = _prepare_measure(s, m)
    arrays = _structure_arrays(s)
    threads = c.threads or min(os.cpu_count() or 1, c.trajectories)
    if threads > 1 and c.trajectories > 1:
        # compile once before fanning out
        _run_one(s, arrays, cp, cum, SimConfig(steps=2, seed=c.seed), 0)
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(lambda t: _run_one(s, arrays, cp, cum, c, t),
                              range(c.trajectories)))
    else:
        res = [_run_one(s, arrays, cp, cum, c, t) for t in range(c.trajectories)]
    trajs = [r[0] for r in res]
    hist = None
    if c.record_empirical_up_to >= 0:
        hist = np.sum([r[1] for r in res], axis=0)
    empirical = {}
    if hist is not None and hist.sum():
        tot = sum(t.steps_done - min(c.burn_in, t.steps_done) for t in trajs)
        for code in np.flatnonzero(hist):
            empirical[decode_word(s, int(code))] = hist[code] / tot
    ret_cnt = sum(t.return_count for t in trajs)
    agg = {
        "trajectories": len(trajs),
        "steps": c.steps,
        "diverged": sum(t.diverged for t in trajs),
        "construction_point_fraction": _mean([t.construction_point_fraction for t in trajs]),
        "construction_point_fraction_mod3": _mean(
            [t.construction_point_fraction_mod3 for t in trajs]),
        "empty_at_end_fraction": _mean([float(t.empty_at_end) for t in trajs]),
        "empty_buffer_count_at_end": _mean([float(t.empty_buffer_count_at_end) for t in trajs]),
        "mean_total_queue": _mean([t.mean_total_queue for t in trajs]),
        "max_total_queue": max(t.max_total_queue for t in trajs),
        "drift_slope": _mean([t.drift_slope for t in trajs]),
        "mean_return_time": (math.fsum(t.return_time_sum for t in trajs) / ret_cnt
                             if ret_cnt else math.inf),
        "return_count": ret_cnt,
    }
    if c.reset_every:
        resets = sum(t.resets for t in trajs)
        agg["drift_increment"] = [math.fsum(t.drift_increment[i] for t in trajs) / resets
                                  for i in range(s.q)] if resets else None
        agg["resets"] = resets
    path = res[0][2] if c.record_path else None
    return SimResult(trajs, agg, empirical, path)


def estimate_return_time(s, p, m, c: SimConfig):
    """Mean inter-visit time to the empty state and the number of returns.

    ``(inf, 0)`` means no return was seen, which is evidence of instability.
    """
    r = run(s, p, m, c)
    return r.aggregate["mean_return_time"], r.aggregate["return_count"]


def reference_run(s: MatchingStructure, p, m, steps: int, seed: int = 0, traj: int = 0,
                  word_level: bool = True):
    """Pure-Python trajectory with the kernel's random streams.

    Returns the list of states (words, or count vectors) after each arrival.
    Slow; meant for cross-checking the kernel in tests.
    """
    from .policies import step_class, step_word
    cp = p if isinstance(p, CompiledPolicy) else compile_policy(s, PolicySpec.parse(p)
                                                                 if isinstance(p, str) else p)
    _, cum = _prepare_measure(s, m)
    arr = draw_arrivals(arrival_rng(seed, traj), cum, steps)
    dgen = decision_rng(seed, traj)
    out = []
    state = () if word_level else np.zeros(s.q, dtype=np.int64)
    for a in arr:
        v = s.nodes[a]
        if word_level:
            state, _ = step_word(s, state, v, cp, dgen)
        else:
            state, _ = step_class(s, state, v, cp, dgen)
        out.append(state)
    return out


def sample_path(s: MatchingStructure, p, lam: Measure, steps: int, seed: int = 0, x0=None):
    """Continuous-time path driven by Poisson arrivals of intensity ``lam``.

    Returns ``(times, counts)`` with ``counts[k]`` the class detail just after
    the k-th event, ``times[k]`` its epoch; row 0 is the initial state.
    """
    if lam.mode != "intensity":
        raise ValidationError("sample_path needs an intensity measure")
    c = SimConfig(steps=steps, seed=seed, x0=x0, record_path=True, threads=1,
                  state_cap=max(100_000, 4 * steps + sum((x0 or {}).values())))
    r = run(s, p, lam, c)
    rate = float(lam.total())
    gaps = np.random.default_rng(np.random.SeedSequence([seed, 0, 2])).exponential(
        1.0 / rate, size=steps)
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    start = _x0_vector(s, c)[None, :]
    return times, np.concatenate([start, r.path[:r.trajectories[0].steps_done]])


def kidney_compare(m: Measure, c: SimConfig, policy="fcfm") -> dict:
    """One row of the two-by-two versus three-by-three comparison.

    Simulates the complete 3-uniform hypergraph on four classes and returns
    its construction point statistics next to the exact empty-state
    probability of the complete 3-partite graph on the same classes.
    """
    from .product_form import three_partite_pi0
    h = named("complete_3uniform_4")
    g = named("three_partite_4")
    if set(m.weights) != set(h.nodes):
        raise ValidationError("kidney comparison needs a measure on classes 1..4")
    r = run(h, policy, m, c)
    a = r.aggregate
    # the 3-by-3 chain is 3-periodic, so emptiness is read at the last multiple of 3
    t3 = c.steps - c.steps % 3
    av_eb = _mean([float(t.last_empty_step == t3) for t in r.trajectories if not t.diverged])
    try:
        pi0 = float(three_partite_pi0(g, m))
    except ValidationError:
        pi0 = math.nan
    return {
        "mu": [float(m[v]) for v in h.nodes],
        "trajectorial_average": a["construction_point_fraction"],
        "av_eb": av_eb,
        "av_eb_third": av_eb / 3,
        "av_eb_step": t3,
        "construction_point_fraction_mod3": a["construction_point_fraction_mod3"],
        "zero_coordinates_at_end": a["empty_buffer_count_at_end"],
        "pi0_two_by_two": pi0,
        "diverged": a["diverged"],
        "trajectories": a["trajectories"],
        "steps": a["steps"],
    }
