"""Fluid limits of priority policies started from a single large queue.

While the queue of class ``i0`` is large, the other classes evolve as a
marginal Markov process: a star of birth-death branches glued at an origin.
The fluid drift of queue ``i0`` is its arrival rate minus the rate at which
arrivals consume ``i0`` items, averaged under the marginal stationary law.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import NotStableError, ValidationError
from .measures import TOL, Measure, in_n3, in_ncond_c
from .policies import PolicySpec, priority
from .product_form import StationaryTable
from .structures import named


@dataclass(frozen=True)
class Branch:
    """Half-line (or finite segment when ``capacity`` is set) of the marginal
    state space on which only class ``label`` is present."""

    label: str
    birth: object
    death: object
    capacity: int | None = None


@dataclass(frozen=True)
class MarginalChain:
    branches: tuple

    def __post_init__(self):
        for b in self.branches:
            if not (b.birth > 0 and b.death > 0):
                raise ValidationError(f"branch {b.label}: rates must be positive")
            if b.capacity is not None and b.capacity < 1:
                raise ValidationError(f"branch {b.label}: capacity must be >= 1")


def marginal_stationary(mc: MarginalChain, cap: int = 50) -> StationaryTable:
    """pi(origin) = [1 + sum_b sum_{k>=1} r_b^k]^-1 with r_b = birth/death.

    Entries are keyed ``()`` for the origin and ``(label, k)`` for level
    ``k`` of a branch, up to ``cap``; ``extra`` holds the per-branch ratio
    and the total mass away from the origin on each branch.
    """
    ratios, sums = {}, {}
    for b in mc.branches:
        r = b.birth / b.death
        if b.capacity is None:
            if r >= 1:
                raise NotStableError(f"branch {b.label} is not subcritical (ratio {float(r):.6g})")
            sums[b.label] = r / (1 - r)
        else:
            sums[b.label] = sum(r ** k for k in range(1, b.capacity + 1))
        ratios[b.label] = r
    origin = 1 / (1 + sum(sums.values()))
    entries = {(): origin}
    for b in mc.branches:
        top = cap if b.capacity is None else min(cap, b.capacity)
        for k in range(1, top + 1):
            entries[(b.label, k)] = origin * ratios[b.label] ** k
    mass = math.fsum(float(v) for v in entries.values())
    return StationaryTable(entries, origin, max(0.0, 1.0 - mass), cap, "marginal star walk",
                           {"ratios": ratios,
                            "branch_mass": {k: origin * v for k, v in sums.items()}})


@dataclass(frozen=True)
class FluidCase:
    """A worked case: structure, priority policy, start class and the
    marginal description (branches and which arrivals consume ``i0``)."""

    name: str
    structure: str
    i0: str
    orders: dict
    branches: object       # lam dict -> list of Branch
    serve_origin: tuple
    serve_branch: dict
    alpha_closed: object   # lam dict -> closed-form constant
    alpha_label: str = "alpha"
    condition: str = "Ncond_C"

    def policy(self) -> PolicySpec:
        if not self.orders:
            return PolicySpec.parse("ml")
        return priority(self.orders)


def _pl2_alpha(l):
    return (l["2"] ** 2 - (l["3"] - l["4"]) ** 2) / (l["2"] * (l["2"] + l["3"] + l["4"]))


def _pl3_alpha(l):
    l2, l3, l4 = l["2"], l["3"], l["4"]
    return ((l2 + l3) ** 2 - l4 ** 2) / (l2 ** 2 + 2 * l3 ** 2 + 3 * l2 * l3 + l2 * l4)


def _b3_alpha(l):
    return (l["2"] - l["3"]) / l["2"]


def _b4_alpha(l):
    return (l["1"] + l["2"] + l["4"]) / (2 * l["1"] + l["2"] + l["4"])


CASES = {
    "pendant_loop2": FluidCase(
        "pendant_loop2", "pendant_loop2", "1",
        orders={"1": ["1,2"], "2": ["2,3", "2,4", "2", "1,2"], "3": ["2,3", "3,4"],
                "4": ["2,4", "3,4"]},
        branches=lambda l: [Branch("3", l["3"], l["2"] + l["4"]),
                            Branch("4", l["4"], l["2"] + l["3"])],
        serve_origin=("2",), serve_branch={"3": (), "4": ()},
        alpha_closed=_pl2_alpha),
    "pendant_loop3": FluidCase(
        "pendant_loop3", "pendant_loop3", "1",
        orders={"1": ["1,2"], "2": ["2,3", "2,4", "1,2"], "3": ["2,3", "3", "3,4"],
                "4": ["2,4", "3,4"]},
        branches=lambda l: [Branch("3", l["3"], l["2"] + l["3"] + l["4"], capacity=1),
                            Branch("4", l["4"], l["2"] + l["3"])],
        serve_origin=("2",), serve_branch={"3": (), "4": ()},
        alpha_closed=_pl3_alpha),
    "bip3_loop2": FluidCase(
        "bip3_loop2", "bip3_loop2", "1",
        orders={"1": ["1,2"], "2": ["2,3", "2", "1,2"], "3": ["2,3"]},
        branches=lambda l: [Branch("3", l["3"], l["2"])],
        serve_origin=("2",), serve_branch={"3": ()},
        alpha_closed=_b3_alpha),
    "bip4_loop1": FluidCase(
        "bip4_loop1", "bip4_loop1", "3",
        orders={"1": ["1,2", "1,4", "1"], "2": ["1,2", "2,3"], "3": ["2,3", "3,4"],
                "4": ["1,4", "3,4"]},
        branches=lambda l: [Branch("1", l["1"], l["1"] + l["2"] + l["4"], capacity=1)],
        serve_origin=("2", "4"), serve_branch={"1": ()},
        alpha_closed=_b4_alpha, alpha_label="alpha1"),
    "bip4_loop1_v2fav": FluidCase(
        "bip4_loop1_v2fav", "bip4_loop1", "3",
        orders={"1": ["1,2", "1,4", "1"], "2": ["2,3", "1,2"], "3": ["2,3", "3,4"],
                "4": ["3,4", "1,4"]},
        branches=lambda l: [Branch("1", l["1"], l["1"], capacity=1)],
        serve_origin=("2", "4"), serve_branch={"1": ("2", "4")},
        alpha_closed=lambda l: l["1"] / (2 * l["1"]),
        alpha_label="alpha1"),
    "complete_3uniform_4": FluidCase(
        "complete_3uniform_4", "complete_3uniform_4", "1", orders={},
        branches=lambda l: [Branch(b, l[b], sum(l[c] for c in "234" if c != b))
                            for b in "234"],
        serve_origin=(), serve_branch={"2": ("3", "4"), "3": ("2", "4"), "4": ("2", "3")},
        alpha_closed=lambda l: 1 / (1 + sum(l[b] / (sum(l[c] for c in "234" if c != b) - l[b])
                                            for b in "234")),
        condition="N3-"),
}


def get_case(case) -> FluidCase:
    if isinstance(case, FluidCase):
        return case
    try:
        return CASES[case]
    except KeyError:
        raise ValidationError(f"unknown fluid case {case!r}; known: {sorted(CASES)}") from None


def _lam_dict(fc: FluidCase, lam) -> dict:
    s = named(fc.structure)
    if isinstance(lam, Measure):
        return dict(zip(s.nodes, lam.values(s)))
    if isinstance(lam, dict):
        lam = [lam[v] for v in s.nodes]
    vals = list(lam)
    if len(vals) != s.q:
        raise ValidationError(f"case {fc.name} needs {s.q} intensities, got {len(vals)}")
    m = Measure(dict(zip(s.nodes, vals)), "intensity")
    return dict(zip(s.nodes, m.values(s)))


def case_marginal(case, lam) -> MarginalChain:
    fc = get_case(case)
    return MarginalChain(tuple(fc.branches(_lam_dict(fc, lam))))


def case_alpha(case, lam, form: str = "closed"):
    """The case constant: ``form="closed"`` uses the simplified rational
    expression, ``form="series"`` the marginal origin mass."""
    fc = get_case(case)
    l = _lam_dict(fc, lam)
    if fc.condition == "Ncond_C":
        rep = in_ncond_c(named(fc.structure), Measure(l, "intensity"))
        if not rep.holds:
            warnings.warn(f"intensities not in Ncond_C ({rep.status}); constant computed anyway",
                          stacklevel=2)
    if form == "closed":
        return fc.alpha_closed(l)
    if form == "series":
        return marginal_stationary(MarginalChain(tuple(fc.branches(l))), cap=0).alpha
    raise ValidationError("form must be 'closed' or 'series'")


@dataclass
class FluidVerdict:
    case: str
    i0: str
    drift: float
    rho: float
    stable: str
    alpha_constants: dict
    condition: dict
    note: str = ""

    def to_json(self) -> dict:
        return {"case": self.case, "i0": self.i0, "drift": self.drift,
                "rho": None if math.isinf(self.rho) else self.rho, "rho_infinite": math.isinf(self.rho),
                "stable": self.stable, "alpha_constants": self.alpha_constants,
                "condition": self.condition, "note": self.note}


def fluid_drift(case, lam):
    """lambda_{i0} - sum_j lambda_j pi(states where a j arrival consumes i0)."""
    fc = get_case(case)
    l = _lam_dict(fc, lam)
    st = marginal_stationary(MarginalChain(tuple(fc.branches(l))), cap=0)
    out = l[fc.i0] - sum(l[j] for j in fc.serve_origin) * st.alpha
    for b, serv in fc.serve_branch.items():
        out -= sum(l[j] for j in serv) * st.extra["branch_mass"][b]
    return out, st


def fluid_verdict(case, lam) -> FluidVerdict:
    """Drift, hitting time of zero for unit initial mass, and stability.

    ``stable`` is "stable" when the necessary condition holds and the drift
    is negative, "boundary" when the drift vanishes, else "unstable".
    """
    fc = get_case(case)
    l = _lam_dict(fc, lam)
    s = named(fc.structure)
    meas = Measure(l, "intensity")
    rep = in_ncond_c(s, meas) if fc.condition == "Ncond_C" else in_n3(s, meas.normalized())
    exact = meas.exact
    try:
        drift, st = fluid_drift(fc, l)
    except NotStableError as exc:
        return FluidVerdict(fc.name, fc.i0, math.nan, math.inf, "unstable", {},
                            rep.to_json(), f"marginal process not positive recurrent: {exc}")
    alpha = {fc.alpha_label: float(st.alpha)}
    tol = 0 if exact else TOL
    if drift < -tol:
        rho, fl = 1.0 / -float(drift), "stable"
    else:
        rho, fl = math.inf, "boundary" if drift <= tol else "unstable"
    cond = "stable" if rep.holds else ("boundary" if rep.status == "boundary" else "unstable")
    rank = {"stable": 0, "boundary": 1, "unstable": 2}
    stable = max(fl, cond, key=rank.get)
    notes = []
    if fl == "boundary":
        notes.append("zero fluid drift")
    if cond != "stable":
        notes.append(f"{rep.name} {rep.status}")
    note = "; ".join(notes)
    return FluidVerdict(fc.name, fc.i0, float(drift), rho, stable, alpha, rep.to_json(), note)


def extra_slack(case, lam):
    """Slack of the extra inequality beyond the necessary condition
    (negated drift): positive means the fluid queue empties."""
    d, _ = fluid_drift(case, lam)
    return -d


def witness_family(case: str, eps):
    """The epsilon-parametrized intensities that sit in Ncond_C while the
    extra inequality fails (up to equality at the right end)."""
    e = eps
    half = Fraction(1, 2) if isinstance(e, Fraction) else 0.5
    if case in ("pendant_loop2", "pendant_loop3"):
        a = half - 3 * e / 4
        return [e / 2, e, a, a]
    if case == "bip4_loop1":
        return [1 - 5 * e / 4, e / 2, 3 * e / 4, e / 2]
    raise ValidationError(f"no witness family for {case!r}")


WITNESS_RANGE = {"pendant_loop2": Fraction(2, 5), "pendant_loop3": Fraction(1, 3),
                 "bip4_loop1": Fraction(4, 7)}


def scaled_path_check(case, lam, n_list=(50, 200), seeds=range(10), horizon=None):
    """Sup-norm distance between the scaled CTMC path and the fluid path.

    The chain starts from ``n`` items of class ``i0``; time and space are
    scaled by ``n``. The comparison window is ``[0, 0.9 rho]`` when the
    drift is negative, else ``[0, 1]``.

    Returns ``{n: [deviation per seed]}``.
    """
    from .simulate import sample_path
    fc = get_case(case)
    s = named(fc.structure)
    l = _lam_dict(fc, lam)
    lamf = {k: float(v) for k, v in l.items()}
    meas = Measure(lamf, "intensity")
    drift = float(fluid_drift(fc, l)[0])
    T = horizon or (0.9 / -drift if drift < 0 else 1.0)
    rate = sum(lamf.values())
    i0 = s.index[fc.i0]
    out = {}
    for n in n_list:
        devs = []
        steps = int(n * T * rate * 1.3) + 200
        for seed in seeds:
            times, counts = sample_path(s, fc.policy(), meas, steps, seed=int(seed),
                                        x0={fc.i0: n})
            t = times / n
            scaled = counts / n
            inside = t <= T
            fl = np.zeros_like(scaled)
            fl[:, i0] = np.maximum(1.0 + drift * t, 0.0)
            dev = np.abs(scaled[inside] - fl[inside]).max()
            # left limits: state k persists until event k+1
            nxt = np.minimum(t[1:], T)
            keep = t[:-1] <= T
            fl_next = np.maximum(1.0 + drift * nxt[keep], 0.0)
            dev = max(dev, np.abs(scaled[:-1][keep, i0] - fl_next).max())
            devs.append(float(dev))
        out[n] = devs
    return out
