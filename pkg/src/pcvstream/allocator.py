"""Joint quality/form selection by LP-relaxation branch-and-bound.

Each visible (GOF, tile) pair is a *slot* with 2R options: option index
``2*(r-1)`` is level r compressed and ``2*(r-1)+1`` level r raw. Merging the
form bit and level into one categorical choice makes every cost and the
objective linear in the option indicators, so the relaxation is an LP.

Buffer feasibility is a set of prefix constraints, one per GOF g of the
horizon: the transmit-plus-decode time of GOFs up to g may not exceed
``b - eps + g*Ti``. Candidate integer plans are always re-checked with the
exact buffer recursion from :mod:`pcvstream.dynamics`.

Equal-objective plans are ranked by a fixed tie-break, applied in stages:

1. larger weighted-quality sum (differences within 1e-9 relative are ties);
2. lexicographically higher level vector over slots in (g, k) order;
3. smaller total transmit+decode time summed over the horizon (same tolerance);
4. lexicographically compressed-before-raw over slots.

:func:`branch_and_bound` and :func:`brute_force` implement the same ranking.
"""

from __future__ import annotations

import enum
import functools
import heapq
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import buffer_step, gof_sums, time_terms
from .model import (
    EPS_BUF, Choice, DeviceProfile, Form, PcvError, Plan, ScenarioTraces, VideoManifest,
)
from .qoe import (
    VisibilityMatrix, WeightSet, compute_visibility, compute_weights, qoe_terms, tile_gain,
)

LP_FEAS_TOL = 1e-9
INT_TOL = 1e-6
GAP_TOL = 1e-9
TIE_TOL = 1e-9
# slack on LP bounds when searching for plans at or above a target value
_FLOOR_SLACK = 1e-7
ENUM_CAP = 2 ** 24


class Infeasible(PcvError):
    pass


class NoVisibleTiles(PcvError):
    pass


class TooLarge(PcvError):
    pass


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


def option_index(form: Form, level: int) -> int:
    return 2 * (level - 1) + (0 if form is Form.COMPRESSED else 1)


def option_choice(j: int) -> Choice:
    return Choice(Form.COMPRESSED if j % 2 == 0 else Form.RAW, j // 2 + 1)


@dataclass(frozen=True)
class ProblemInstance:
    slots: tuple[tuple[int, int], ...]     # (g, k) in (g, k) order
    slot_gof: np.ndarray                   # (S,) position of the slot's GOF in ``gofs``
    gofs: tuple[int, ...]                  # GOF indices of the horizon
    bandwidth: tuple[float, ...]           # per horizon GOF
    bits: np.ndarray                       # (S, 2R) Mbits
    compute: np.ndarray                    # (S, 2R) compute units
    gain: np.ndarray                       # (S, 2R) weighted quality
    allowed: np.ndarray                    # (S, 2R) bool
    denominator: float
    initial_buffer: float
    gof_duration: float
    capacity: float
    levels: int

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_options(self) -> int:
        return 2 * self.levels

    @property
    def n_constraints(self) -> int:
        return len(self.gofs)

    @functools.cached_property
    def time_cost(self) -> np.ndarray:
        """(S, 2R) seconds each option adds to its GOF's Tu."""
        bw = np.asarray(self.bandwidth)[self.slot_gof][:, None]
        return self.bits / bw + self.gof_duration * self.compute / self.capacity

    def caps(self) -> np.ndarray:
        h = np.arange(1, self.n_constraints + 1)
        return self.initial_buffer - EPS_BUF + h * self.gof_duration

    def without_raw(self) -> "ProblemInstance":
        allowed = self.allowed.copy()
        allowed[:, 1::2] = False
        return replace(self, allowed=allowed)

    def to_dict(self) -> dict:
        """JSON-serializable dump for failure triage."""
        return {
            "slots": [list(s) for s in self.slots],
            "gofs": list(self.gofs),
            "bandwidth_mbps": list(self.bandwidth),
            "bits_mbits": self.bits.tolist(),
            "compute_units": self.compute.tolist(),
            "gain": self.gain.tolist(),
            "allowed": self.allowed.astype(int).tolist(),
            "denominator": self.denominator,
            "initial_buffer_s": self.initial_buffer,
            "gof_duration_s": self.gof_duration,
            "capacity": self.capacity,
            "caps_s": self.caps().tolist(),
        }


@dataclass
class Solution:
    plan: Plan
    objective: float          # QoE, ln(numerator / denominator)
    bound: float              # ln of the root relaxation bound
    numerator: float
    bound_numerator: float
    node_count: int
    status: Status
    assignment: tuple[int, ...] = field(default=(), repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def build_problem(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
                  visibility: VisibilityMatrix, weights: WeightSet, b: float,
                  first_gof: int = 1) -> ProblemInstance:
    """Collect the options of every visible tile from ``first_gof`` onwards."""
    if not b > 0:
        raise ValueError(f"initial buffer must be > 0, got {b}")
    R = manifest.quality_levels
    gofs = tuple(range(first_gof, manifest.n_gofs + 1))
    slots, slot_gof, bits, compute, gain = [], [], [], [], []
    den = 0.0
    for pos, g in enumerate(gofs):
        gof = manifest.gof(g)
        for k in visibility.visible(g):
            tile = gof.tiles[k - 1]
            p, qt = weights.p[g - 1, k - 1], weights.qt[g - 1, k - 1]
            row_b, row_c, row_q = [], [], []
            for v in tile.variants:
                row_b += [v.compressed_size_mbits, v.raw_size_mbits]
                row_c += [v.decode_compute_units, 0.0]
                q = tile_gain(p, qt, v.level)
                row_q += [q, q]
            slots.append((g, k))
            slot_gof.append(pos)
            bits.append(row_b)
            compute.append(row_c)
            gain.append(row_q)
            den += tile_gain(p, qt, R)
    if not slots:
        raise NoVisibleTiles("no tile is visible in the planning horizon")
    S = len(slots)
    return ProblemInstance(
        slots=tuple(slots), slot_gof=np.array(slot_gof, dtype=int), gofs=gofs,
        bandwidth=tuple(traces.bandwidth_mbps[g - 1] for g in gofs),
        bits=np.array(bits, dtype=float), compute=np.array(compute, dtype=float),
        gain=np.array(gain, dtype=float), allowed=np.ones((S, 2 * R), dtype=bool),
        denominator=den, initial_buffer=float(b), gof_duration=manifest.gof_duration,
        capacity=device.capacity, levels=R,
    )


# -- exact evaluation of integer plans ------------------------------------------

def _gof_slot_lists(problem: ProblemInstance) -> list[list[int]]:
    out = [[] for _ in problem.gofs]
    for s, pos in enumerate(problem.slot_gof):
        out[pos].append(s)
    return out


def evaluate(problem: ProblemInstance, assign) -> tuple[bool, float, float]:
    """(feasible, weighted-quality numerator, total Tu) of an integer plan.

    Uses the same operation order as the buffer simulation so verdicts agree
    exactly.
    """
    tb = problem.initial_buffer
    ti = problem.gof_duration
    ok = True
    tu_total = 0.0
    for pos, slots in enumerate(_gof_slot_lists(problem)):
        bits = 0.0
        comp = 0.0
        for s in slots:
            bits = bits + problem.bits[s, assign[s]]
            comp = comp + problem.compute[s, assign[s]]
        _, _, tu = time_terms(bits, comp, problem.bandwidth[pos], ti, problem.capacity)
        tb = buffer_step(tb, tu, ti)
        tu_total += tu
        ok = ok and tb >= EPS_BUF
    num = 0.0
    for s, j in enumerate(assign):
        num += problem.gain[s, j]
    return ok, num, tu_total


def qoe_value(problem: ProblemInstance, numerator: float) -> float:
    if problem.denominator <= 0:
        return 0.0
    return math.log(numerator / problem.denominator)


def _tol(x: float) -> float:
    return TIE_TOL * max(1.0, abs(x))


# -- relaxation -----------------------------------------------------------------

def _upper_hull(t: np.ndarray, v: np.ndarray, opts: np.ndarray) -> list[int]:
    """Options on the upper concave hull of (cost, value), cheapest first,
    ending at the best value. Ties keep the lowest option index."""
    order = np.lexsort((opts, -v, t))
    frontier = []
    for i in order:
        if frontier and v[i] <= v[frontier[-1]]:
            continue
        frontier.append(i)
    hull = []
    for i in frontier:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly above the chord a -> i
            if (v[b] - v[a]) * (t[i] - t[a]) <= (v[i] - v[a]) * (t[b] - t[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return [int(opts[i]) for i in hull]


def _slot_items(tcost_s, objective_s, allowed_s):
    opts = np.flatnonzero(allowed_s)
    hull = _upper_hull(tcost_s[opts], objective_s[opts], opts)
    h = np.asarray(hull)
    dt = np.diff(tcost_s[h])
    dv = np.diff(objective_s[h])
    return hull, tcost_s[h[0]], objective_s[h[0]], dt, dv


def _lp(problem: ProblemInstance, objective: np.ndarray, allowed: np.ndarray,
        cache: dict | None = None):
    """Maximize ``objective . w`` over the relaxed polytope restricted to ``allowed``.

    Every option spends time only in its own GOF and the capacity constraints
    are nested prefixes, so the feasible region of per-GOF spending is a
    polymatroid and greedy is exact: start every slot at its cheapest hull
    option, then buy hull increments in decreasing value-per-second order,
    each as far as the tightest downstream prefix allows. At most one slot per
    tight constraint ends fractional.

    ``cache`` memoizes per-slot hulls for a fixed ``objective``.
    Returns (weights (S, 2R), value, prices) or None when infeasible, where
    ``prices[h]`` is the value per second at which GOF h stopped buying; these
    are the dual multipliers of the prefix constraints, summed downstream.
    """
    S, J = allowed.shape
    if not allowed.any(axis=1).all():
        return None
    tcost = problem.time_cost
    H = problem.n_constraints
    slot_gof = problem.slot_gof
    per_slot = []
    for s in range(S):
        if cache is None:
            per_slot.append(_slot_items(tcost[s], objective[s], allowed[s]))
            continue
        key = (s, allowed[s].tobytes())
        hit = cache.get(key)
        if hit is None:
            hit = cache[key] = _slot_items(tcost[s], objective[s], allowed[s])
        per_slot.append(hit)

    base_t = np.array([p[1] for p in per_slot])
    value = float(sum(p[2] for p in per_slot))
    rem = problem.caps() + LP_FEAS_TOL - np.cumsum(np.bincount(slot_gof, base_t, minlength=H))
    if (rem < 0).any():
        return None
    counts = np.array([len(p[3]) for p in per_slot])
    tight_eff = np.zeros(H)
    progress = np.zeros(S, dtype=int)
    partial = np.zeros(S)
    if counts.sum():
        dt = np.concatenate([p[3] for p in per_slot])
        dv = np.concatenate([p[4] for p in per_slot])
        slot = np.repeat(np.arange(S), counts)
        step = np.concatenate([np.arange(1, c + 1) for c in counts])
        order = np.lexsort((step, slot, -(dv / dt)))
        dt, dv, slot, step = dt[order], dv[order], slot[order], step[order]
        gof = slot_gof[slot]
        hs = np.arange(H)[:, None]
        while len(dt):
            # cumulative spend charged to each prefix constraint, in greedy order
            cum = np.cumsum((gof[None, :] <= hs) * dt[None, :], axis=1)
            over = cum > rem[:, None]
            first = np.where(over.any(axis=1), over.argmax(axis=1), len(dt))
            i = int(first.min())
            if i > 0:
                rem = rem - cum[:, i - 1]
                value += float(dv[:i].sum())
                np.maximum.at(progress, slot[:i], step[:i])
            if i == len(dt):
                break
            g = gof[i]
            room = max(0.0, float(rem[g:].min()))
            if room > 0:
                frac = room / dt[i]
                partial[slot[i]] = frac
                value += float(dv[i]) * frac
                rem[g:] -= room
            tight = np.flatnonzero(rem <= 0)
            if len(tight) == 0:
                # numerical corner: treat the overflowing prefix as exhausted
                tight = np.array([int(np.argmin(rem))])
            fresh = tight[tight_eff[tight] == 0]
            tight_eff[fresh] = dv[i] / dt[i]
            blocked = gof <= tight.max()
            keep = ~blocked
            keep[: i + 1] = False
            dt, dv, slot, step, gof = dt[keep], dv[keep], slot[keep], step[keep], gof[keep]
    w = np.zeros((S, J))
    for s, p in enumerate(per_slot):
        hull = p[0]
        c = progress[s]
        w[s, hull[c]] = 1.0 - partial[s]
        if partial[s] > 0:
            w[s, hull[c + 1]] = partial[s]
    prices = np.maximum.accumulate(tight_eff[::-1])[::-1]
    return w, value, prices


def _allowed_from_fixes(problem: ProblemInstance, fixes) -> np.ndarray:
    allowed = problem.allowed.copy()
    if fixes is None:
        return allowed
    if isinstance(fixes, np.ndarray):
        return allowed & fixes
    for s, options in fixes.items():
        mask = np.zeros(problem.n_options, dtype=bool)
        mask[list(options)] = True
        allowed[s] &= mask
    return allowed


def solve_relaxation(problem: ProblemInstance, fixes=None) -> tuple[np.ndarray, float]:
    """Fractional option weights and the relaxation's optimal weighted quality.

    ``fixes`` is either a boolean (S, 2R) mask or a mapping slot -> allowed
    option indices. Raises :class:`Infeasible` if the relaxation is empty.
    """
    out = _lp(problem, problem.gain, _allowed_from_fixes(problem, fixes))
    if out is None:
        raise Infeasible("relaxation has no feasible point")
    return out[0], out[1]


# -- branch and bound -----------------------------------------------------------

@dataclass
class _SearchResult:
    assign: tuple[int, ...] | None
    value: float
    root_bound: float | None
    nodes: int


def _search(problem: ProblemInstance, objective: np.ndarray, exact_value, allowed: np.ndarray,
            floor: float | None = None, incumbent=None) -> _SearchResult:
    """Best-bound-first branch-and-bound over option indicators.

    ``exact_value(assign)`` returns the true objective of a feasible integer
    plan or None if the plan is infeasible. Without ``floor`` the search
    proves optimality; with ``floor`` it stops at the first plan whose exact
    value reaches it.

    Two standard accelerations keep the tree small without changing the
    answer. Each fractional node rounds down to its cheaper hull options for
    an early incumbent. Once a threshold is known, the node's prices give a
    Lagrangian bound per option, and options that cannot beat the threshold
    are dropped from the subtree.
    """
    best_assign, best_val = None, -math.inf
    if incumbent is not None:
        best_assign, best_val = incumbent
    counter = itertools.count()
    nodes = 0
    cache = {}
    tcost = problem.time_cost
    gof_of = problem.slot_gof
    caps = problem.caps() + LP_FEAS_TOL

    def solve(mask):
        nonlocal nodes
        nodes += 1
        return _lp(problem, objective, mask, cache)

    def threshold():
        if floor is not None:
            return floor - _FLOOR_SLACK * max(1.0, abs(floor))
        if best_assign is None:
            return None
        return best_val + GAP_TOL * max(1.0, abs(best_val))

    def pruned(bound):
        thr = threshold()
        if thr is None:
            return False
        return bound < thr if floor is not None else bound <= thr

    def fix_by_prices(mask, prices):
        thr = threshold()
        if thr is None:
            return mask
        reduced = np.where(mask, objective - prices[gof_of][:, None] * tcost, -np.inf)
        best = reduced.max(axis=1)
        lam = prices - np.append(prices[1:], 0.0)
        lagrange = float(best.sum() + lam @ caps)
        # margin guards the bound against rounding in the sums above
        cut = thr - 1e-12 * max(1.0, abs(thr))
        option_bound = lagrange - (best[:, None] - reduced)
        return mask & (option_bound >= cut)

    def rounded(w):
        pos = w > 0
        return tuple(int(j) for j in np.where(pos, tcost, np.inf).argmin(axis=1))

    root = solve(allowed)
    if root is None:
        return _SearchResult(best_assign, best_val, None, nodes)
    root_bound = root[1]
    heap = [(-root[1], next(counter), allowed, root[0], root[2])]

    while heap:
        neg_bound, _, mask, w, prices = heapq.heappop(heap)
        if pruned(-neg_bound):
            continue
        top = w.max(axis=1)
        frac = np.flatnonzero(top < 1 - INT_TOL)
        if len(frac) == 0:
            assign = tuple(int(j) for j in w.argmax(axis=1))
            val = exact_value(assign)
            if val is not None:
                if floor is not None:
                    if val >= floor:
                        return _SearchResult(assign, val, root_bound, nodes)
                elif val > best_val:
                    best_assign, best_val = assign, val
                continue
            # LP-integral but rejected by the exact recursion: keep splitting
            open_slots = np.flatnonzero(mask.sum(axis=1) > 1)
            if len(open_slots) == 0:
                continue
            s = int(open_slots[0])
        else:
            guess = rounded(w)
            est = float(objective[np.arange(len(guess)), guess].sum())
            if (est >= floor) if floor is not None else (est > best_val):
                val = exact_value(guess)
                if val is not None:
                    if floor is not None:
                        if val >= floor:
                            return _SearchResult(guess, val, root_bound, nodes)
                    elif val > best_val:
                        best_assign, best_val = guess, val
                        if pruned(-neg_bound):
                            continue
            # most fractional: smallest top weight, lowest slot on ties
            s = int(frac[np.argmin(top[frac])])
        mask = fix_by_prices(mask, prices)
        j = int(np.argmax(w[s]))
        fix = mask.copy()
        fix[s] = False
        fix[s, j] = mask[s, j]
        rest = mask.copy()
        rest[s, j] = False
        for child in (fix, rest):
            if not child[s].any():
                continue
            out = solve(child)
            if out is None or pruned(out[1]):
                continue
            heapq.heappush(heap, (-out[1], next(counter), child, out[0], out[2]))
    return _SearchResult(best_assign, best_val, root_bound, nodes)


def _level_mask(problem: ProblemInstance, s: int, level: int) -> np.ndarray:
    m = np.zeros(problem.n_options, dtype=bool)
    m[2 * (level - 1): 2 * level] = True
    return m


def _canonicalize(problem: ProblemInstance, assign, num_star: float):
    """Move from any optimal plan to the tie-break-preferred one."""
    nodes = 0
    S = problem.n_slots
    gain = problem.gain
    neg_time = -problem.time_cost

    def numerator_of(a):
        ok, num, _ = evaluate(problem, a)
        return num if ok else None

    def neg_tu_of(a):
        ok, _, tu = evaluate(problem, a)
        return -tu if ok else None

    floor = num_star - _tol(num_star)
    mask = problem.allowed.copy()
    for s in range(S):
        cur = assign[s] // 2 + 1
        for level in range(problem.levels, cur, -1):
            trial = mask.copy()
            trial[s] &= _level_mask(problem, s, level)
            if not trial[s].any():
                continue
            res = _search(problem, gain, numerator_of, trial, floor=floor)
            nodes += res.nodes
            if res.assign is not None:
                assign = res.assign
                break
        mask[s] &= _level_mask(problem, s, assign[s] // 2 + 1)

    _, _, tu = evaluate(problem, assign)
    res = _search(problem, neg_time, neg_tu_of, mask, incumbent=(assign, -tu))
    nodes += res.nodes
    assign = res.assign
    tu_star = -res.value
    floor = -(tu_star + _tol(tu_star))
    for s in range(S):
        if assign[s] % 2 == 1 and mask[s, assign[s] - 1]:
            trial = mask.copy()
            trial[s] = False
            trial[s, assign[s] - 1] = True
            res = _search(problem, neg_time, neg_tu_of, trial, floor=floor)
            nodes += res.nodes
            if res.assign is not None:
                assign = res.assign
        keep = np.zeros(problem.n_options, dtype=bool)
        keep[assign[s]] = True
        mask[s] &= keep
    return assign, nodes


def _to_plan(problem: ProblemInstance, assign) -> Plan:
    return Plan({slot: option_choice(j) for slot, j in zip(problem.slots, assign)})


def _infeasible(nodes: int, bound: float | None = None) -> Solution:
    return Solution(plan=Plan({}), objective=-math.inf, bound=-math.inf if bound is None else bound,
                    numerator=-math.inf, bound_numerator=-math.inf, node_count=nodes,
                    status=Status.INFEASIBLE)


def _solution(problem: ProblemInstance, assign, root_bound: float, nodes: int) -> Solution:
    _, num, _ = evaluate(problem, assign)
    bound = qoe_value(problem, root_bound) if root_bound > 0 else -math.inf
    return Solution(plan=_to_plan(problem, assign), objective=qoe_value(problem, num),
                    bound=bound, numerator=num, bound_numerator=root_bound, node_count=nodes,
                    status=Status.OPTIMAL, assignment=tuple(assign))


def _undominated(problem: ProblemInstance) -> np.ndarray:
    """Drop options another option of the same slot beats on both value and
    time. The optimal value is unchanged; ties are restored by the
    canonicalization pass, which sees every option again."""
    t = problem.time_cost
    g = problem.gain
    keep = problem.allowed.copy()
    J = problem.n_options
    idx = np.arange(J)
    for s in range(problem.n_slots):
        a = problem.allowed[s]
        ts, gs = t[s][:, None], g[s][:, None]
        # beats[i, j]: option j dominates option i
        no_worse = (g[s][None, :] >= gs) & (t[s][None, :] <= ts)
        better = (g[s][None, :] > gs) | (t[s][None, :] < ts) | (idx[None, :] < idx[:, None])
        beats = no_worse & better & a[None, :]
        keep[s] &= ~beats.any(axis=1)
    return keep


def branch_and_bound(problem: ProblemInstance) -> Solution:
    """Exact optimum over integer plans, canonicalized by the tie-break."""
    def numerator_of(a):
        ok, num, _ = evaluate(problem, a)
        return num if ok else None

    res = _search(problem, problem.gain, numerator_of, _undominated(problem))
    if res.assign is None:
        return _infeasible(res.nodes)
    assign, extra = _canonicalize(problem, res.assign, res.value)
    return _solution(problem, assign, res.root_bound, res.nodes + extra)


def solve_compressed_only(problem: ProblemInstance) -> Solution:
    """The compressed-tiles-only baseline: raw options are removed."""
    return branch_and_bound(problem.without_raw())


# -- enumeration oracle ---------------------------------------------------------

def brute_force(problem: ProblemInstance, cap: int = ENUM_CAP,
                chunk: int = 1 << 18) -> Solution:
    """Enumerate every integer plan; same ranking as :func:`branch_and_bound`."""
    options = [np.flatnonzero(problem.allowed[s]) for s in range(problem.n_slots)]
    sizes = [len(o) for o in options]
    total = math.prod(sizes)
    if total > cap:
        raise TooLarge(f"{total} assignments exceed the enumeration cap {cap}")
    if total == 0:
        return _infeasible(0)
    strides = np.cumprod([1] + sizes[::-1])[:-1][::-1]
    gof_slots = _gof_slot_lists(problem)
    ti = problem.gof_duration

    def decode(idx):
        cols = [options[s][(idx // strides[s]) % sizes[s]] for s in range(problem.n_slots)]
        return np.stack(cols, axis=1) if cols else np.zeros((len(idx), 0), dtype=int)

    def score(a):
        tb = np.full(len(a), problem.initial_buffer)
        ok = np.ones(len(a), dtype=bool)
        tu_total = np.zeros(len(a))
        for pos, slots in enumerate(gof_slots):
            bits = np.zeros(len(a))
            comp = np.zeros(len(a))
            for s in slots:
                bits = bits + problem.bits[s, a[:, s]]
                comp = comp + problem.compute[s, a[:, s]]
            _, _, tu = time_terms(bits, comp, problem.bandwidth[pos], ti, problem.capacity)
            tb = buffer_step(tb, tu, ti)
            tu_total = tu_total + tu
            ok &= tb >= EPS_BUF
        num = np.zeros(len(a))
        for s in range(problem.n_slots):
            num = num + problem.gain[s, a[:, s]]
        return ok, num, tu_total

    best = -math.inf
    for start in range(0, total, chunk):
        ok, num, _ = score(decode(np.arange(start, min(total, start + chunk))))
        if ok.any():
            best = max(best, float(num[ok].max()))
    if best == -math.inf:
        return _infeasible(total)

    floor = best - _tol(best)
    keep_a, keep_tu = [], []
    for start in range(0, total, chunk):
        a = decode(np.arange(start, min(total, start + chunk)))
        ok, num, tu = score(a)
        sel = ok & (num >= floor)
        keep_a.append(a[sel])
        keep_tu.append(tu[sel])
    a = np.concatenate(keep_a)
    tu = np.concatenate(keep_tu)

    levels = a // 2
    for s in range(problem.n_slots):
        sel = levels[:, s] == levels[:, s].max()
        a, tu, levels = a[sel], tu[sel], levels[sel]
    tu_star = float(tu.min())
    sel = tu <= tu_star + _tol(tu_star)
    a = a[sel]
    for s in range(problem.n_slots):
        sel = (a[:, s] % 2) == (a[:, s] % 2).min()
        a = a[sel]
    assign = tuple(int(j) for j in a[0])

    out = _lp(problem, problem.gain, problem.allowed)
    root = out[1] if out is not None else math.inf
    return _solution(problem, assign, root, total)


# -- horizon / online drivers -----------------------------------------------------

def plan_session(manifest: VideoManifest, traces: ScenarioTraces, device: DeviceProfile,
                 b: float, mode: str = "horizon", scheme: str = "joint",
                 visibility: VisibilityMatrix | None = None,
                 weights: WeightSet | None = None) -> Solution:
    """Plan the whole session.

    ``horizon`` solves all GOFs jointly; ``online`` re-solves the remaining
    horizon before each GOF with the buffer reached so far and commits only
    that GOF's choices. ``scheme`` is ``joint`` or ``compressed`` (baseline).
    """
    if mode not in ("horizon", "online"):
        raise ValueError(f"unknown mode {mode!r}")
    if scheme not in ("joint", "compressed"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if visibility is None:
        visibility = compute_visibility(manifest, traces)
    if weights is None:
        weights = compute_weights(manifest, traces, visibility)
    solver = branch_and_bound if scheme == "joint" else solve_compressed_only

    def solve_from(first_gof, buffer_s):
        try:
            problem = build_problem(manifest, traces, device, visibility, weights, buffer_s,
                                    first_gof=first_gof)
        except NoVisibleTiles:
            return None, None
        return problem, solver(problem)

    if mode == "horizon":
        problem, sol = solve_from(1, b)
        if sol is None:
            return Solution(Plan({}), 0.0, 0.0, 0.0, 0.0, 0, Status.OPTIMAL)
        return sol

    choices = {}
    nodes = 0
    tb = b
    first = None
    ti = manifest.gof_duration
    for g in range(1, manifest.n_gofs + 1):
        problem, sol = solve_from(g, tb)
        if sol is not None:
            nodes += sol.node_count
            if first is None:
                first = sol
            if not sol.optimal:
                return _infeasible(nodes, first.bound)
            choices.update({gk: c for gk, c in sol.plan.choices.items() if gk[0] == g})
        plan_g = [(k, c) for (gg, k), c in choices.items() if gg == g]
        bits, comp = gof_sums(manifest.gof(g), plan_g)
        _, _, tu = time_terms(bits, comp, traces.bandwidth_mbps[g - 1], ti, device.capacity)
        tb = buffer_step(tb, tu, ti)
    plan = Plan(choices)
    if first is None:
        return Solution(plan, 0.0, 0.0, 0.0, 0.0, 0, Status.OPTIMAL)
    num, den = qoe_terms(manifest, weights, visibility, plan)
    objective = math.log(num / den) if den > 0 else 0.0
    return Solution(plan=plan, objective=objective, bound=first.bound, numerator=num,
                    bound_numerator=first.bound_numerator, node_count=nodes,
                    status=Status.OPTIMAL)
