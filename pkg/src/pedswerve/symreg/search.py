"""Island-model genetic programming with an evolve/simplify/optimise cycle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..errors import InvalidConfigError, InvalidInputError
from .constants import optimize_constants
from .expr import UNARY_OPS, Binary, Constant, compile_expr, format_expr, parse_expr, replace_at, subtrees
from .operators import crossover, mutate, random_tree
from .simplify import simplify

MIN_SAMPLES = 10


@dataclass(frozen=True)
class SymRegConfig:
    """Search settings.

    ``population_size`` is the total across islands. ``parsimony_init`` is the
    per-node penalty as a fraction of the target variance; the live value is
    kept within ``[1e-8, 1e2]`` times that variance.
    """

    population_size: int = 200
    n_islands: int = 4
    generations: int = 200
    max_complexity: int = 25
    parsimony_init: float = 1e-4
    p_crossover: float = 0.3
    tournament_size: int = 5
    n_elite: int = 2
    migration_interval: int = 10
    n_migrants: int = 2
    simplify_interval: int = 5
    optimize_fraction: float = 0.1
    optimize_probability: float = 0.1
    constant_opt_iters: int = 50
    constant_restarts: int = 1
    init_depth: int = 3
    const_scale: float = 1.0
    unary_ops: tuple = UNARY_OPS
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise InvalidConfigError("population_size must be >= 2")
        if self.n_islands < 1 or self.population_size // self.n_islands < 2:
            raise InvalidConfigError("each island needs at least 2 individuals")
        if self.generations < 1:
            raise InvalidConfigError("generations must be >= 1")
        if self.max_complexity < 3:
            raise InvalidConfigError("max_complexity must be >= 3")
        if not 0 <= self.p_crossover <= 1:
            raise InvalidConfigError("p_crossover must lie in [0, 1]")
        if self.seed is None:
            raise InvalidConfigError("an explicit seed is required")
        object.__setattr__(self, "unary_ops", tuple(self.unary_ops))
        if any(op not in UNARY_OPS for op in self.unary_ops):
            raise InvalidConfigError(f"unary_ops must be drawn from {UNARY_OPS}")
        for name in ("migration_interval", "simplify_interval", "tournament_size"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1")

    @property
    def island_size(self):
        return self.population_size // self.n_islands


@dataclass
class Individual:
    expr: object
    mse: float
    complexity: int
    fitness: float = math.inf
    optimized: bool = field(default=False, compare=False)

    def to_json(self):
        return {"expr": format_expr(self.expr), "mse": self.mse, "complexity": self.complexity}


class _Evaluator:
    def __init__(self, x, y):
        self.x = np.ascontiguousarray(x, dtype=float)
        self.y = np.ascontiguousarray(y, dtype=float)
        self.cache = {}

    def mse(self, e):
        m = self.cache.get(e)
        if m is None:
            code, consts = compile_expr(e)
            with np.errstate(all="ignore"):
                m = kernels.mse_program(code, consts, self.x, self.y)
            if not math.isfinite(m):
                m = math.inf
            self.cache[e] = m
        return m

    def individual(self, e, parsimony, optimized=False):
        m = self.mse(e)
        c = e.complexity
        return Individual(e, m, c, m + parsimony * c, optimized)


def pareto_front(individuals):
    """Non-dominated members by ``(mse, complexity)``, sorted by complexity."""
    best = {}
    for ind in individuals:
        if not math.isfinite(ind.mse):
            continue
        cur = best.get(ind.complexity)
        if cur is None or ind.mse < cur.mse:
            best[ind.complexity] = ind
    front, floor = [], math.inf
    for c in sorted(best):
        if best[c].mse < floor:
            front.append(best[c])
            floor = best[c].mse
    return front


class _HallOfFame:
    def __init__(self):
        self.best = {}

    def add(self, ind):
        if not math.isfinite(ind.mse):
            return
        cur = self.best.get(ind.complexity)
        if cur is None or ind.mse < cur.mse:
            self.best[ind.complexity] = Individual(ind.expr, ind.mse, ind.complexity, ind.fitness, ind.optimized)

    def front(self):
        return pareto_front(self.best.values())

    def best_mse(self):
        return min((i.mse for i in self.best.values()), default=math.inf)


class _ParsimonyController:
    """Adjusts the per-node penalty from progress over a sliding window of generations."""

    WINDOW = 5
    FACTOR = 1.2

    def __init__(self, init, var):
        scale = var if var > 0 else 1.0
        self.lo, self.hi = 1e-8 * scale, 1e2 * scale
        self.value = min(max(init * scale, self.lo), self.hi)
        self.history = []

    def update(self, best_mse, best_complexity):
        self.history.append((best_mse, best_complexity))
        if len(self.history) <= self.WINDOW or len(self.history) % self.WINDOW:
            return self.value
        old_mse, old_cx = self.history[-1 - self.WINDOW]
        gain = (old_mse - best_mse) / old_mse if old_mse > 0 and math.isfinite(old_mse) else 0.0
        if gain < 0.01 and best_complexity > old_cx:
            self.value *= self.FACTOR
        elif gain < 0.01 and best_complexity < 5:
            self.value /= self.FACTOR
        self.value = min(max(self.value, self.lo), self.hi)
        return self.value


def _tournament(pop, rng, k):
    idx = rng.integers(len(pop), size=min(k, len(pop)))
    return min((pop[i] for i in idx), key=lambda ind: ind.fitness)


def _refit(pop, parsimony):
    for ind in pop:
        ind.fitness = ind.mse + parsimony * ind.complexity


def run_search(x, y, cfg=None):
    """Evolve expressions for ``y(x)`` and return the Pareto front, simplest first.

    Each island owns an independent random stream derived from ``cfg.seed`` and
    its index, so the result is fully determined by ``(x, y, cfg)``.
    """
    cfg = cfg or SymRegConfig()
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("x and y must be 1-D arrays of equal length")
    if len(x) < MIN_SAMPLES:
        raise InvalidInputError(f"need at least {MIN_SAMPLES} samples, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("samples must be finite")

    ev = _Evaluator(x, y)
    ctrl = _ParsimonyController(cfg.parsimony_init, float(np.var(y)))
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_islands)]
    hof = _HallOfFame()
    n_opt = max(1, int(math.ceil(cfg.optimize_fraction * cfg.island_size)))
    n_elite = min(cfg.n_elite, cfg.island_size - 1)

    def optimise(ind, rng):
        e = optimize_constants(ind.expr, ev.x, ev.y, rng=rng, restarts=cfg.constant_restarts,
                               maxiter=cfg.constant_opt_iters)
        return ev.individual(e, ctrl.value, optimized=True)

    islands = []
    for rng in rngs:
        pop = []
        while len(pop) < cfg.island_size:
            e = simplify(random_tree(rng, int(rng.integers(1, cfg.init_depth + 1)), cfg.const_scale,
                                        unary_ops=tuple(cfg.unary_ops)))
            if e.complexity <= cfg.max_complexity:
                pop.append(ev.individual(e, ctrl.value))
        islands.append(pop)
        for ind in pop:
            hof.add(ind)

    for gen in range(1, cfg.generations + 1):
        for i, rng in enumerate(rngs):
            pop = sorted(islands[i], key=lambda ind: ind.fitness)
            nxt = pop[:n_elite]
            members = {ind.expr for ind in nxt}
            attempts = 0
            while len(nxt) < cfg.island_size:
                attempts += 1
                parent = _tournament(pop, rng, cfg.tournament_size)
                if rng.random() < cfg.p_crossover:
                    other = _tournament(pop, rng, cfg.tournament_size)
                    child = crossover(parent.expr, other.expr, rng, cfg.max_complexity)
                else:
                    child = mutate(parent.expr, rng, cfg.max_complexity, cfg.const_scale,
                                   unary_ops=tuple(cfg.unary_ops))
                if child in members and attempts < 4 * cfg.island_size:
                    continue
                members.add(child)
                if child == parent.expr:
                    ind = Individual(parent.expr, parent.mse, parent.complexity, parent.fitness,
                                     parent.optimized)
                else:
                    ind = ev.individual(child, ctrl.value)
                    if rng.random() < cfg.optimize_probability and math.isfinite(ind.mse):
                        ind = optimise(ind, rng)
                nxt.append(ind)
            if gen % cfg.simplify_interval == 0:
                nxt = [ind if (s := simplify(ind.expr)) == ind.expr
                       else ev.individual(s, ctrl.value, ind.optimized) for ind in nxt]
            nxt.sort(key=lambda ind: ind.fitness)
            for j in range(min(n_opt, len(nxt))):
                if not nxt[j].optimized and math.isfinite(nxt[j].mse):
                    nxt[j] = optimise(nxt[j], rng)
            islands[i] = nxt
            for ind in nxt:
                hof.add(ind)

        if cfg.n_islands > 1 and gen % cfg.migration_interval == 0:
            emigrants = [sorted(p, key=lambda ind: ind.fitness)[: cfg.n_migrants] for p in islands]
            for i in range(cfg.n_islands):
                incoming = emigrants[i - 1]
                pop = sorted(islands[i], key=lambda ind: ind.fitness)
                keep = pop[: len(pop) - len(incoming)]
                islands[i] = keep + [Individual(m.expr, m.mse, m.complexity, m.fitness, m.optimized)
                                     for m in incoming]

        leader = min((ind for p in islands for ind in p), key=lambda ind: ind.fitness)
        before = ctrl.value
        ctrl.update(hof.best_mse(), leader.complexity)
        if ctrl.value != before:
            for p in islands:
                _refit(p, ctrl.value)

    final = [ev.individual(simplify(ind.expr), ctrl.value, ind.optimized) for ind in hof.best.values()]
    return pareto_front(final)


def prune_insignificant_terms(e, x, y, tol=1e-2, rng=None):
    """Greedily drop additive or multiplicative subterms that barely matter.

    A deletion replaces a ``+`` or ``*`` node by one operand. It is kept if,
    after re-optimising constants, the MSE has risen by no more than ``tol``
    times the original MSE. Larger deletions are tried first.
    """
    if not tol > 0:
        raise InvalidConfigError("tol must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ev = _Evaluator(x, y)
    base = ev.mse(e)
    if not math.isfinite(base):
        return e
    cur, cur_mse = e, base
    while True:
        cands = []
        for path, node in subtrees(cur):
            if isinstance(node, Binary):
                for keep in (node.left, node.right):
                    cands.append((node.complexity - keep.complexity, path, keep))
        cands.sort(key=lambda t: -t[0])
        for _, path, keep in cands:
            trial = simplify(replace_at(cur, path, keep))
            if any(isinstance(n, Constant) for _, n in subtrees(trial)):
                trial = optimize_constants(trial, x, y, rng=rng)
            m = ev.mse(trial)
            if m <= cur_mse + tol * base:
                cur, cur_mse = trial, m
                break
        else:
            return cur


def front_to_json(front):
    return [ind.to_json() for ind in front]


def front_from_json(items):
    out = []
    for it in items:
        e = parse_expr(it["expr"])
        out.append(Individual(e, float(it["mse"]), int(it.get("complexity", e.complexity))))
    return out
