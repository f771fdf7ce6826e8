"""Six fixed-depth expression-search algorithms with multi-threaded execution.

Every worker thread runs an independent instance of the configured algorithm
with a derived seed; all workers share one :class:`SharedState` holding the
best-so-far result and the fitted-constant cache.  The concurrent variant of
MCTS additionally shares its visit/score statistics and breaks ties among
unvisited actions at random so threads fan out over different branches.
"""

from __future__ import annotations

import math
import random
import threading
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .symdiff import simplify
from .evaluate import Dataset
from .expr import (
    Alphabet,
    Expr,
    Notation,
    Token,
    legal_tokens,
    make_expr,
    sample_complete,
    sequence_depth,
    span_at,
    token_path_depths,
)
from .pde import MseBreakdown, ObjectiveConfig, PdeCase, case_alphabet, objective

ALGORITHMS = ("rs", "mcts", "cmcts", "pso", "gp", "sa")


def _mix(seed: int, salt: int) -> int:
    """splitmix64-style derivation for deterministic per-worker seeds."""
    z = (seed + salt * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _key_salt(key: str) -> int:
    return zlib.crc32(key.encode("utf-8"))


@dataclass(frozen=True)
class MctsParams:
    c_initial: float = 1.4
    stall_iters: int = 500  # 1000 for the concurrent variant
    c_increment: float = 1.4
    c_reset: float = 1.4


@dataclass(frozen=True)
class PsoParams:
    swarm: int = 50
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    init_range: float = 10.0
    dim_cap: int = 2047  # particle components wrap beyond this length


@dataclass(frozen=True)
class GpParams:
    population: int = 200
    children: int = 200  # pool after crossover/mutation ~= 2x population
    crossover_prob: float = 0.7
    pair_retries: int = 20


@dataclass(frozen=True)
class SaParams:
    temp_initial: float = 1.0
    cooling: float = 0.999
    temp_floor: float = 1e-6
    stall_reheat: int = 2000


@dataclass(frozen=True)
class ConstFitParams:
    swarm: int = 20
    iterations: int = 5
    inertia: float = 0.7
    cognitive: float = 1.5
    social: float = 1.5
    init_range: float = 10.0


@dataclass(frozen=True)
class SearchConfig:
    algorithm: str
    depth: int
    notation: Notation
    token_mode: str = "vars+const"
    threads: int = 1
    time_budget: float = 5.0
    seed: int = 0
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    seed_expr: Optional[Expr] = None
    max_evals: Optional[int] = None  # evaluation cap; makes runs reproducible
    stop_below: Optional[float] = None
    mcts: Optional[MctsParams] = None
    pso: PsoParams = field(default_factory=PsoParams)
    gp: GpParams = field(default_factory=GpParams)
    sa: SaParams = field(default_factory=SaParams)
    const_fit: ConstFitParams = field(default_factory=ConstFitParams)

    def resolved_mcts(self) -> MctsParams:
        if self.mcts is not None:
            return self.mcts
        return MctsParams(stall_iters=1000 if self.algorithm == "cmcts" else 500)


@dataclass(frozen=True)
class SearchResult:
    expr: Optional[Expr]
    simplified: Optional[Expr]
    breakdown: Optional[MseBreakdown]
    consts: tuple[float, ...]
    elapsed: float
    evaluations: int
    config: SearchConfig
    improvements: tuple[tuple[float, float], ...]

    @property
    def empty(self) -> bool:
        return self.expr is None


class SharedState:
    """State shared by all workers of one run.

    The best-so-far update is a compare-and-swap under a lock, so its MSE is
    monotone non-increasing.  The constant cache is write-once per key in
    effect: fits are deterministic given the key, so a racing second writer
    stores the same value.  The concurrent-MCTS statistics are updated without
    locking; lost increments are harmless, the dictionaries themselves stay
    consistent under the interpreter lock.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.best_total = math.inf
        self.best: Optional[tuple[str, Expr, tuple[float, ...], MseBreakdown]] = None
        self.evaluations = 0
        self.const_cache: dict[str, tuple[tuple[float, ...], float]] = {}
        self.stop = threading.Event()
        # concurrent-MCTS maps: N(s), N(s,a), Q(s,a)
        self.visits: dict[str, int] = {}
        self.action_visits: dict[tuple[str, str], int] = {}
        self.action_value: dict[tuple[str, str], float] = {}

    def offer(
        self,
        key: str,
        expr: Expr,
        consts: tuple[float, ...],
        breakdown: MseBreakdown,
    ) -> bool:
        with self._lock:
            self.evaluations += 1
            if self.best is None or breakdown.total < self.best_total:
                self.best_total = breakdown.total
                self.best = (key, expr, consts, breakdown)
                return True
            return False

    def snapshot_best(self):
        with self._lock:
            return self.best, self.best_total, self.evaluations

    def cache_get(self, key: str):
        return self.const_cache.get(key)

    def cache_put(self, key: str, consts: tuple[float, ...], total: float) -> None:
        with self._lock:
            self.const_cache[key] = (consts, total)


def pso_minimize(
    fn: Callable[[Sequence[float]], float],
    dim: int,
    rng: random.Random,
    swarm: int,
    iterations: int,
    inertia: float,
    cognitive: float,
    social: float,
    init_range: float,
) -> tuple[list[float], float]:
    """Plain particle-swarm minimization of a black-box function."""
    pos = [[rng.uniform(-init_range, init_range) for _ in range(dim)] for _ in range(swarm)]
    vel = [[0.0] * dim for _ in range(swarm)]
    pbest = [list(p) for p in pos]
    pbest_f = [fn(p) for p in pos]
    g_idx = min(range(swarm), key=lambda i: (pbest_f[i], i))
    gbest, gbest_f = list(pbest[g_idx]), pbest_f[g_idx]
    for _ in range(iterations):
        for i in range(swarm):
            v, p, pb = vel[i], pos[i], pbest[i]
            for j in range(dim):
                r1, r2 = rng.random(), rng.random()
                v[j] = (
                    inertia * v[j]
                    + cognitive * r1 * (pb[j] - p[j])
                    + social * r2 * (gbest[j] - p[j])
                )
                p[j] += v[j]
            f = fn(p)
            if f < pbest_f[i]:
                pbest[i] = list(p)
                pbest_f[i] = f
                if f < gbest_f:
                    gbest, gbest_f = list(p), f
    return gbest, gbest_f


def fit_constants(
    e: Expr,
    case: PdeCase,
    data: Dataset,
    shared: SharedState,
    config: SearchConfig,
) -> tuple[float, ...]:
    """Fit the learnable-constant slots of ``e`` by a short PSO run.

    Results are cached in the shared state under the expression key; the fit
    seed is derived from the key so every thread computes the same vector.
    """
    if e.n_slots == 0:
        return ()
    key = e.key
    cached = shared.cache_get(key)
    if cached is not None:
        return cached[0]
    p = config.const_fit
    rng = random.Random(_mix(config.seed, _key_salt(key)))

    def score(vector: Sequence[float]) -> float:
        return objective(e, case, data, vector, config.objective).total

    best, best_f = pso_minimize(
        score, e.n_slots, rng,
        swarm=p.swarm, iterations=p.iterations, inertia=p.inertia,
        cognitive=p.cognitive, social=p.social, init_range=p.init_range,
    )
    consts = tuple(best)
    shared.cache_put(key, consts, best_f)
    return consts


def select_action_cmcts(
    state_key: str,
    legal: Sequence[Token],
    shared: SharedState,
    c: float,
    rng: random.Random,
) -> Token:
    """Uniform random among unvisited actions, else UCT argmax (ties: lowest index)."""
    unvisited = [tok for tok in legal if shared.action_visits.get((state_key, tok.text), 0) == 0]
    if unvisited:
        if len(unvisited) == 1:
            return unvisited[0]
        return unvisited[rng.randrange(len(unvisited))]
    n_state = max(shared.visits.get(state_key, 0), 1)
    best_tok = legal[0]
    best_score = -math.inf
    for tok in legal:
        n = shared.action_visits[(state_key, tok.text)]
        q = shared.action_value.get((state_key, tok.text), 0.0)
        score = q / n + c * math.sqrt(math.log(n_state) / n)
        if score > best_score:
            best_score = score
            best_tok = tok
    return best_tok


# ---------------------------------------------------------------------------
# run context shared by the per-thread algorithm loops


class _RunContext:
    def __init__(self, config: SearchConfig, case: PdeCase, data: Dataset,
                 alphabet: Alphabet, shared: SharedState, start: float):
        self.config = config
        self.case = case
        self.data = data
        self.alphabet = alphabet
        self.shared = shared
        self.start = start
        self.deadline = start + config.time_budget

    def keep_going(self) -> bool:
        if self.shared.stop.is_set() or time.monotonic() >= self.deadline:
            return False
        if self.config.max_evals is not None:
            return self.shared.evaluations < self.config.max_evals
        return True


class _Scorer:
    """Worker-local scoring front end; logs this worker's own improvements."""

    def __init__(self, ctx: _RunContext):
        self.ctx = ctx
        self.own_best: Optional[float] = None
        self.log: list[tuple[float, float]] = []

    def score(self, e: Expr) -> MseBreakdown:
        ctx = self.ctx
        consts: tuple[float, ...] = ()
        if e.n_slots:
            consts = fit_constants(e, ctx.case, ctx.data, ctx.shared, ctx.config)
        breakdown = objective(e, ctx.case, ctx.data, consts, ctx.config.objective)
        ctx.shared.offer(e.key, e, consts, breakdown)
        if self.own_best is None or breakdown.total < self.own_best:
            self.own_best = breakdown.total
            self.log.append((time.monotonic() - ctx.start, breakdown.total))
        target = ctx.config.stop_below
        if target is not None and breakdown.total <= target:
            ctx.shared.stop.set()
        return breakdown


def _random_expr(rng: random.Random, ctx: _RunContext) -> Expr:
    return sample_complete(rng, ctx.config.notation, ctx.config.depth, ctx.alphabet)


def _mutate_span(rng: random.Random, e: Expr, budget: int, alphabet: Alphabet) -> Expr:
    """Replace one complete token span with a fresh random subexpression that
    fits the remaining depth allowance at that position."""
    tokens = e.tokens
    idx = rng.randrange(len(tokens))
    start, end = span_at(tokens, idx, e.notation)
    allowed = budget - token_path_depths(tokens, e.notation)[idx]
    repl = sample_complete(rng, e.notation, rng.randint(0, max(allowed, 0)), alphabet)
    return make_expr(tokens[:start] + repl.tokens + tokens[end:], e.notation, budget)


# ---------------------------------------------------------------------------
# algorithms (one worker instance each)


def _run_rs(rng, ctx: _RunContext, scorer: _Scorer) -> None:
    while ctx.keep_going():
        scorer.score(_random_expr(rng, ctx))


def _rollout(rng, ctx: _RunContext, partial: list[Token]) -> Expr:
    cfg = ctx.config
    toks = list(partial)
    while True:
        legal = legal_tokens(toks, cfg.notation, cfg.depth, ctx.alphabet)
        if not legal:
            return make_expr(toks, cfg.notation, cfg.depth)
        toks.append(legal[rng.randrange(len(legal))])


def _run_mcts(rng, ctx: _RunContext, scorer: _Scorer, concurrent: bool) -> None:
    cfg = ctx.config
    params = cfg.resolved_mcts()
    shared = ctx.shared
    if concurrent:
        visits, action_visits, action_value = (
            shared.visits, shared.action_visits, shared.action_value,
        )
    else:
        visits, action_visits, action_value = {}, {}, {}
    c = params.c_initial
    stall = 0
    last_best = math.inf

    def uct_select(state_key: str, legal: list[Token]) -> Optional[Token]:
        unvisited = [t for t in legal if action_visits.get((state_key, t.text), 0) == 0]
        if unvisited:
            if not concurrent or len(unvisited) == 1:
                return unvisited[0]
            return unvisited[rng.randrange(len(unvisited))]
        return None

    while ctx.keep_going():
        partial: list[Token] = []
        state_key = ""
        path: list[tuple[str, str]] = []
        expr: Optional[Expr] = None
        while True:
            legal = legal_tokens(partial, cfg.notation, cfg.depth, ctx.alphabet)
            if not legal:
                expr = make_expr(partial, cfg.notation, cfg.depth)
                break
            tok = uct_select(state_key, legal)
            if tok is not None:
                path.append((state_key, tok.text))
                partial.append(tok)
                expr = _rollout(rng, ctx, partial)
                break
            n_state = max(visits.get(state_key, 0), 1)
            best_tok, best_score = legal[0], -math.inf
            for cand in legal:
                n = action_visits[(state_key, cand.text)]
                q = action_value.get((state_key, cand.text), 0.0)
                score = q / n + c * math.sqrt(math.log(n_state) / n)
                if score > best_score:
                    best_score, best_tok = score, cand
            path.append((state_key, best_tok.text))
            partial.append(best_tok)
            state_key = best_tok.text if not state_key else f"{state_key} {best_tok.text}"
        breakdown = scorer.score(expr)
        reward = 1.0 / (1.0 + breakdown.total)
        for skey, atext in path:
            visits[skey] = visits.get(skey, 0) + 1
            action_visits[(skey, atext)] = action_visits.get((skey, atext), 0) + 1
            action_value[(skey, atext)] = action_value.get((skey, atext), 0.0) + reward
        best_now = shared.best_total
        if best_now < last_best:
            last_best = best_now
            c = params.c_reset
            stall = 0
        else:
            stall += 1
            if stall >= params.stall_iters:
                c += params.c_increment
                stall = 0


def _decode_particle(vector: Sequence[float], ctx: _RunContext) -> Expr:
    cfg = ctx.config
    dim = len(vector)
    toks: list[Token] = []
    j = 0
    while True:
        legal = legal_tokens(toks, cfg.notation, cfg.depth, ctx.alphabet)
        if not legal:
            return make_expr(toks, cfg.notation, cfg.depth)
        toks.append(legal[int(abs(vector[j % dim])) % len(legal)])
        j += 1


def _run_pso(rng, ctx: _RunContext, scorer: _Scorer) -> None:
    cfg = ctx.config
    p = cfg.pso
    dim = min(2 ** (cfg.depth + 1) - 1, p.dim_cap)
    pos = [[rng.uniform(-p.init_range, p.init_range) for _ in range(dim)]
           for _ in range(p.swarm)]
    vel = [[0.0] * dim for _ in range(p.swarm)]
    pbest = [list(x) for x in pos]
    pbest_f = [math.inf] * p.swarm
    gbest, gbest_f = list(pos[0]), math.inf
    for i in range(p.swarm):
        if not ctx.keep_going():
            return
        f = scorer.score(_decode_particle(pos[i], ctx)).total
        pbest_f[i] = f
        if f < gbest_f:
            gbest, gbest_f = list(pos[i]), f
    while ctx.keep_going():
        for i in range(p.swarm):
            if not ctx.keep_going():
                return
            v, x, pb = vel[i], pos[i], pbest[i]
            for j in range(dim):
                r1, r2 = rng.random(), rng.random()
                v[j] = (p.inertia * v[j] + p.cognitive * r1 * (pb[j] - x[j])
                        + p.social * r2 * (gbest[j] - x[j]))
                x[j] += v[j]
            f = scorer.score(_decode_particle(x, ctx)).total
            if f < pbest_f[i]:
                pbest[i] = list(x)
                pbest_f[i] = f
                if f < gbest_f:
                    gbest, gbest_f = list(x), f


def _run_gp(rng, ctx: _RunContext, scorer: _Scorer) -> None:
    cfg = ctx.config
    p = cfg.gp
    budget = cfg.depth

    def crossover(a: Expr, b: Expr) -> tuple[Expr, Expr]:
        pd_a = token_path_depths(a.tokens, a.notation)
        pd_b = token_path_depths(b.tokens, b.notation)
        for _ in range(p.pair_retries):
            ia = rng.randrange(len(a.tokens))
            ib = rng.randrange(len(b.tokens))
            sa = span_at(a.tokens, ia, a.notation)
            sb = span_at(b.tokens, ib, b.notation)
            da = sequence_depth(a.tokens[sa[0]:sa[1]], a.notation)
            db = sequence_depth(b.tokens[sb[0]:sb[1]], b.notation)
            if pd_a[ia] + db <= budget and pd_b[ib] + da <= budget:
                break
        else:
            # a leaf-for-leaf swap always fits the budget
            ia = rng.choice([i for i, t in enumerate(a.tokens) if t.arity == 0])
            ib = rng.choice([i for i, t in enumerate(b.tokens) if t.arity == 0])
            sa = span_at(a.tokens, ia, a.notation)
            sb = span_at(b.tokens, ib, b.notation)
        child_a = make_expr(
            a.tokens[:sa[0]] + b.tokens[sb[0]:sb[1]] + a.tokens[sa[1]:],
            a.notation, budget)
        child_b = make_expr(
            b.tokens[:sb[0]] + a.tokens[sa[0]:sa[1]] + b.tokens[sb[1]:],
            b.notation, budget)
        return child_a, child_b

    population: list[tuple[float, int, Expr]] = []
    counter = 0
    for _ in range(p.population):
        if not ctx.keep_going():
            return
        e = _random_expr(rng, ctx)
        population.append((scorer.score(e).total, counter, e))
        counter += 1
    while ctx.keep_going():
        children: list[Expr] = []
        while len(children) < p.children and ctx.keep_going():
            if rng.random() < p.crossover_prob:
                _, _, pa = population[rng.randrange(len(population))]
                _, _, pb = population[rng.randrange(len(population))]
                children.extend(crossover(pa, pb))
            else:
                _, _, parent = population[rng.randrange(len(population))]
                children.append(_mutate_span(rng, parent, budget, ctx.alphabet))
        for child in children:
            if not ctx.keep_going():
                return
            population.append((scorer.score(child).total, counter, child))
            counter += 1
        population.sort(key=lambda item: (item[0], item[1]))
        del population[p.population:]


def _run_sa(rng, ctx: _RunContext, scorer: _Scorer) -> None:
    cfg = ctx.config
    p = cfg.sa
    if cfg.seed_expr is not None:
        budget = max(cfg.depth, cfg.seed_expr.depth)
        current = make_expr(cfg.seed_expr.tokens, cfg.seed_expr.notation, budget)
    else:
        budget = cfg.depth
        current = _random_expr(rng, ctx)
    current_f = scorer.score(current).total
    temp = p.temp_initial
    stall = 0
    while ctx.keep_going():
        neighbor = _mutate_span(rng, current, budget, ctx.alphabet)
        f = scorer.score(neighbor).total
        delta = f - current_f
        if math.isnan(delta):
            accept = False
        elif delta < 0:
            accept = True
        else:
            accept = rng.random() < math.exp(-delta / temp)
        if accept:
            current, current_f = neighbor, f
            stall = 0
        else:
            stall += 1
            if stall >= p.stall_reheat:
                temp = p.temp_initial
                stall = 0
        temp = max(temp * p.cooling, p.temp_floor)


# ---------------------------------------------------------------------------


def _worker(ctx: _RunContext, index: int, logs: list) -> None:
    cfg = ctx.config
    rng = random.Random(_mix(cfg.seed, index))
    scorer = _Scorer(ctx)
    algo = cfg.algorithm
    if algo == "rs":
        _run_rs(rng, ctx, scorer)
    elif algo == "mcts":
        _run_mcts(rng, ctx, scorer, concurrent=False)
    elif algo == "cmcts":
        _run_mcts(rng, ctx, scorer, concurrent=True)
    elif algo == "pso":
        _run_pso(rng, ctx, scorer)
    elif algo == "gp":
        _run_gp(rng, ctx, scorer)
    elif algo == "sa":
        _run_sa(rng, ctx, scorer)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    logs[index] = scorer.log


def run_search(config: SearchConfig, case: PdeCase, data: Dataset) -> SearchResult:
    """Run the configured search; returns the best expression found in budget."""
    if config.algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {config.algorithm!r}")
    if config.threads < 1 or config.time_budget <= 0:
        raise ValueError("need threads >= 1 and a positive time budget")
    alphabet = case_alphabet(case, config.token_mode)
    shared = SharedState()
    start = time.monotonic()
    ctx = _RunContext(config, case, data, alphabet, shared, start)
    logs: list = [[] for _ in range(config.threads)]
    if config.threads == 1:
        _worker(ctx, 0, logs)
    else:
        threads = [
            threading.Thread(target=_worker, args=(ctx, i, logs), daemon=True)
            for i in range(config.threads)
        ]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    elapsed = time.monotonic() - start
    best, _, evaluations = shared.snapshot_best()
    improvements = tuple(sorted(entry for log in logs for entry in log))
    if best is None:
        return SearchResult(None, None, None, (), elapsed, evaluations, config,
                            improvements)
    _, expr, consts, breakdown = best
    return SearchResult(
        expr=expr,
        simplified=simplify(expr),
        breakdown=breakdown,
        consts=consts,
        elapsed=elapsed,
        evaluations=evaluations,
        config=config,
        improvements=improvements,
    )
