"""Offline search over periodic allocation tables.

A schedule of period T0 is a sequence of T0 actions, each action being one
M-subset of the N plants.  ``exhaustive_search`` enumerates all of them;
``mcts_search`` grows a UCT tree over action prefixes.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .analysis import DIVERGENT, LossValue, ScheduleEvaluator
from .model import Instance, Schedule

DEFAULT_EVAL_CAP = 10**8
J_MAX_FACTOR = 1.1
J_MAX_PROBES = 32
PERIOD_TIE_RTOL = 1e-9


class SearchSpaceTooLarge(RuntimeError):
    def __init__(self, required: int, cap: int):
        self.required = required
        self.cap = cap
        super().__init__(f"exhaustive search needs {required} evaluations, cap is {cap}")


def action_set(N: int, M: int) -> tuple[tuple[int, ...], ...]:
    """All M-subsets of range(N) in lexicographic order."""
    return tuple(itertools.combinations(range(N), M))


def _membership(actions: Sequence[tuple[int, ...]], N: int) -> list[tuple[int, ...]]:
    return [tuple(1 if i in a else 0 for i in range(N)) for a in actions]


def actions_to_schedule(seq: Sequence[int], actions: Sequence[tuple[int, ...]], N: int) -> Schedule:
    return Schedule.from_actions([actions[a] for a in seq], N)


@dataclass
class SearchResult:
    best_schedule: Schedule
    best_loss: LossValue
    evaluations: int
    best_actions: tuple[int, ...]
    iterations: int = 0
    j_max: Optional[float] = None
    per_period_table: Optional[dict] = None


class _SequenceLoss:
    """Maps action sequences to total loss (float, inf = divergent), with a sequence cache."""

    def __init__(self, evaluator: ScheduleEvaluator, actions):
        self.evaluator = evaluator
        self.cols = _membership(actions, evaluator.instance.N)
        self.cache: dict[tuple[int, ...], float] = {}
        self.calls = 0

    def __call__(self, seq: tuple[int, ...]) -> float:
        self.calls += 1
        v = self.cache.get(seq)
        if v is None:
            cols = self.cols
            v = self.evaluator.total_rows(list(zip(*[cols[a] for a in seq])))
            self.cache[seq] = v
        return v


def exhaustive_search(instance: Instance, T0: int, eval_cap: int = DEFAULT_EVAL_CAP,
                      evaluator: Optional[ScheduleEvaluator] = None) -> SearchResult:
    """Evaluate every action sequence of length T0; ties go to the lexicographically smallest."""
    actions = action_set(instance.N, instance.M)
    required = len(actions) ** T0
    if required > eval_cap:
        raise SearchSpaceTooLarge(required, eval_cap)
    evaluator = evaluator or ScheduleEvaluator(instance)
    plant_loss = evaluator.plant_loss
    cols = _membership(actions, instance.N)
    N = instance.N
    best = math.inf
    best_seq = None
    count = 0
    for seq in itertools.product(range(len(actions)), repeat=T0):
        rows = list(zip(*[cols[a] for a in seq]))
        total = 0.0
        for i in range(N):
            total += plant_loss(i, rows[i])
        count += 1
        if best_seq is None or total < best:
            best, best_seq = total, seq
    sched = actions_to_schedule(best_seq, actions, N)
    return SearchResult(sched, evaluator.total(sched), count, best_seq)


class TreeNode:
    """Statistics N(s,a), W(s,a) over the children of one action prefix."""

    __slots__ = ("depth", "n_sa", "w_sa", "children", "n_s", "next_untried")

    def __init__(self, depth: int, n_actions: int):
        self.depth = depth
        self.n_sa = [0] * n_actions
        self.w_sa = [0.0] * n_actions
        self.children: list[Optional[TreeNode]] = [None] * n_actions
        self.n_s = 0
        self.next_untried = 0

    def iter_nodes(self):
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(c for c in node.children if c is not None)


def uct_select(node: TreeNode, c_uct: float) -> int:
    """argmax_a W/N + c sqrt(ln N(s) / N(s,a)); unvisited actions first, lowest index on ties."""
    n_sa, w_sa = node.n_sa, node.w_sa
    best, best_score = 0, -math.inf
    log_n = None
    for a in range(len(n_sa)):
        n = n_sa[a]
        if n == 0:
            return a
        if log_n is None:
            log_n = math.log(node.n_s)
        score = w_sa[a] / n + c_uct * math.sqrt(log_n / n)
        if score > best_score:
            best, best_score = a, score
    return best


def rollout(prefix: Sequence[int], rng: random.Random, T0: int, n_actions: int) -> tuple[int, ...]:
    """Complete the prefix to length T0 with uniformly random actions."""
    return tuple(prefix) + tuple(rng.randrange(n_actions) for _ in range(T0 - len(prefix)))


def reward(loss: LossValue, j_max: float) -> float:
    if loss is DIVERGENT or math.isinf(loss):
        return 0.0
    return min(1.0, max(0.0, 1.0 - loss / j_max))


def backup(path: Sequence[tuple[TreeNode, int]], loss: LossValue, j_max: float) -> None:
    r = reward(loss, j_max)
    for node, a in path:
        node.n_sa[a] += 1
        node.w_sa[a] += r
        node.n_s += 1


@dataclass(frozen=True)
class MctsConfig:
    iterations: int
    c_uct: float = 1.2
    seed: int = 2022
    j_max: Optional[float] = None  # None: calibrate from round-robin + random probes

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.c_uct > 0:
            raise ValueError("c_uct must be > 0")


def round_robin(N: int, M: int, T0: int) -> list[tuple[int, ...]]:
    return [tuple(sorted((m * M + k) % N for k in range(M))) for m in range(T0)]


class Mcts:
    """UCT search over action prefixes of length T0.  Call ``run`` to spend the budget."""

    def __init__(self, instance: Instance, T0: int, cfg: MctsConfig,
                 evaluator: Optional[ScheduleEvaluator] = None):
        self.instance = instance
        self.T0 = T0
        self.cfg = cfg
        self.actions = action_set(instance.N, instance.M)
        self.evaluator = evaluator or ScheduleEvaluator(instance)
        self.loss = _SequenceLoss(self.evaluator, self.actions)
        self.rng = random.Random(cfg.seed)
        self.root = TreeNode(0, len(self.actions))
        self.best = math.inf
        self.best_seq: Optional[tuple[int, ...]] = None
        self.iterations = 0
        self.j_max = cfg.j_max if cfg.j_max is not None else self._calibrate()

    def _calibrate(self) -> Optional[float]:
        index = {a: k for k, a in enumerate(self.actions)}
        probes = [tuple(index[a] for a in round_robin(self.instance.N, self.instance.M, self.T0))]
        probes += [rollout((), self.rng, self.T0, len(self.actions)) for _ in range(J_MAX_PROBES)]
        finite = [v for v in map(self.loss, probes) if not math.isinf(v)]
        return self._j_max_from(min(finite)) if finite else None

    @staticmethod
    def _j_max_from(loss: float) -> float:
        return J_MAX_FACTOR * loss if loss > 0 else 1.0

    def _fix_j_max(self, loss: float) -> None:
        self.j_max = self._j_max_from(loss)
        for node in self.root.iter_nodes():
            node.n_sa = [0] * len(node.n_sa)
            node.w_sa = [0.0] * len(node.w_sa)
            node.n_s = 0

    def run(self, iterations: Optional[int] = None) -> SearchResult:
        iterations = self.cfg.iterations if iterations is None else iterations
        T0, K, c = self.T0, len(self.actions), self.cfg.c_uct
        rng, loss_of = self.rng, self.loss
        log, sqrt, randrange = math.log, math.sqrt, rng.randrange
        root = self.root
        for _ in range(iterations):
            node = root
            path = []
            seq = []
            while True:
                if node.depth == T0:
                    full = tuple(seq)
                    break
                a = node.next_untried
                if a < K:
                    node.next_untried = a + 1
                    node.children[a] = TreeNode(node.depth + 1, K)
                    path.append((node, a))
                    seq.append(a)
                    full = tuple(seq) + tuple(randrange(K) for _ in range(T0 - len(seq)))
                    break
                # inline uct_select: fully expanded, so every child has been visited
                # unless statistics were reset
                n_sa, w_sa = node.n_sa, node.w_sa
                if 0 in n_sa:
                    a = n_sa.index(0)
                else:
                    log_n = log(node.n_s)
                    a, best_score = 0, -math.inf
                    for b in range(K):
                        n = n_sa[b]
                        score = w_sa[b] / n + c * sqrt(log_n / n)
                        if score > best_score:
                            a, best_score = b, score
                path.append((node, a))
                seq.append(a)
                node = node.children[a]
            value = loss_of(full)
            if value < self.best or self.best_seq is None:
                self.best, self.best_seq = value, full
            if self.j_max is None:
                if math.isinf(value):
                    r = 0.0
                else:
                    self._fix_j_max(value)
                    r = reward(value, self.j_max)
            elif value == math.inf:
                r = 0.0
            else:
                r = 1.0 - value / self.j_max
                r = 0.0 if r < 0.0 else (1.0 if r > 1.0 else r)
            for nd, b in path:
                nd.n_sa[b] += 1
                nd.w_sa[b] += r
                nd.n_s += 1
            self.iterations += 1
        return self.result()

    def result(self) -> SearchResult:
        sched = actions_to_schedule(self.best_seq, self.actions, self.instance.N)
        return SearchResult(sched, self.evaluator.total(sched), self.loss.calls, self.best_seq,
                            iterations=self.iterations, j_max=self.j_max)


def mcts_search(instance: Instance, T0: int, cfg: MctsConfig,
                evaluator: Optional[ScheduleEvaluator] = None) -> SearchResult:
    return Mcts(instance, T0, cfg, evaluator).run()


@dataclass
class SweepResult:
    rows: list[tuple[int, SearchResult]] = field(default_factory=list)

    @property
    def best_period(self) -> Optional[int]:
        """Smallest period whose loss is within PERIOD_TIE_RTOL of the minimum.

        A repeated pattern reproduces its loss only up to rounding, so exact
        comparison would let a doubled period win a tie by the last ulp.
        """
        if not self.rows:
            return None
        lowest = min(res.best_loss for _, res in self.rows)
        if lowest is DIVERGENT:
            return min(T0 for T0, _ in self.rows)
        return min(T0 for T0, res in self.rows
                   if res.best_loss is not DIVERGENT and res.best_loss <= lowest + PERIOD_TIE_RTOL * abs(lowest))

    @property
    def table(self) -> dict[int, LossValue]:
        return {T0: res.best_loss for T0, res in self.rows}


def sweep(instance: Instance, periods: Sequence[int], method: str = "exhaustive",
          mcts: Optional[MctsConfig] = None, eval_cap: int = DEFAULT_EVAL_CAP) -> SweepResult:
    """Best schedule per period; the minimizing period is ``best_period`` (smallest on ties)."""
    evaluator = ScheduleEvaluator(instance)
    out = SweepResult()
    for T0 in periods:
        if method == "exhaustive":
            res = exhaustive_search(instance, T0, eval_cap, evaluator)
        elif method == "mcts":
            res = mcts_search(instance, T0, mcts or MctsConfig(iterations=40_000), evaluator)
        else:
            raise ValueError(f"unknown method {method!r}")
        out.rows.append((T0, res))
    for _, res in out.rows:
        res.per_period_table = out.table
    return out
