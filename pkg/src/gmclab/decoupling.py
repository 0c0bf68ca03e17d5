"""Decoupling machinery: exponential parameter choices, random interval-overlap
graphs from multi-scale inverses, independence-number statistics, KL tail
bounds and the beta-feasibility inequalities.

Scales carry geometric sequences

    delta_k = rho_delta^k,  a_k = rho_a rho_*^k,  b_k = rho_b rho_*^k,
    g_{k,m} = rho_g rho_1^k rho_2^m,

and the overlap bound is summarized by f_{k,m} <= f_1^k f_2^m with

    f_1 = max((rho_delta/rho_*)^{p1}, (rho_delta/rho_1)^{p2}),
    f_2 = max(rho_*^{2-p1}, rho_delta^{zeta(p2)-1} / rho_2^{p2}),

for chosen p1 in (0,1) and p2 in [1, 1/beta).  Vertices k and m of the
overlap graph connect when the gap Q^{k^m}(a) - Q^{kvm}(b) <= delta_{kvm}
fails to open on the sampled joint draw.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats as _sps

from .errors import BadConfig, BadParams, OutOfRange, PreconditionError, TooLargeForExact
from .kernels import Grid, KernelFamily
from .measure import GmcParams, Normalization, build_mass_rows, zeta
from .inverse import invert_rows
from .sampler import sample_scale_hierarchy, generator
from .tables import ExperimentTable

__all__ = [
    "ScaleConfig",
    "DEFAULT_SCALE_CONFIG",
    "ExponentialChoices",
    "exponential_choices",
    "OverlapGraph",
    "default_graph_grid",
    "simulate_overlap_graph",
    "simulate_overlap_graphs",
    "IndependenceStats",
    "exact_independence_number",
    "greedy_independent_set_size",
    "independence_stats",
    "kl_divergence",
    "FeasibilityKind",
    "FeasibilityResult",
    "feasibility",
    "DeviationKind",
    "deviation_experiment",
]

EXACT_ALPHA_CAP = 30


@dataclass(frozen=True)
class ScaleConfig:
    """Exponential choice of parameters for the decoupling experiments."""

    rho_star: float = 0.6
    rho_delta: float = 0.5
    rho_a: float = 0.8
    rho_b: float = 0.9
    rho_g: float = 0.9
    rho_1: float = 0.55
    rho_2: float = 0.8
    n_scales: int = 8
    c_gap: float = 0.5
    eps_star: float = 0.1
    p1: float = 0.5
    p2: float = 2.0

    def __post_init__(self):
        rhos = {"rho_star": self.rho_star, "rho_delta": self.rho_delta,
                "rho_a": self.rho_a, "rho_b": self.rho_b, "rho_g": self.rho_g,
                "rho_1": self.rho_1, "rho_2": self.rho_2}
        for name, val in rhos.items():
            if not (0.0 < val < 1.0):
                raise BadConfig(f"{name} must lie in (0, 1), got {val}")
        if self.rho_delta > self.rho_star:
            raise BadConfig("rho_delta must not exceed rho_star")
        if not (self.rho_delta <= self.rho_1 <= self.rho_star):
            raise BadConfig("rho_1 must lie in [rho_delta, rho_star]")
        if not (0.0 < self.c_gap < 1.0):
            raise BadConfig("c_gap must lie in (0, 1)")
        if self.eps_star <= 0.0:
            raise BadConfig("eps_star must be positive")
        if self.n_scales < 1:
            raise BadConfig("need at least one scale")
        if not (0.0 < self.p1 < 1.0):
            raise BadConfig("p1 must lie in (0, 1)")
        if self.p2 < 1.0:
            raise BadConfig("p2 must be at least 1")

    def deltas(self) -> np.ndarray:
        k = np.arange(1, self.n_scales + 1)
        return self.rho_delta ** k

    def a_seq(self) -> np.ndarray:
        k = np.arange(1, self.n_scales + 1)
        return self.rho_a * self.rho_star ** k

    def b_seq(self) -> np.ndarray:
        k = np.arange(1, self.n_scales + 1)
        return self.rho_b * self.rho_star ** k


DEFAULT_SCALE_CONFIG = ScaleConfig()


@dataclass(frozen=True)
class ExponentialChoices:
    delta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    g: np.ndarray  # g[k-1, m-1] = rho_g rho_1^k rho_2^m
    f1: float
    f2: float


def exponential_choices(config: ScaleConfig, beta: float = 0.0) -> ExponentialChoices:
    """Materialize the sequences and the geometric overlap-bound factors.

    f2 involves zeta(p2) and hence the intermittency beta = gamma^2/2; pass
    beta = 0 for the pure Lebesgue shapes.
    """
    if beta < 0:
        raise BadParams("beta must be nonnegative")
    if beta > 0 and config.p2 >= 1.0 / beta:
        raise BadConfig(f"p2 = {config.p2} must stay below 1/beta = {1/beta}")
    k = np.arange(1, config.n_scales + 1)
    g = config.rho_g * np.outer(config.rho_1 ** k, config.rho_2 ** k)
    gamma = math.sqrt(2.0 * beta)
    zp2 = zeta(config.p2, gamma)
    f1 = max((config.rho_delta / config.rho_star) ** config.p1,
             (config.rho_delta / config.rho_1) ** config.p2)
    f2 = max(config.rho_star ** (2.0 - config.p1),
             config.rho_delta ** (zp2 - 1.0) / config.rho_2 ** config.p2)
    return ExponentialChoices(delta=config.deltas(), a=config.a_seq(),
                              b=config.b_seq(), g=g, f1=f1, f2=f2)


# -- overlap graphs ---------------------------------------------------------------

@dataclass
class OverlapGraph:
    """Symmetric overlap-event graph on the scale indices 1..N."""

    adjacency: np.ndarray  # (N, N) bool, zero diagonal

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def avg_degree(self) -> float:
        return float(self.degrees.mean())

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max(initial=0))

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for k in range(self.n):
            for m in range(k + 1, self.n):
                if self.adjacency[k, m]:
                    out.append((k + 1, m + 1))
        return out

    def edge_table(self) -> ExperimentTable:
        return ExperimentTable(columns=("k", "m"),
                               rows=[(float(k), float(m)) for k, m in self.edges()])


def default_graph_grid(config: ScaleConfig, span: float = 2.0) -> Grid:
    """Grid fine enough for the config's smallest scale (eps = h <= delta_N/4)."""
    h = float(config.deltas()[-1]) / 4.0
    return Grid(0.0, h, int(math.ceil(span / h)))


def _overlap_adjacency(q_a: np.ndarray, q_b: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    n = q_a.size
    adj = np.zeros((n, n), bool)
    for k in range(n):
        for m in range(k + 1, n):
            gap = q_a[k] - q_b[m]
            if not math.isfinite(gap):
                # inf - inf: both inverses empty; treat as overlapping
                overlap = not (math.isfinite(q_a[k]) and not math.isfinite(q_b[m]))
            else:
                overlap = gap <= deltas[m]
            adj[k, m] = adj[m, k] = overlap
    return adj


def simulate_overlap_graphs(config: ScaleConfig, grid: Grid, gamma: float,
                            count: int, seed: int, base_stream: int = 100,
                            trial_offset: int = 0) -> list[OverlapGraph]:
    """Overlap graphs from ``count`` joint hierarchy draws."""
    deltas = config.deltas()
    a_seq, b_seq = config.a_seq(), config.b_seq()
    params = GmcParams(gamma, Normalization.MEAN_ONE)
    graphs = []
    chunk = max(1, min(count, int(2 ** 22 / max(grid.n, 1)) or 1))
    done = 0
    while done < count:
        take = min(chunk, count - done)
        hier = sample_scale_hierarchy(deltas, grid, take, seed,
                                      family=KernelFamily.LINE_U,
                                      base_stream=base_stream,
                                      trial_offset=trial_offset + done)
        n_levels = config.n_scales
        q_a = np.empty((n_levels, take))
        q_b = np.empty((n_levels, take))
        for k in range(1, n_levels + 1):
            masses = build_mass_rows(hier.level_spec(k), grid, params,
                                     hier.level_values(k))
            cum = np.zeros((take, grid.n + 1))
            np.cumsum(masses, axis=1, out=cum[:, 1:])
            q_a[k - 1] = invert_rows(cum, grid.h, float(a_seq[k - 1]))
            q_b[k - 1] = invert_rows(cum, grid.h, float(b_seq[k - 1]))
        for i in range(take):
            graphs.append(OverlapGraph(
                _overlap_adjacency(q_a[:, i], q_b[:, i], deltas)))
        done += take
    return graphs


def simulate_overlap_graph(config: ScaleConfig, grid: Grid, gamma: float,
                           seed: int, base_stream: int = 100,
                           trial: int = 0) -> OverlapGraph:
    """Overlap graph of a single joint draw (trial picks the stream)."""
    return simulate_overlap_graphs(config, grid, gamma, 1, seed,
                                   base_stream, trial_offset=trial)[0]


# -- independence number ------------------------------------------------------------

def _adjacency_masks(adjacency: np.ndarray) -> list[int]:
    n = adjacency.shape[0]
    masks = []
    for k in range(n):
        m = 0
        row = adjacency[k]
        for j in range(n):
            if row[j] and j != k:
                m |= 1 << j
        masks.append(m)
    return masks


def _clique_cover_bound(cand: int, masks: list[int]) -> int:
    """Greedy partition of cand into cliques; their count bounds alpha."""
    cliques: list[tuple[int, int]] = []  # (members, common adjacency)
    rem = cand
    while rem:
        v = (rem & -rem).bit_length() - 1
        rem &= rem - 1
        placed = False
        for i, (members, common) in enumerate(cliques):
            if (common >> v) & 1:
                cliques[i] = (members | (1 << v), common & masks[v])
                placed = True
                break
        if not placed:
            cliques.append((1 << v, masks[v]))
    return len(cliques)


def greedy_independent_set_size(graph: OverlapGraph) -> int:
    """Min-degree greedy independent set."""
    adj = graph.adjacency.copy()
    alive = np.ones(graph.n, bool)
    size = 0
    while alive.any():
        deg = np.where(alive, adj[:, alive].sum(axis=1), np.inf)
        v = int(np.argmin(deg))
        size += 1
        alive[v] = False
        alive[adj[v]] = False
    return size


def exact_independence_number(graph: OverlapGraph,
                              cap: int = EXACT_ALPHA_CAP) -> int:
    """Branch-and-bound over bitsets with popcount and greedy clique-cover
    pruning; raises TooLargeForExact above the cap."""
    n = graph.n
    if n > cap:
        raise TooLargeForExact(f"exact alpha capped at N = {cap}, got {n}")
    masks = _adjacency_masks(graph.adjacency)
    best = greedy_independent_set_size(graph)
    full = (1 << n) - 1

    def expand(cand: int, size: int):
        nonlocal best
        if cand == 0:
            best = max(best, size)
            return
        count = bin(cand).count("1")
        if size + count <= best:
            return
        if size + _clique_cover_bound(cand, masks) <= best:
            return
        # branch on the candidate vertex with most candidate neighbors
        v, vdeg = -1, -1
        rem = cand
        while rem:
            u = (rem & -rem).bit_length() - 1
            rem &= rem - 1
            d = bin(masks[u] & cand).count("1")
            if d > vdeg:
                v, vdeg = u, d
        bit = 1 << v
        expand(cand & ~bit & ~masks[v], size + 1)
        expand(cand & ~bit, size)

    expand(full, 0)
    return best


@dataclass(frozen=True)
class IndependenceStats:
    alpha_exact: int | None
    alpha_greedy: int
    caro_wei: float
    bound_avg: float   # N / (1 + mean degree)
    bound_max: float   # N / (max degree + 1)


def independence_stats(graph: OverlapGraph) -> IndependenceStats:
    if graph.n < 1:
        raise PreconditionError("graph needs at least one vertex")
    deg = graph.degrees
    caro_wei = float((1.0 / (deg + 1.0)).sum())
    exact = (exact_independence_number(graph)
             if graph.n <= EXACT_ALPHA_CAP else None)
    return IndependenceStats(
        alpha_exact=exact,
        alpha_greedy=greedy_independent_set_size(graph),
        caro_wei=caro_wei,
        bound_avg=graph.n / (1.0 + graph.avg_degree),
        bound_max=graph.n / (graph.max_degree + 1.0),
    )


# -- KL divergence and feasibility -----------------------------------------------------

def kl_divergence(beta: float, alpha: float) -> float:
    """D(beta || alpha) = beta ln(beta/alpha) + (1-beta) ln((1-beta)/(1-alpha))."""
    if not (0.0 < beta < 1.0 and 0.0 < alpha < 1.0):
        raise OutOfRange("kl_divergence needs both arguments strictly in (0, 1)")
    return (beta * math.log(beta / alpha)
            + (1.0 - beta) * math.log((1.0 - beta) / (1.0 - alpha)))


class FeasibilityKind(enum.Enum):
    DECOUPLING_BETA = "DECOUPLING_BETA"
    RATIO_BETA = "RATIO_BETA"


@dataclass(frozen=True)
class FeasibilityResult:
    kind: FeasibilityKind
    feasible: bool
    margin: float
    witness: dict


def feasibility(kind: FeasibilityKind, **params) -> FeasibilityResult:
    """Evaluate the printed beta constraints.

    DECOUPLING_BETA(beta, eps_star, c_gap, r_a): the quadratic constraint

        (beta+1)^2/(4 beta) - (1+eps_star)/(1-c_gap)
            - ((1/beta + 1)/2) r_a  >  (1+eps_star)/(1-c_gap),

    solvable for beta below roughly 0.1715 at vanishing slack.

    RATIO_BETA(beta): existence of p1 > 1 and eps_ratio in (0,1) with

        (1/beta)(p1-1)/p1 > (1+eps)(1 + beta (p1 (1+eps) + 1)) + 1/p1,

    scanned over p1 in (1, 100] and eps in (0, 1).
    """
    if kind is FeasibilityKind.DECOUPLING_BETA:
        beta = params.get("beta")
        eps_star = params.get("eps_star", 1e-3)
        c_gap = params.get("c_gap", 1e-3)
        r_a = params.get("r_a", 1e-3)
        if beta is None or beta <= 0:
            raise BadParams("DECOUPLING_BETA needs beta > 0")
        if not (0.0 <= c_gap < 1.0) or eps_star < 0 or r_a < 0:
            raise BadParams("need eps_star, r_a >= 0 and c_gap in [0, 1)")
        rhs = (1.0 + eps_star) / (1.0 - c_gap)
        lhs = ((beta + 1.0) ** 2 / (4.0 * beta) - rhs
               - 0.5 * (1.0 / beta + 1.0) * r_a)
        margin = lhs - rhs
        return FeasibilityResult(kind, margin > 0.0, margin,
                                 {"beta": beta, "eps_star": eps_star,
                                  "c_gap": c_gap, "r_a": r_a})

    if kind is FeasibilityKind.RATIO_BETA:
        beta = params.get("beta")
        if beta is None or beta <= 0:
            raise BadParams("RATIO_BETA needs beta > 0")
        p1_grid = 1.0 + np.logspace(-3, 2, 600)
        p1_grid = p1_grid[p1_grid <= 101.0]
        eps_grid = np.logspace(-4, math.log10(0.999), 300)
        lhs = (1.0 / beta) * (p1_grid - 1.0) / p1_grid - 1.0 / p1_grid
        margin = -math.inf
        witness = {}
        for eps in eps_grid:
            rhs = (1.0 + eps) * (1.0 + beta * (p1_grid * (1.0 + eps) + 1.0))
            gains = lhs - rhs
            i = int(np.argmax(gains))
            if gains[i] > margin:
                margin = float(gains[i])
                witness = {"p1": float(p1_grid[i]), "eps_ratio": float(eps)}
        witness["beta"] = beta
        return FeasibilityResult(kind, margin > 0.0, margin, witness)

    raise BadParams(f"unknown feasibility id {kind}")


# -- deviation experiments --------------------------------------------------------------

class DeviationKind(enum.Enum):
    ALPHA_SMALL = "ALPHA_SMALL"
    OVERLAP_DECAY = "OVERLAP_DECAY"
    INDICATOR_TAIL = "INDICATOR_TAIL"


def _cp_upper(successes: int, trials: int, level: float = 0.95) -> float:
    """One-sided Clopper-Pearson upper confidence bound."""
    if successes >= trials:
        return 1.0
    return float(_sps.beta.ppf(level, successes + 1, trials - successes))


def deviation_experiment(kind: DeviationKind, config: ScaleConfig, gamma: float,
                         trials: int, seed: int, grid: Grid | None = None,
                         n_list=None, alpha: float = 0.25,
                         beta_level: float = 0.5,
                         base_stream: int = 110) -> ExperimentTable:
    """Tail-shape experiments.

    ALPHA_SMALL: frequency of alpha(G) < c_gap N over joint draws, for N in
    n_list (default 6..12, capped at 14 so alpha is exact per trial); zero
    frequencies carry their one-sided 95% Clopper-Pearson upper bound and
    log_freq falls back to its logarithm.

    OVERLAP_DECAY: empirical P(Q^k(a_k) - Q^{k+m}(b_{k+m}) < delta_{k+m})
    per (k, m).

    INDICATOR_TAIL: iid Bernoulli(alpha) synthesis of
    P(sum X >= beta_level * n) against the bound exp(-n D(beta||alpha)).
    """
    meta = {"kind": kind.value, "gamma": gamma, "trials": trials,
            "seed": seed, "config": config.__dict__}

    if kind is DeviationKind.INDICATOR_TAIL:
        ns = [int(v) for v in (n_list if n_list is not None else [10, 20, 40])]
        kl = kl_divergence(beta_level, alpha)
        rows = []
        for j, n in enumerate(ns):
            rng = generator(seed, 7001, base_stream, j)
            hits = rng.random((trials, n)) < alpha
            freq = float((hits.sum(axis=1) >= beta_level * n).mean())
            se = math.sqrt(freq * (1 - freq) / trials)
            rows.append((float(n), beta_level, freq, se,
                         math.exp(-n * kl)))
        meta["alpha"] = alpha
        return ExperimentTable(
            columns=("n", "beta", "freq", "stderr", "kl_bound"),
            rows=rows, meta=meta)

    if kind is DeviationKind.OVERLAP_DECAY:
        use_grid = grid or default_graph_grid(config)
        graphs = simulate_overlap_graphs(config, use_grid, gamma, trials,
                                         seed, base_stream)
        n = config.n_scales
        counts = np.zeros((n, n))
        for g in graphs:
            counts += g.adjacency
        rows = []
        for k in range(1, n):
            for m in range(1, n - k + 1):
                freq = counts[k - 1, k + m - 1] / trials
                se = math.sqrt(freq * (1 - freq) / trials)
                rows.append((float(k), float(m), float(freq), se))
        return ExperimentTable(columns=("k", "m", "freq", "stderr"),
                               rows=rows, meta=meta)

    # ALPHA_SMALL
    ns = [int(v) for v in (n_list if n_list is not None else range(6, 13))]
    if any(v > 14 for v in ns):
        raise PreconditionError("ALPHA_SMALL runs exact alpha; N <= 14 required")
    rows = []
    for j, n in enumerate(ns):
        cfg = replace(config, n_scales=n)
        use_grid = grid or default_graph_grid(cfg)
        graphs = simulate_overlap_graphs(cfg, use_grid, gamma, trials, seed,
                                         base_stream + 10 + j)
        small = sum(
            1 for g in graphs
            if exact_independence_number(g) < cfg.c_gap * n)
        freq = small / trials
        se = math.sqrt(freq * (1 - freq) / trials)
        cp = _cp_upper(small, trials)
        log_freq = math.log(freq) if small > 0 else math.log(cp)
        rows.append((float(n), float(trials), freq, se, cp, log_freq))
    return ExperimentTable(
        columns=("N", "trials", "freq", "stderr", "cp_upper95", "log_freq"),
        rows=rows, meta=meta)
