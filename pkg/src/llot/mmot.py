"""Symmetric multi-marginal transport with Coulomb cost on grid densities.

Two solvers share one problem description: an exact linear program over
repeat-free multisets of support sites (the symmetric, infinite-diagonal
structure shrinks the variable set by n! and removes the singular
configurations), and an entropic fixed-point iteration with one shared
scaling potential.  The LP returns Kantorovich dual certificates; the
entropic path converges to the LP value as the inverse temperature grows.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import NumericalError, ValidationError
from .grids import AtomicPlan, GridDensity, SeparationReport, marginal, separation
from .regularizer import CoulombPair, Observable
from .simplex import solve_standard_form

MAX_LP_VARIABLES = 200_000
MAX_GIBBS_ENTRIES = 2_000_000
PRUNE_THRESHOLD = 1e-9
LOG_DOMAIN_BETA = 50.0


@dataclass
class TransportProblem:
    """Pinned-marginal symmetric transport with a pairwise singular cost."""

    n: int
    marginal: GridDensity
    cost: Observable = field(default_factory=CoulombPair)

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("transport needs at least two particles")
        if self.marginal.mass_convention != "probability":
            raise ValidationError("marginal must use the probability convention")

    def support(self):
        """(site positions (s, dim), site masses (s,), flat site indices)."""
        flat = self.marginal.flat()
        idx = np.nonzero(flat > 0)[0]
        pts = self.marginal.grid.points()[idx]
        masses = flat[idx] * self.marginal.grid.cell_volume
        return pts, masses, idx


@dataclass
class TransportSolution:
    plan: AtomicPlan
    value: float
    solver: str
    marginal_residual: float
    dual_potential: Optional[np.ndarray] = None
    dual_sites: Optional[np.ndarray] = None
    duality_gap: Optional[float] = None
    beta: Optional[float] = None
    iterations: int = 0


@dataclass
class DualCheckReport:
    ok: bool
    max_violation: float
    worst_config: Optional[np.ndarray]
    complementary_residual: float


def _feasibility_check(n: int, masses: np.ndarray):
    if masses.size < n or masses.max() > 1.0 / n + 1e-12:
        raise ValidationError("no finite-cost feasible plan")


def _expand_multiset(positions: np.ndarray, combo, weight: float):
    """All orderings of a repeat-free multiset, each with weight / n!."""
    n = len(combo)
    share = weight / math.factorial(n)
    out = []
    for perm in itertools.permutations(combo):
        out.append((positions[list(perm)], share))
    return out


def _marginal_residual(plan: AtomicPlan, problem: TransportProblem) -> float:
    binned = marginal(plan, problem.marginal.grid)
    return binned.l1_distance(problem.marginal)


def solve_lp(p: TransportProblem) -> TransportSolution:
    """Exact minimizer over symmetric plans via the multiset linear program.

    Variables are repeat-free multisets of support sites; the marginal
    constraint row for site i collects count_i(multiset)/n.  Dual row values
    over n give a Kantorovich potential v with sum_j v(x_j) <= cost(X).
    """
    positions, masses, flat_idx = p.support()
    _feasibility_check(p.n, masses)
    s = positions.shape[0]
    n_vars = math.comb(s, p.n)
    if n_vars > MAX_LP_VARIABLES:
        raise ValidationError(
            f"{n_vars} multiset variables exceed the exact-LP limit "
            f"({MAX_LP_VARIABLES}); use the sinkhorn solver"
        )
    combos = list(itertools.combinations(range(s), p.n))
    configs = np.stack([positions[list(c)] for c in combos])
    costs = p.cost.value_many(configs)
    if not np.all(np.isfinite(costs)):
        raise ValidationError("cost is singular on a repeat-free configuration")

    a = np.zeros((s, len(combos)))
    for col, combo in enumerate(combos):
        for i in combo:
            a[i, col] = 1.0 / p.n
    res = solve_standard_form(costs, a, masses)

    atoms = []
    for q, combo in zip(res.x, combos):
        if q > 1e-15:
            atoms.extend(_expand_multiset(positions, combo, q))
    total = sum(w for _, w in atoms)
    atoms = [(cfg, w / total) for cfg, w in atoms]
    plan = AtomicPlan.from_atoms(atoms, dim=positions.shape[1]).sorted_copy()

    v = res.y / p.n
    gap = res.objective - float(res.y @ masses)
    return TransportSolution(
        plan=plan,
        value=res.objective,
        solver="lp",
        marginal_residual=_marginal_residual(plan, p),
        dual_potential=v,
        dual_sites=positions,
        duality_gap=gap,
        iterations=res.iterations,
    )


def _gibbs_cost_tensor(p: TransportProblem):
    positions, masses, _ = p.support()
    s = positions.shape[0]
    if s**p.n > MAX_GIBBS_ENTRIES:
        raise ValidationError(
            f"Gibbs tensor of {s}^{p.n} entries exceeds the sinkhorn limit"
        )
    grids = np.meshgrid(*[np.arange(s)] * p.n, indexing="ij")
    site_idx = np.stack([g.ravel() for g in grids], axis=1)  # (s^n, n)
    configs = positions[site_idx]
    costs = p.cost.value_many(configs).reshape((s,) * p.n)
    distinct = np.ones((s,) * p.n, dtype=bool)
    for j in range(p.n):
        for k in range(j + 1, p.n):
            shape_j = [1] * p.n
            shape_j[j] = s
            shape_k = [1] * p.n
            shape_k[k] = s
            eq = (np.arange(s).reshape(shape_j) == np.arange(s).reshape(shape_k))
            distinct &= ~eq
    return positions, masses, costs, distinct, site_idx


def solve_sinkhorn(p: TransportProblem, beta: float, max_iter: int = 20000,
                   tol: float = 1e-8, damping: float = 0.5,
                   log_domain: Optional[bool] = None, anneal: bool = True,
                   prune_threshold: float = PRUNE_THRESHOLD) -> TransportSolution:
    """Entropic proportional fitting with a single shared scaling potential.

    Coincident-site configurations carry zero weight (the singular diagonal
    is excluded, not clipped).  Above beta = 50 the log-domain path is
    mandatory; an annealing schedule (beta doubling from 25, warm-started
    potential) is used by default for large beta.
    """
    if beta <= 0:
        raise ValidationError("inverse temperature must be positive")
    if log_domain is None:
        log_domain = beta > LOG_DOMAIN_BETA
    if not log_domain and beta > LOG_DOMAIN_BETA:
        raise NumericalError(
            f"beta={beta:g} overflows the plain scaling iteration; "
            "log-domain mode is mandatory above beta=50"
        )
    positions, masses, costs, distinct, site_idx = _gibbs_cost_tensor(p)
    _feasibility_check(p.n, masses)
    s = positions.shape[0]
    log_mass = np.log(masses)

    stages = [beta]
    if anneal and beta > 25.0:
        b = 25.0
        stages = []
        while b < beta:
            stages.append(b)
            b *= 2.0
        stages.append(beta)

    f = np.zeros(s)
    iterations = 0
    residual = np.inf
    neg_inf_mask = np.where(distinct, 0.0, -np.inf)

    for stage_i, b in enumerate(stages):
        stage_tol = tol if stage_i == len(stages) - 1 else max(tol, 1e-6)
        if log_domain:
            base = -b * np.where(distinct, costs, 0.0) + neg_inf_mask
            for _ in range(max_iter):
                iterations += 1
                g = base.copy()
                for k in range(p.n):
                    shape = [1] * p.n
                    shape[k] = s
                    g = g + f.reshape(shape)
                logm = logsumexp(g.reshape(s, -1), axis=1)
                log_total = logsumexp(logm)
                residual = float(np.abs(np.exp(logm - log_total) - masses).sum())
                if residual <= stage_tol:
                    break
                f = f + damping * (log_mass - (logm - log_total))
        else:
            kernel = np.where(distinct, np.exp(-b * costs), 0.0)
            scale = np.exp(f)
            for _ in range(max_iter):
                iterations += 1
                weights = kernel.copy()
                for k in range(p.n):
                    shape = [1] * p.n
                    shape[k] = s
                    weights = weights * scale.reshape(shape)
                if not np.all(np.isfinite(weights)):
                    raise NumericalError(
                        f"numerical overflow at beta={b:g}; use log-domain mode"
                    )
                m = weights.reshape(s, -1).sum(axis=1)
                total = m.sum()
                if total <= 0 or not np.isfinite(total):
                    raise NumericalError(
                        f"numerical underflow at beta={b:g}; use log-domain mode"
                    )
                residual = float(np.abs(m / total - masses).sum())
                if residual <= stage_tol:
                    break
                scale = scale * (masses / (m / total)) ** damping
            f = np.log(scale)

    if log_domain:
        g = -beta * np.where(distinct, costs, 0.0) + neg_inf_mask
        for k in range(p.n):
            shape = [1] * p.n
            shape[k] = s
            g = g + f.reshape(shape)
        weights = np.exp(g - logsumexp(g))
    else:
        scale = np.exp(f)
        weights = np.where(distinct, np.exp(-beta * costs), 0.0)
        for k in range(p.n):
            shape = [1] * p.n
            shape[k] = s
            weights = weights * scale.reshape(shape)
        weights = weights / weights.sum()

    flat_w = weights.ravel()
    keep = flat_w >= prune_threshold * flat_w.sum()
    kept_idx = np.nonzero(keep)[0]
    kept_w = flat_w[kept_idx]
    kept_w = kept_w / kept_w.sum()
    configs = positions[site_idx[kept_idx]]
    plan = AtomicPlan(p.n, positions.shape[1], configs, kept_w).sorted_copy()
    value = float((p.cost.value_many(configs) * kept_w).sum())
    return TransportSolution(
        plan=plan,
        value=value,
        solver="sinkhorn",
        marginal_residual=_marginal_residual(plan, p),
        beta=beta,
        iterations=iterations,
    )


def check_dual(sol: TransportSolution, p: TransportProblem,
               samples: Optional[int] = None, tol: float = 1e-8,
               seed: int = 0) -> DualCheckReport:
    """Verify the Kantorovich certificate of a solved problem.

    Checks sum_j v(x_j) <= cost(X) + tol over enumerated (or sampled)
    repeat-free configurations and reports the complementary-slackness
    residual on the plan support.
    """
    if sol.dual_potential is None:
        raise ValidationError("solution carries no dual potential")
    positions, masses, _ = p.support()
    v = sol.dual_potential
    s = positions.shape[0]
    if samples is None and math.comb(s, p.n) <= MAX_LP_VARIABLES:
        combos = list(itertools.combinations(range(s), p.n))
    else:
        rng = np.random.default_rng(seed)
        count = samples or 10000
        combos = [tuple(sorted(rng.choice(s, size=p.n, replace=False)))
                  for _ in range(count)]
    configs = np.stack([positions[list(c)] for c in combos])
    costs = p.cost.value_many(configs)
    pot = np.array([v[list(c)].sum() for c in combos])
    slack = pot - costs
    worst = int(np.argmax(slack))
    max_violation = float(slack[worst])

    site_of = {tuple(np.round(positions[i], 12)): i for i in range(s)}
    cs = 0.0
    plan_costs = p.cost.value_many(sol.plan.configs)
    for config, w, cst in zip(sol.plan.configs, sol.plan.weights, plan_costs):
        tot_v = sum(v[site_of[tuple(np.round(x, 12))]] for x in config)
        cs += w * abs(cst - tot_v)
    return DualCheckReport(
        ok=max_violation <= tol,
        max_violation=max_violation,
        worst_config=configs[worst] if max_violation > tol else None,
        complementary_residual=float(cs),
    )


def plan_separation(sol: TransportSolution,
                    prune_threshold: float = PRUNE_THRESHOLD) -> SeparationReport:
    """Separation of the solved plan after pruning negligible atoms."""
    keep = sol.plan.weights >= prune_threshold * sol.plan.weights.sum()
    if not keep.any():
        raise ValidationError("plan empty after pruning")
    configs = sol.plan.configs[keep]
    weights = sol.plan.weights[keep]
    plan = AtomicPlan(sol.plan.n, sol.plan.dim, configs, weights / weights.sum())
    return separation(plan)
