"""One-step value operator and the nested fixed-point value computations.

The one-step operator values every local interaction under the lifted state
valuation and takes its minimax value.  Reachability/safety values are single
fixed points of that operator with the target frozen; Buchi and co-Buchi
values nest two of them (outer over the target states, inner over the rest).
The scalar variants do the same on a single game form whose loop outcomes
stand for "stay another round".

The operator is monotone and 1-Lipschitz but not a contraction, so some graph
instances converge harmonically (the classic 2x2 self-loop recurrence gains
roughly one digit per squaring of the sweep count); residuals and iteration
counts are therefore always reported, and inner fixed points restart from
their natural extreme on every outer sweep to keep the nesting exact.  The
scalar maps act on [0,1], where monotone + 1-Lipschitz makes f(u) - u
non-increasing; their extreme fixed points are found by bisection, which is
immune to the harmonic slowdown.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvariantError
from .matrixgame import matrix_value, matrix_values_stack
from .model import Game, GameForm, Valuation

DEFAULT_INNER_TOL = 1e-9
DEFAULT_OUTER_TOL = 1e-8
DEFAULT_MAX_INNER = 10**6
DEFAULT_MAX_OUTER = 10**5

# Bisection slacks.  A fixed point detected through "f(u) - u crosses zeta"
# carries an error of about sqrt(zeta) when the map touches the diagonal
# tangentially, so the outer slack must sit safely above the inner one's
# worst-case value noise (~3e-7 for zeta = 1e-13).
_ZETA_INNER = 1e-13
_ZETA_OUTER = 3e-6
_BISECT_STEPS = 60


@dataclass(frozen=True)
class FixpointConfig:
    """Iteration control: residual stops, sweep caps, optional start override."""

    tol: float = DEFAULT_OUTER_TOL
    inner_tol: float = DEFAULT_INNER_TOL
    max_iters: int = DEFAULT_MAX_OUTER
    max_inner_iters: int = DEFAULT_MAX_INNER
    direction: str | None = None  # "below" | "above" for the single fixed points

    def __post_init__(self):
        if self.tol <= 0 or self.inner_tol <= 0:
            raise InvariantError("tolerances must be positive")
        if self.max_iters < 1 or self.max_inner_iters < 1:
            raise InvariantError("iteration caps must be at least 1")
        if self.direction not in (None, "below", "above"):
            raise InvariantError("direction must be 'below', 'above' or None")


@dataclass(frozen=True)
class ValueReport:
    valuation: Valuation
    residual: float
    iterations_outer: int
    iterations_inner_total: int
    converged: bool


@dataclass(frozen=True)
class ScalarResult:
    value: float
    residual: float
    iterations_outer: int
    iterations_inner_total: int
    converged: bool


# -- the one-step operator ----------------------------------------------------


def _sweep(game: Game, vec: np.ndarray, states: np.ndarray) -> np.ndarray:
    """Jacobi sweep of the one-step operator on the given state indexes."""
    lifted = game.dist_matrix() @ vec
    out = vec.copy()
    out[states] = matrix_values_stack(lifted[game.delta_index()[states]])
    return out


def delta(game: Game, v: Valuation) -> Valuation:
    """Value of every local interaction under the lift of ``v``."""
    vec = v.vector(game)
    out = _sweep(game, vec, np.arange(len(game.states)))
    return Valuation.from_vector(game, out)


def _iterate(game: Game, vec, free: np.ndarray, tol: float, cap: int):
    """Iterate the operator on the ``free`` states until the residual drops."""
    residual = 0.0
    sweeps = 0
    tables = game.delta_index()[free]
    dist = game.dist_matrix()
    while sweeps < cap:
        new = matrix_values_stack((dist @ vec)[tables])
        residual = float(np.max(np.abs(new - vec[free]))) if free.size else 0.0
        vec = vec.copy()
        vec[free] = new
        sweeps += 1
        if residual <= tol:
            return vec, residual, sweeps, True
    return vec, residual, sweeps, free.size == 0


def _frozen_fix(game: Game, frozen_idx, frozen_vals, start: float, config: FixpointConfig):
    n = len(game.states)
    free = np.setdiff1d(np.arange(n), frozen_idx)
    vec = np.full(n, start)
    if len(frozen_idx):
        vec[frozen_idx] = frozen_vals
    return _iterate(game, vec, free, config.inner_tol, config.max_inner_iters)


def reach_value(game: Game, target, frozen, config: FixpointConfig = FixpointConfig()) -> ValueReport:
    """Least fixed point with the target frozen, approximated from below."""
    target = sorted(set(target))
    if not set(target) <= set(game.states):
        raise InvariantError("target contains unknown states")
    frozen_idx = np.array([game.state_index(t) for t in target], dtype=int)
    frozen_vals = np.array([frozen[t] for t in target]) if target else np.empty(0)
    start = 1.0 if config.direction == "above" else 0.0
    vec, residual, sweeps, ok = _frozen_fix(game, frozen_idx, frozen_vals, start, config)
    return ValueReport(Valuation.from_vector(game, vec), residual, sweeps, 0, ok)


def safe_value(game: Game, config: FixpointConfig = FixpointConfig()) -> ValueReport:
    """Greatest fixed point from 1 with the target frozen at 0."""
    if game.objective.kind != "safe":
        raise InvariantError("safe_value needs a Safe objective")
    target = sorted(game.objective.target)
    frozen_idx = np.array([game.state_index(t) for t in target], dtype=int)
    start = 0.0 if config.direction == "below" else 1.0
    vec, residual, sweeps, ok = _frozen_fix(game, frozen_idx, np.zeros(len(target)), start, config)
    return ValueReport(Valuation.from_vector(game, vec), residual, sweeps, 0, ok)


def _nested(game: Game, outer_from: float, inner_from: float, config: FixpointConfig) -> ValueReport:
    """Outer fixed point on the target set, inner on its complement.

    ``max_inner_iters`` is a total budget across all inner runs: on the
    slow-convergence instances the inner truncation error keeps the outer
    iterate drifting, and a per-run cap alone would never terminate.
    """
    n = len(game.states)
    t_mask = game.target_mask()
    t_idx = np.nonzero(t_mask)[0]
    free = np.nonzero(~t_mask)[0]
    t_tables = game.delta_index()[t_idx]
    dist = game.dist_matrix()
    v_t = np.full(t_idx.size, outer_from)
    inner_total = 0
    residual = np.inf
    outer = 0
    converged = False

    def inner_fix(vt, tol):
        vec = np.full(n, inner_from)
        vec[t_idx] = vt
        budget = config.max_inner_iters - inner_total
        return _iterate(game, vec, free, tol, max(budget, 1))

    while outer < config.max_iters:
        # early outer sweeps tolerate a sloppier inner fixed point; the
        # convergence claim below is only made from a tight one
        loose = min(1e-3, 0.01 * residual) if np.isfinite(residual) else 1e-3
        tol_k = max(config.inner_tol, loose)
        vec, _, sweeps, inner_ok = inner_fix(v_t, tol_k)
        inner_total += sweeps
        new_t = matrix_values_stack((dist @ vec)[t_tables]) if t_idx.size else v_t
        residual = float(np.max(np.abs(new_t - v_t))) if t_idx.size else 0.0
        v_t = new_t
        outer += 1
        if not inner_ok:
            vec = vec.copy()
            vec[t_idx] = v_t
            return ValueReport(Valuation.from_vector(game, vec), residual, outer,
                               inner_total, False)
        if residual <= config.tol:
            converged = True
            break
    vec, _, sweeps, inner_ok = inner_fix(v_t)
    inner_total += sweeps
    vec[t_idx] = v_t
    return ValueReport(Valuation.from_vector(game, vec), residual, outer, inner_total,
                       converged and inner_ok)


def buchi_value(game: Game, config: FixpointConfig = FixpointConfig()) -> ValueReport:
    """Outer greatest fixed point over the target (from 1), inner least (from 0)."""
    if game.objective.kind != "buchi":
        raise InvariantError("buchi_value needs a Buchi objective")
    return _nested(game, outer_from=1.0, inner_from=0.0, config=config)


def cobuchi_value(game: Game, config: FixpointConfig = FixpointConfig()) -> ValueReport:
    """Outer least fixed point over the target (from 0), inner greatest (from 1)."""
    if game.objective.kind != "cobuchi":
        raise InvariantError("cobuchi_value needs a CoBuchi objective")
    return _nested(game, outer_from=0.0, inner_from=1.0, config=config)


def game_value(game: Game, config: FixpointConfig = FixpointConfig()) -> ValueReport:
    """Dispatch on the game's objective kind."""
    kind = game.objective.kind
    if kind == "reach":
        frozen = {t: 1.0 for t in game.objective.target}
        return reach_value(game, game.objective.target, frozen, config)
    if kind == "safe":
        return safe_value(game, config)
    if kind == "buchi":
        return buchi_value(game, config)
    return cobuchi_value(game, config)


# -- scalar fixed points on a single game form --------------------------------
#
# Every map below is monotone and 1-Lipschitz on [0,1], so f(u) - u is
# non-increasing and the least/greatest fixed point is the lower/upper end of
# its zero set: both are bisectable.


class _EvalCounter:
    def __init__(self, fn):
        self.fn = fn
        self.count = 0

    def __call__(self, u: float) -> float:
        self.count += 1
        return self.fn(u)


def _bisect_lfp(f, zeta=_ZETA_INNER) -> float:
    if f(0.0) <= zeta:
        return 0.0
    lo, hi = 0.0, 1.0  # f(lo) - lo > zeta; f(1) - 1 <= 0 always
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if f(mid) - mid <= zeta:
            hi = mid
        else:
            lo = mid
    return hi


def _bisect_gfp(f, zeta=_ZETA_INNER) -> float:
    if f(1.0) >= 1.0 - zeta:
        return 1.0
    lo, hi = 0.0, 1.0  # f(hi) - hi < -zeta
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        if f(mid) - mid >= -zeta:
            lo = mid
        else:
            hi = mid
    return lo


def _check_partition(form: GameForm, loops, exits) -> None:
    if set(loops) | set(exits) != set(form.outcomes) or set(loops) & set(exits):
        raise InvariantError("loop/exit sets must partition the outcomes")


def scalar_reach_fix(form: GameForm, loop_outcomes, alpha,
                     config: FixpointConfig = FixpointConfig()) -> ScalarResult:
    """Least fixed point of u -> val(form with exits at alpha, loops at u)."""
    loops = frozenset(loop_outcomes)
    _check_partition(form, loops, alpha.keys())
    vals = np.empty(len(form.outcomes))
    loop_mask = np.zeros(len(form.outcomes), dtype=bool)
    for k, o in enumerate(form.outcomes):
        if o in loops:
            loop_mask[k] = True
        else:
            vals[k] = alpha[o]
    table = form.index_table()

    def f(u: float) -> float:
        vals[loop_mask] = u
        return matrix_value(vals[table])

    f = _EvalCounter(f)
    u = _bisect_gfp(f) if config.direction == "above" else _bisect_lfp(f)
    return ScalarResult(u, abs(f(u) - u), f.count, 0, True)


def scalar_buchi_fix(form: GameForm, loop_outcomes, alpha, p_t,
                     config: FixpointConfig = FixpointConfig()) -> ScalarResult:
    """Nested Buchi value of a form in a (partition, alpha, p_T) environment.

    Outer greatest fixed point on the target value; per outer evaluation an
    inner least fixed point on the non-target value, with loop outcomes
    valued p_T*u_T + (1 - p_T)*u_bar.
    """
    loops = frozenset(loop_outcomes)
    _check_partition(form, loops, alpha.keys())
    if set(p_t.keys()) != loops:
        raise InvariantError("p_t must be total on the loop outcomes")
    n_o = len(form.outcomes)
    vals = np.empty(n_o)
    loop_mask = np.zeros(n_o, dtype=bool)
    p_vec = np.zeros(n_o)
    for k, o in enumerate(form.outcomes):
        if o in loops:
            loop_mask[k] = True
            p_vec[k] = p_t[o]
        else:
            vals[k] = alpha[o]
    table = form.index_table()
    p_loop = p_vec[loop_mask]
    inner_evals = 0

    def outer(u_t: float) -> float:
        nonlocal inner_evals

        def inner(u_bar: float) -> float:
            nonlocal inner_evals
            inner_evals += 1
            vals[loop_mask] = p_loop * u_t + (1.0 - p_loop) * u_bar
            return matrix_value(vals[table])

        u_bar = _bisect_lfp(inner)
        vals[loop_mask] = p_loop * u_t + (1.0 - p_loop) * u_bar
        return matrix_value(vals[table])

    outer = _EvalCounter(outer)
    u = _bisect_gfp(outer, zeta=_ZETA_OUTER)
    return ScalarResult(u, abs(outer(u) - u), outer.count, inner_evals, True)


def scalar_cobuchi_fix(form: GameForm, alpha, p_alpha, p_t,
                       config: FixpointConfig = FixpointConfig()) -> ScalarResult:
    """Nested co-Buchi value: outer least fixed point, inner greatest.

    Outcome o is worth p_alpha(o)*alpha(o) plus its loop part split between
    the target value and the non-target value by p_T(o).
    """
    for name, mapping in (("alpha", alpha), ("p_alpha", p_alpha), ("p_t", p_t)):
        if set(mapping.keys()) != set(form.outcomes):
            raise InvariantError(f"{name} must be total on the outcomes")
    a_vec = np.array([alpha[o] for o in form.outcomes])
    pa_vec = np.array([p_alpha[o] for o in form.outcomes])
    pt_vec = np.array([p_t[o] for o in form.outcomes])
    table = form.index_table()
    base = pa_vec * a_vec
    loop_part = 1.0 - pa_vec
    inner_evals = 0

    def outer(u_t: float) -> float:
        nonlocal inner_evals

        def inner(u_bar: float) -> float:
            nonlocal inner_evals
            inner_evals += 1
            vals = base + loop_part * (pt_vec * u_t + (1.0 - pt_vec) * u_bar)
            return matrix_value(vals[table])

        u_bar = _bisect_gfp(inner)
        vals = base + loop_part * (pt_vec * u_t + (1.0 - pt_vec) * u_bar)
        return matrix_value(vals[table])

    outer = _EvalCounter(outer)
    u = _bisect_lfp(outer, zeta=_ZETA_OUTER)
    return ScalarResult(u, abs(outer(u) - u), outer.count, inner_evals, True)
