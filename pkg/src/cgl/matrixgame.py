"""Zero-sum matrix games: value, optimal mixed strategies, polytope queries.

The solver is a dense tableau simplex with Bland's rule; matrices here are
tiny (a handful of rows and columns), so robustness is worth far more than
pivoting speed.  Saddle points, vector games and 2x2 games take closed-form
shortcuts because the fixed-point loops solve the same shapes thousands of
times.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import InvariantError, SolverError
from .model import Dist, GameForm

VALUE_TOL = 1e-7     # certification tolerance (minimax equality, local optimality)
SUPPORT_TOL = 1e-9   # weight below which a row does not count as support
# Slack for the optimality constraints inside polytope queries.  It must stay
# well below SUPPORT_TOL: a slack of s lets every row carry up to ~s of weight
# while "optimal", and that leak must not register as support.
_POLYTOPE_SLACK = 1e-11
_PIVOT_CAP = 10000


@dataclass(frozen=True)
class MatrixGame:
    """A rows x cols payoff matrix with entries in [0, 1]; A maximizes."""

    payoff: np.ndarray

    def __post_init__(self):
        payoff = np.asarray(self.payoff, dtype=float)
        if payoff.ndim != 2 or payoff.size == 0:
            raise InvariantError("payoff must be a non-empty 2-d matrix")
        if payoff.min() < -1e-9 or payoff.max() > 1.0 + 1e-9:
            raise InvariantError("payoff entries must lie in [0, 1]")
        payoff = np.clip(payoff, 0.0, 1.0)
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)

    @property
    def rows(self) -> int:
        return self.payoff.shape[0]

    @property
    def cols(self) -> int:
        return self.payoff.shape[1]


@dataclass(frozen=True)
class MixedAction:
    """A mixed strategy over one player's actions (keys are row/col indexes)."""

    weights: Dist

    @staticmethod
    def from_vector(vec: Iterable[float]) -> "MixedAction":
        vec = np.asarray(list(vec), dtype=float)
        vec = np.clip(vec, 0.0, None)
        vec[vec < 1e-12] = 0.0
        total = vec.sum()
        if total <= 0:
            raise InvariantError("mixed action has no mass")
        vec = vec / total
        return MixedAction(Dist({i: float(p) for i, p in enumerate(vec)}))

    def vector(self, n: int) -> np.ndarray:
        return np.array([self.weights[i] for i in range(n)])

    def support(self) -> frozenset:
        return frozenset(self.weights.support())


@dataclass(frozen=True)
class SolveResult:
    value: float
    opt_a: MixedAction
    opt_b: MixedAction
    payoff: np.ndarray

    @cached_property
    def max_support_a(self) -> frozenset:
        """Union of supports over all optimal Player-A strategies."""
        support, _ = maximal_support_optimal(MatrixGame(self.payoff), self.value)
        return support


def instantiate(form: GameForm, outcome_values) -> MatrixGame:
    """Value the form's outcomes with ``outcome_values`` (a total map)."""
    vals = np.empty(len(form.outcomes))
    for k, o in enumerate(form.outcomes):
        if o not in outcome_values:
            raise InvariantError(f"no value for outcome {o!r}")
        vals[k] = outcome_values[o]
    return MatrixGame(vals[form.index_table()])


# -- simplex core -------------------------------------------------------------


def _simplex(tableau: np.ndarray, basis: np.ndarray, cost: np.ndarray, blocked=None) -> np.ndarray:
    """Maximize cost.x in place and return the final reduced-cost row.

    ``tableau`` is (m, n+1) with the rhs in the last column and a feasible
    basic solution in ``basis``.  Dantzig's rule with a switch to Bland's
    rule after a pivot budget prevents cycling.
    """
    m, width = tableau.shape
    n = width - 1
    z = cost[basis] @ tableau[:, :n] - cost  # reduced costs, optimal when >= 0
    if blocked is not None:
        mask = np.zeros(n, dtype=bool)
        mask[list(blocked)] = True
    else:
        mask = None
    for pivots in range(_PIVOT_CAP):
        cand = z < -1e-11
        if mask is not None:
            cand &= ~mask
        if not cand.any():
            return z
        if pivots < 200:  # Dantzig, then Bland once a cycle is plausible
            enter = int(np.where(cand, z, np.inf).argmin())
        else:
            enter = int(cand.argmax())
        col = tableau[:, enter]
        pos = col > 1e-11
        if not pos.any():
            raise SolverError("unbounded linear program")
        ratios = np.where(pos, tableau[:, -1] / np.where(pos, col, 1.0), np.inf)
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        leave = int(ties[np.argmin(basis[ties])])
        piv = tableau[leave] / col[leave]
        tableau -= np.outer(col, piv)
        tableau[leave] = piv
        z -= z[enter] * piv[:n]
        basis[leave] = enter
    raise SolverError("simplex exceeded the pivot cap", residual=float(-z.min()))


@dataclass(frozen=True)
class LinearConstraint:
    """lower <= coeffs . sigma <= upper over the row weights."""

    coeffs: tuple
    lower: float | None = None
    upper: float | None = None


def solve_lp(c: np.ndarray, a_ub=None, b_ub=None, a_eq=None, b_eq=None):
    """Maximize ``c.x`` s.t. ``a_ub x <= b_ub``, ``a_eq x = b_eq``, ``x >= 0``.

    Returns ``(x, value)`` or ``None`` when infeasible.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    rows = []
    kinds = []  # 'ub' or 'eq'
    if a_ub is not None:
        for row, b in zip(np.atleast_2d(np.asarray(a_ub, dtype=float)), np.asarray(b_ub, dtype=float)):
            rows.append((row, float(b)))
            kinds.append("ub")
    if a_eq is not None:
        for row, b in zip(np.atleast_2d(np.asarray(a_eq, dtype=float)), np.asarray(b_eq, dtype=float)):
            rows.append((row, float(b)))
            kinds.append("eq")
    m = len(rows)
    n_slack = sum(1 for k in kinds if k == "ub")
    width = n + n_slack + m  # artificials on every row keep the setup uniform
    tableau = np.zeros((m, width + 1))
    basis = np.empty(m, dtype=int)
    art_cols = []
    si = 0
    for i, ((row, b), kind) in enumerate(zip(rows, kinds)):
        sign = 1.0 if b >= 0 else -1.0
        tableau[i, :n] = sign * row
        tableau[i, -1] = sign * b
        slack_col = None
        if kind == "ub":
            slack_col = n + si
            tableau[i, slack_col] = sign
            si += 1
        if slack_col is not None and sign > 0:
            basis[i] = slack_col
        else:
            col = n + n_slack + i
            tableau[i, col] = 1.0
            basis[i] = col
            art_cols.append(col)

    if art_cols:
        phase1 = np.zeros(width)
        phase1[art_cols] = -1.0
        _simplex(tableau, basis, phase1)
        infeasibility = sum(tableau[i, -1] for i in range(m) if basis[i] in art_cols)
        if infeasibility > 1e-8:
            return None
        for i in range(m):
            if basis[i] in art_cols:
                for j in range(n + n_slack):
                    if abs(tableau[i, j]) > 1e-9:
                        piv = tableau[i] / tableau[i, j]
                        tableau -= np.outer(tableau[:, j], piv)
                        tableau[i] = piv
                        basis[i] = j
                        break
    cost = np.zeros(width)
    cost[:n] = c
    _simplex(tableau, basis, cost, blocked=art_cols if art_cols else None)
    x = np.zeros(width)
    x[basis] = tableau[:, -1]
    return x[:n], float(c @ x[:n])


# -- matrix game solving ------------------------------------------------------


def _saddle(payoff: np.ndarray):
    row_min = payoff.min(axis=1)
    col_max = payoff.max(axis=0)
    maximin = row_min.max()
    minimax = col_max.min()
    if minimax - maximin <= 1e-12:
        return float(maximin), int(row_min.argmax()), int(col_max.argmin())
    return None


def _solve_lp_game(payoff: np.ndarray):
    """Shifted-positive LP: max 1.y s.t. (M+1) y <= 1.  Returns value, sigma, tau."""
    n, m = payoff.shape
    mp = payoff + 1.0
    width = m + n
    tableau = np.zeros((n, width + 1))
    tableau[:, :m] = mp
    tableau[:, m:width] = np.eye(n)
    tableau[:, -1] = 1.0
    basis = np.arange(m, width)
    cost = np.zeros(width)
    cost[:m] = 1.0
    z = _simplex(tableau, basis, cost)
    y = np.zeros(width)
    y[basis] = tableau[:, -1]
    total = y[:m].sum()
    if total <= 0:
        raise SolverError("degenerate game LP", residual=float(total))
    value = 1.0 / total - 1.0
    tau = y[:m] / total
    sigma = np.clip(z[m:width], 0.0, None)  # duals live on the slack columns
    sigma_total = sigma.sum()
    if sigma_total <= 0:
        raise SolverError("degenerate dual solution", residual=float(sigma_total))
    sigma /= sigma_total
    return float(value), sigma, tau


def _value_2x2(payoff: np.ndarray) -> float:
    a, b = payoff[0]
    c, d = payoff[1]
    return float((a * d - b * c) / (a + d - b - c))


_PAIRS = {k: [(i, j) for i in range(k) for j in range(i + 1, k)] for k in (2, 3)}


def _kernel_value(payoff: np.ndarray):
    """Exact value via square sub-game kernels (matrices up to 3x3).

    Every matrix game is solved by some square sub-game whose closed-form
    mixed solution is optimal in the full game; with no saddle point the
    kernel is 2x2 or 3x3 here.  Candidates are certified against all pure
    rows and columns before being accepted.
    """
    n, m = payoff.shape
    for rows in _PAIRS[n]:
        sub_r = payoff[list(rows), :]
        for cols in _PAIRS[m]:
            k = sub_r[:, list(cols)]
            a, b = k[0]
            c, d = k[1]
            den = a + d - b - c
            if abs(den) < 1e-14:
                continue
            v = (a * d - b * c) / den
            s1 = (d - c) / den
            t1 = (d - b) / den
            if not (-1e-12 <= s1 <= 1 + 1e-12 and -1e-12 <= t1 <= 1 + 1e-12):
                continue
            sigma = np.zeros(n)
            sigma[rows[0]], sigma[rows[1]] = s1, 1.0 - s1
            tau = np.zeros(m)
            tau[cols[0]], tau[cols[1]] = t1, 1.0 - t1
            if (sigma @ payoff).min() >= v - 1e-11 and (payoff @ tau).max() <= v + 1e-11:
                return float(v), np.clip(sigma, 0.0, 1.0), np.clip(tau, 0.0, 1.0)
    if n == 3 and m == 3:
        # full-support kernel via the adjugate
        adj = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                minor = payoff[[k for k in range(3) if k != i]][:, [k for k in range(3) if k != j]]
                adj[i, j] = ((-1) ** (i + j)) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
        denom = adj.sum()
        if abs(denom) > 1e-14:
            det = float(np.linalg.det(payoff))
            v = det / denom
            sigma = adj.sum(axis=1) / denom
            tau = adj.sum(axis=0) / denom
            if sigma.min() >= -1e-12 and tau.min() >= -1e-12:
                sigma = np.clip(sigma, 0.0, None)
                tau = np.clip(tau, 0.0, None)
                sigma /= sigma.sum()
                tau /= tau.sum()
                if (sigma @ payoff).min() >= v - 1e-11 and (payoff @ tau).max() <= v + 1e-11:
                    return float(v), sigma, tau
    return None


def matrix_value(payoff: np.ndarray) -> float:
    """Minimax value only (fast path used by the fixed-point sweeps)."""
    payoff = np.asarray(payoff, dtype=float)
    n, m = payoff.shape
    if n == 1:
        return float(payoff.min())
    if m == 1:
        return float(payoff.max())
    saddle = _saddle(payoff)
    if saddle is not None:
        return saddle[0]
    if n == 2 and m == 2:
        return _value_2x2(payoff)
    if n <= 3 and m <= 3:
        kernel = _kernel_value(payoff)
        if kernel is not None:
            return kernel[0]
    else:
        # duplicate rows/columns are common in instantiated forms; drop them
        reduced = np.unique(np.unique(payoff, axis=0), axis=1)
        if reduced.shape != payoff.shape:
            return matrix_value(reduced)
    value, _, _ = _solve_lp_game(payoff)
    return value


def matrix_values_stack(stack: np.ndarray) -> np.ndarray:
    """Values of a (k, n, m) stack of payoff matrices, vectorized.

    Saddle points and 2x2 games are handled in bulk; anything left falls back
    to the scalar solver.  This is the per-sweep workhorse of the fixed-point
    module.
    """
    k, n, m = stack.shape
    out = np.empty(k)
    if k == 0:
        return out
    row_min = stack.min(axis=2)
    maximin = row_min.max(axis=1)
    minimax = stack.max(axis=1).min(axis=1)
    saddle = (minimax - maximin) <= 1e-12
    out[saddle] = maximin[saddle]
    rest = np.nonzero(~saddle)[0]
    if rest.size == 0:
        return out
    if n == 2 and m == 2:
        sub = stack[rest]
        a, b = sub[:, 0, 0], sub[:, 0, 1]
        c, d = sub[:, 1, 0], sub[:, 1, 1]
        out[rest] = (a * d - b * c) / (a + d - b - c)
        return out
    for i in rest:
        out[i] = matrix_value(stack[i])
    return out


def solve(game: MatrixGame | np.ndarray) -> SolveResult:
    """Value and one optimal mixed strategy per player."""
    payoff = game.payoff if isinstance(game, MatrixGame) else MatrixGame(game).payoff
    n, m = payoff.shape
    if n == 1 and m == 1:
        value, sigma, tau = float(payoff[0, 0]), np.array([1.0]), np.array([1.0])
    elif n == 1:
        j = int(payoff[0].argmin())
        value, sigma, tau = float(payoff[0, j]), np.array([1.0]), np.eye(m)[j]
    elif m == 1:
        i = int(payoff[:, 0].argmax())
        value, sigma, tau = float(payoff[i, 0]), np.eye(n)[i], np.array([1.0])
    else:
        saddle = _saddle(payoff)
        if saddle is not None:
            value, i, j = saddle
            sigma, tau = np.eye(n)[i], np.eye(m)[j]
        elif n == 2 and m == 2:
            a, b = payoff[0]
            c, d = payoff[1]
            den = a + d - b - c
            value = float((a * d - b * c) / den)
            sigma = np.clip(np.array([(d - c) / den, (a - b) / den]), 0.0, 1.0)
            tau = np.clip(np.array([(d - b) / den, (a - c) / den]), 0.0, 1.0)
            sigma /= sigma.sum()
            tau /= tau.sum()
        else:
            kernel = _kernel_value(payoff) if (n <= 3 and m <= 3) else None
            if kernel is not None:
                value, sigma, tau = kernel
            else:
                value, sigma, tau = _solve_lp_game(payoff)
    return SolveResult(value, MixedAction.from_vector(sigma), MixedAction.from_vector(tau), payoff)


def strategy_value(game: MatrixGame, sigma: MixedAction | np.ndarray) -> float:
    """Guaranteed payoff of the row strategy: min over pure columns."""
    payoff = game.payoff
    vec = sigma.vector(payoff.shape[0]) if isinstance(sigma, MixedAction) else np.asarray(sigma)
    return float((vec @ payoff).min())


def counter_value(game: MatrixGame, tau: MixedAction | np.ndarray) -> float:
    """Guaranteed payoff of the column strategy: max over pure rows."""
    payoff = game.payoff
    vec = tau.vector(payoff.shape[1]) if isinstance(tau, MixedAction) else np.asarray(tau)
    return float((payoff @ vec).max())


def _optimality_rows(payoff: np.ndarray, value: float, rows: Sequence[int]):
    """-M[rows].T sigma <= -(value - slack), one inequality per column."""
    sub = payoff[list(rows), :]
    return -sub.T, np.full(payoff.shape[1], -(value - _POLYTOPE_SLACK))


def best_weight_on_row(game: MatrixGame, row: int, value: float | None = None) -> float:
    """max sigma(row) over optimal strategies; 0 if the row is never optimal."""
    payoff = game.payoff
    n = payoff.shape[0]
    if value is None:
        value = solve(game).value
    c = np.zeros(n)
    c[row] = 1.0
    a_ub, b_ub = _optimality_rows(payoff, value, range(n))
    res = solve_lp(c, a_ub, b_ub, np.ones((1, n)), np.ones(1))
    if res is None:
        return 0.0
    return res[1]


def maximal_support_optimal(game: MatrixGame, value: float | None = None):
    """The union of optimal supports, realised by one optimal strategy.

    Per row, maximizes the weight the optimal polytope allows on that row;
    averaging the maximizers keeps optimality (the polytope is convex) and
    realises the union support.
    """
    payoff = game.payoff
    n = payoff.shape[0]
    if value is None:
        value = solve(game).value
    a_ub, b_ub = _optimality_rows(payoff, value, range(n))
    a_eq, b_eq = np.ones((1, n)), np.ones(1)
    members = []
    witnesses = []
    for row in range(n):
        c = np.zeros(n)
        c[row] = 1.0
        res = solve_lp(c, a_ub, b_ub, a_eq, b_eq)
        if res is not None and res[1] > SUPPORT_TOL:
            members.append(row)
            witnesses.append(res[0])
    if not witnesses:
        # the optimal polytope is never empty; fall back to the solver's witness
        opt = solve(game).opt_a.vector(n)
        members = [i for i in range(n) if opt[i] > SUPPORT_TOL]
        witnesses = [opt]
    mean = np.mean(witnesses, axis=0)
    return frozenset(members), MixedAction.from_vector(mean)


def support_constrained_optimal(
    game: MatrixGame,
    support: Iterable[int],
    side_constraints: Sequence[LinearConstraint] = (),
    *,
    require_optimal: bool = True,
    value: float | None = None,
) -> MixedAction | None:
    """An optimal strategy with support exactly ``support``, or ``None``.

    Maximizes the minimum weight placed on the support subject to the value
    floor and the side constraints; the request is feasible exactly when that
    maximum exceeds ``SUPPORT_TOL``.
    """
    support = sorted(set(support))
    if not support:
        raise InvariantError("support must be non-empty")
    payoff = game.payoff
    n = payoff.shape[0]
    k = len(support)
    # variables: sigma over the support rows, then t
    c = np.zeros(k + 1)
    c[-1] = 1.0
    ub_rows = []
    ub_rhs = []
    for pos in range(k):
        row = np.zeros(k + 1)
        row[pos] = -1.0
        row[-1] = 1.0
        ub_rows.append(row)          # t - sigma_pos <= 0
        ub_rhs.append(0.0)
    if require_optimal:
        if value is None:
            value = solve(game).value
        opt_a, opt_b = _optimality_rows(payoff, value, support)
        for row, b in zip(opt_a, opt_b):
            ub_rows.append(np.append(row, 0.0))
            ub_rhs.append(b)
    for cons in side_constraints:
        coeffs = np.asarray(cons.coeffs, dtype=float)[support]
        if cons.upper is not None:
            ub_rows.append(np.append(coeffs, 0.0))
            ub_rhs.append(cons.upper)
        if cons.lower is not None:
            ub_rows.append(np.append(-coeffs, 0.0))
            ub_rhs.append(-cons.lower)
    a_eq = np.zeros((1, k + 1))
    a_eq[0, :k] = 1.0
    res = solve_lp(c, np.array(ub_rows), np.array(ub_rhs), a_eq, np.ones(1))
    if res is None or res[1] <= SUPPORT_TOL:
        return None
    full = np.zeros(n)
    full[support] = res[0][:k]
    return MixedAction.from_vector(full)
