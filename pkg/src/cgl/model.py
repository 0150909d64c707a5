"""Core domain types: distributions, game forms, concurrent arenas, strategies.

States, actions and Nature states are identified by strings in documents and
on the public types; every :class:`Game` also carries dense integer indexes
(built once at construction) so the fixed-point loops can work on numpy
arrays.  All types are immutable after construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import InvariantError, SchemaError

PROB_TOL = 1e-9

OBJECTIVE_KINDS = ("reach", "safe", "buchi", "cobuchi")

# complement pairs used when swapping the players
_DUAL_KIND = {"reach": "safe", "safe": "reach", "buchi": "cobuchi", "cobuchi": "buchi"}


def _check_prob(value: float, what: str) -> None:
    if not (-PROB_TOL <= value <= 1.0 + PROB_TOL):
        raise InvariantError(f"{what} = {value!r} is not a probability")


@dataclass(frozen=True)
class Dist:
    """A finite probability distribution over element ids.

    Entries must lie in [0, 1] and sum to 1 within ``PROB_TOL``.
    """

    entries: Mapping[str, float]

    def __post_init__(self):
        entries = dict(self.entries)
        total = 0.0
        for key, p in entries.items():
            _check_prob(p, f"probability of {key!r}")
            total += p
        if abs(total - 1.0) > PROB_TOL:
            raise InvariantError(f"distribution sums to {total!r}, not 1")
        object.__setattr__(self, "entries", entries)

    def support(self) -> tuple[str, ...]:
        return tuple(k for k, p in self.entries.items() if p > 0.0)

    def __getitem__(self, key) -> float:
        return self.entries.get(key, 0.0)

    @staticmethod
    def dirac(key) -> "Dist":
        return Dist({key: 1.0})


@dataclass(frozen=True)
class GameForm:
    """A table of abstract outcomes: rows are Player-A actions, columns Player-B.

    ``table[i][j]`` is the outcome id selected when A plays ``actions_a[i]``
    and B plays ``actions_b[j]``.  Every declared outcome must occur in the
    table.
    """

    actions_a: tuple[str, ...]
    actions_b: tuple[str, ...]
    outcomes: tuple[str, ...]
    table: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "actions_a", tuple(self.actions_a))
        object.__setattr__(self, "actions_b", tuple(self.actions_b))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "table", tuple(tuple(row) for row in self.table))
        if not self.actions_a or not self.actions_b or not self.outcomes:
            raise InvariantError("game form needs at least one row, column and outcome")
        if len(set(self.outcomes)) != len(self.outcomes):
            raise InvariantError("duplicate outcome id")
        if len(self.table) != len(self.actions_a):
            raise InvariantError("table has wrong number of rows")
        index = {o: k for k, o in enumerate(self.outcomes)}
        idx = np.empty((self.rows, self.cols), dtype=np.int64)
        seen = set()
        for i, row in enumerate(self.table):
            if len(row) != len(self.actions_b):
                raise InvariantError(f"table row {i} has wrong number of columns")
            for j, o in enumerate(row):
                if o not in index:
                    raise InvariantError(f"table cell ({i},{j}) uses undeclared outcome {o!r}")
                idx[i, j] = index[o]
                seen.add(o)
        if seen != set(self.outcomes):
            unused = sorted(set(self.outcomes) - seen)
            raise InvariantError(f"outcomes never used in the table: {unused}")
        idx.setflags(write=False)
        object.__setattr__(self, "_index_table", idx)
        object.__setattr__(self, "_outcome_index", index)

    @property
    def rows(self) -> int:
        return len(self.actions_a)

    @property
    def cols(self) -> int:
        return len(self.actions_b)

    def index_table(self) -> np.ndarray:
        """rows x cols matrix of outcome indexes into ``outcomes``."""
        return self._index_table

    def outcome_index(self, outcome: str) -> int:
        return self._outcome_index[outcome]


@dataclass(frozen=True)
class Objective:
    kind: str
    target: frozenset[str]

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise InvariantError(f"unknown objective kind {self.kind!r}")
        object.__setattr__(self, "target", frozenset(self.target))


@dataclass(frozen=True)
class Game:
    """A finite concurrent arena plus an objective.

    ``delta[q][i][j]`` names the Nature state selected at player state ``q``
    when A plays ``actions_a[i]`` and B plays ``actions_b[j]``; each Nature
    state carries a fixed distribution over player states.  The bipartite
    player-state / Nature-state shape is kept literal (Dirac Nature states
    are not flattened).
    """

    states: tuple[str, ...]
    actions_a: tuple[str, ...]
    actions_b: tuple[str, ...]
    nature: Mapping[str, Dist]
    delta: Mapping[str, tuple[tuple[str, ...], ...]]
    objective: Objective

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions_a", tuple(self.actions_a))
        object.__setattr__(self, "actions_b", tuple(self.actions_b))
        object.__setattr__(self, "nature", dict(self.nature))
        object.__setattr__(
            self, "delta", {q: tuple(tuple(r) for r in rows) for q, rows in self.delta.items()}
        )
        if len(set(self.states)) != len(self.states):
            raise InvariantError("duplicate state id")
        if not self.states or not self.actions_a or not self.actions_b:
            raise InvariantError("states and both action sets must be non-empty")
        state_index = {q: k for k, q in enumerate(self.states)}
        nature_ids = tuple(self.nature.keys())
        nature_index = {d: k for k, d in enumerate(nature_ids)}
        for d, dist in self.nature.items():
            for q in dist.entries:
                if q not in state_index:
                    raise InvariantError(f"nature state {d!r} mentions unknown state {q!r}")
        na, nb = len(self.actions_a), len(self.actions_b)
        delta_idx = np.empty((len(self.states), na, nb), dtype=np.int64)
        for q in self.states:
            rows = self.delta.get(q)
            if rows is None:
                raise InvariantError(f"delta missing for state {q!r}")
            if len(rows) != na or any(len(r) != nb for r in rows):
                raise InvariantError(f"delta at {q!r} is not |A| x |B|")
            for i, row in enumerate(rows):
                for j, d in enumerate(row):
                    if d not in nature_index:
                        raise InvariantError(f"delta at {q!r} uses unknown Nature state {d!r}")
                    delta_idx[state_index[q], i, j] = nature_index[d]
        for q in self.delta:
            if q not in state_index:
                raise InvariantError(f"delta defined for unknown state {q!r}")
        if not self.objective.target <= set(self.states):
            bad = sorted(self.objective.target - set(self.states))
            raise InvariantError(f"objective target has unknown states: {bad}")

        dist_matrix = np.zeros((len(nature_ids), len(self.states)))
        for d, dist in self.nature.items():
            for q, p in dist.entries.items():
                dist_matrix[nature_index[d], state_index[q]] = p
        delta_idx.setflags(write=False)
        dist_matrix.setflags(write=False)
        object.__setattr__(self, "_state_index", state_index)
        object.__setattr__(self, "_nature_ids", nature_ids)
        object.__setattr__(self, "_nature_index", nature_index)
        object.__setattr__(self, "_delta_idx", delta_idx)
        object.__setattr__(self, "_dist_matrix", dist_matrix)

    # -- dense views used by the numeric modules ---------------------------

    def state_index(self, q: str) -> int:
        try:
            return self._state_index[q]
        except KeyError:
            raise InvariantError(f"unknown state {q!r}") from None

    @property
    def nature_ids(self) -> tuple[str, ...]:
        return self._nature_ids

    def nature_index(self, d: str) -> int:
        return self._nature_index[d]

    def delta_index(self) -> np.ndarray:
        """(|Q|, |A|, |B|) array of Nature indexes."""
        return self._delta_idx

    def dist_matrix(self) -> np.ndarray:
        """(|D|, |Q|) row-stochastic matrix of Nature distributions."""
        return self._dist_matrix

    def target_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.states), dtype=bool)
        for t in self.objective.target:
            mask[self._state_index[t]] = True
        return mask


@dataclass(frozen=True)
class Valuation:
    """A total map from states to values in [0, 1]."""

    values: Mapping[str, float]

    def __post_init__(self):
        values = dict(self.values)
        for q, v in values.items():
            _check_prob(v, f"value of {q!r}")
        object.__setattr__(self, "values", values)

    def __getitem__(self, q: str) -> float:
        return self.values[q]

    def vector(self, game: Game) -> np.ndarray:
        missing = [q for q in game.states if q not in self.values]
        if missing:
            raise InvariantError(f"valuation not total, missing {missing}")
        return np.array([self.values[q] for q in game.states])

    @staticmethod
    def from_vector(game: Game, vec: Iterable[float]) -> "Valuation":
        vec = np.clip(np.asarray(list(vec), dtype=float), 0.0, 1.0)
        return Valuation(dict(zip(game.states, vec.tolist())))

    @staticmethod
    def constant(game: Game, c: float) -> "Valuation":
        return Valuation({q: c for q in game.states})


@dataclass(frozen=True)
class PositionalStrategy:
    """A per-state mixed action for one player ('A' or 'B')."""

    owner: str
    choices: Mapping[str, Dist]

    def __post_init__(self):
        if self.owner not in ("A", "B"):
            raise InvariantError("owner must be 'A' or 'B'")
        object.__setattr__(self, "choices", dict(self.choices))

    def validate(self, game: Game) -> None:
        actions = game.actions_a if self.owner == "A" else game.actions_b
        for q in game.states:
            if q not in self.choices:
                raise InvariantError(f"strategy missing state {q!r}")
            for a in self.choices[q].entries:
                if a not in actions:
                    raise InvariantError(f"strategy at {q!r} uses unknown action {a!r}")

    def weight_matrix(self, game: Game) -> np.ndarray:
        """(|Q|, |actions|) matrix of action weights in declaration order."""
        actions = game.actions_a if self.owner == "A" else game.actions_b
        w = np.zeros((len(game.states), len(actions)))
        for qi, q in enumerate(game.states):
            dist = self.choices[q]
            for ai, a in enumerate(actions):
                w[qi, ai] = dist[a]
        return w


# -- operations --------------------------------------------------------------


def local_interaction(game: Game, q: str) -> GameForm:
    """The game form played at ``q``: outcomes are the Nature states of its row."""
    game.state_index(q)
    rows = game.delta[q]
    seen: list[str] = []
    for row in rows:
        for d in row:
            if d not in seen:
                seen.append(d)
    return GameForm(game.actions_a, game.actions_b, tuple(seen), rows)


def lift_valuation(game: Game, w: Valuation | Mapping[str, float]) -> dict[str, float]:
    """Lift a state valuation to Nature states by averaging under dist."""
    if not isinstance(w, Valuation):
        w = Valuation(w)
    vec = w.vector(game)
    lifted = game.dist_matrix() @ vec
    return dict(zip(game.nature_ids, np.clip(lifted, 0.0, 1.0).tolist()))


def lift_vector(game: Game, vec: np.ndarray) -> np.ndarray:
    """Vector form of :func:`lift_valuation` (indexed like ``game.nature_ids``)."""
    return game.dist_matrix() @ vec


def swap_players(game: Game) -> Game:
    """Exchange the players and complement the objective.

    The value of the swapped game for its Player A equals one minus the value
    of the original game, which is how Player-B analyses are expressed.
    """
    delta = {
        q: tuple(tuple(rows[i][j] for i in range(len(game.actions_a)))
                 for j in range(len(game.actions_b)))
        for q, rows in game.delta.items()
    }
    objective = Objective(_DUAL_KIND[game.objective.kind], game.objective.target)
    return Game(game.states, game.actions_b, game.actions_a, game.nature, delta, objective)


# -- JSON formats -------------------------------------------------------------


def _require(doc: Mapping, key: str, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing field")
    return doc[key]


def _string_list(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
        raise SchemaError(path, "expected a list of strings")
    return tuple(value)


def _dist_from_json(value, path: str) -> Dist:
    if not isinstance(value, dict):
        raise SchemaError(path, "expected an object of probabilities")
    for k, p in value.items():
        if not isinstance(p, (int, float)):
            raise SchemaError(f"{path}.{k}", "probability must be a number")
    try:
        return Dist({k: float(p) for k, p in value.items()})
    except InvariantError as exc:
        raise InvariantError(f"{path}: {exc}") from None


def parse_game_dict(doc: Mapping) -> Game:
    if not isinstance(doc, Mapping):
        raise SchemaError("$", "expected an object")
    states = _string_list(_require(doc, "states", "$"), "$.states")
    actions_a = _string_list(_require(doc, "actions_a", "$"), "$.actions_a")
    actions_b = _string_list(_require(doc, "actions_b", "$"), "$.actions_b")
    nature_doc = _require(doc, "nature", "$")
    if not isinstance(nature_doc, dict):
        raise SchemaError("$.nature", "expected an object")
    nature = {d: _dist_from_json(v, f"$.nature.{d}") for d, v in nature_doc.items()}
    delta_doc = _require(doc, "delta", "$")
    if not isinstance(delta_doc, dict):
        raise SchemaError("$.delta", "expected an object")
    delta = {}
    for q, rows in delta_doc.items():
        if not isinstance(rows, list):
            raise SchemaError(f"$.delta.{q}", "expected a list of rows")
        delta[q] = tuple(_string_list(row, f"$.delta.{q}[{i}]") for i, row in enumerate(rows))
    obj_doc = _require(doc, "objective", "$")
    kind = _require(obj_doc, "kind", "$.objective")
    if kind not in OBJECTIVE_KINDS:
        raise SchemaError("$.objective.kind", f"unknown kind {kind!r}")
    target = _string_list(_require(obj_doc, "target", "$.objective"), "$.objective.target")
    return Game(states, actions_a, actions_b, nature, delta, Objective(kind, frozenset(target)))


def parse_game(text: str) -> Game:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return parse_game_dict(doc)


def serialize_game(game: Game) -> dict:
    return {
        "states": list(game.states),
        "actions_a": list(game.actions_a),
        "actions_b": list(game.actions_b),
        "nature": {d: dict(dist.entries) for d, dist in game.nature.items()},
        "delta": {q: [list(row) for row in rows] for q, rows in game.delta.items()},
        "objective": {"kind": game.objective.kind, "target": sorted(game.objective.target)},
    }


def parse_strategy_dict(doc: Mapping) -> PositionalStrategy:
    owner = _require(doc, "owner", "$")
    if owner not in ("A", "B"):
        raise SchemaError("$.owner", "must be 'A' or 'B'")
    choices_doc = _require(doc, "choices", "$")
    if not isinstance(choices_doc, dict):
        raise SchemaError("$.choices", "expected an object")
    choices = {q: _dist_from_json(v, f"$.choices.{q}") for q, v in choices_doc.items()}
    return PositionalStrategy(owner, choices)


def parse_strategy(text: str) -> PositionalStrategy:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return parse_strategy_dict(doc)


def serialize_strategy(strategy: PositionalStrategy) -> dict:
    return {
        "owner": strategy.owner,
        "choices": {q: dict(d.entries) for q, d in strategy.choices.items()},
    }


def parse_game_form_dict(doc: Mapping) -> GameForm:
    actions_a = _string_list(_require(doc, "actions_a", "$"), "$.actions_a")
    actions_b = _string_list(_require(doc, "actions_b", "$"), "$.actions_b")
    outcomes = _string_list(_require(doc, "outcomes", "$"), "$.outcomes")
    table_doc = _require(doc, "table", "$")
    if not isinstance(table_doc, list):
        raise SchemaError("$.table", "expected a list of rows")
    table = tuple(_string_list(row, f"$.table[{i}]") for i, row in enumerate(table_doc))
    return GameForm(actions_a, actions_b, outcomes, table)


def parse_game_form(text: str) -> GameForm:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None
    return parse_game_form_dict(doc)


def serialize_game_form(form: GameForm) -> dict:
    return {
        "actions_a": list(form.actions_a),
        "actions_b": list(form.actions_b),
        "outcomes": list(form.outcomes),
        "table": [list(row) for row in form.table],
    }
