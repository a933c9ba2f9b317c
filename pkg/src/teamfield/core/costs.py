"""Cost and transition families.

Costs take the world point, one decision maker's action, and the statistic
values of both teams' measures. Families that only depend on a scalar view
of the statistics (everything built in here) also expose a vectorized
``value_batch`` used by the grid searches; for an identity statistic the
scalar view is the index mean of the measure, which coincides with the
mean-embedding value under the embedding (0, 1, ..., n-1).

Transition families produce one row of the controlled kernel at a time and
may depend on the same statistic values, which is how the mean-field
coupling enters the dynamics.
"""

from __future__ import annotations

import numpy as np

from .errors import ModelError

__all__ = [
    "scalar_view",
    "make_static_cost",
    "make_stage_cost",
    "make_transition",
    "TableCost",
    "STATIC_COST_FAMILIES",
    "DYNAMIC_COST_FAMILIES",
    "TRANSITION_FAMILIES",
]


def scalar_view(s) -> float:
    """Collapse a statistic value to a scalar.

    Scalars pass through. A measure is reduced to its index mean, so a
    Bernoulli action law (1-m, m) becomes m.
    """
    if np.isscalar(s) or isinstance(s, (float, int)):
        return float(s)
    w = np.asarray(getattr(s, "weights", s), dtype=np.float64)
    return float(w @ np.arange(len(w)))


def _vector_view(s) -> np.ndarray:
    w = np.asarray(getattr(s, "weights", s), dtype=np.float64)
    if w.ndim != 1:
        raise ModelError("expected a measure-valued statistic")
    return w


class _StaticCost:
    """Base for static cost families."""

    name = ""
    scalar_reducible = True

    def __init__(self, team: int, params: dict):
        self.team = int(team)
        self.params = dict(params)

    def value(self, omega0: int, u: int, s1, s2) -> float:
        return float(self.value_batch(omega0, u, scalar_view(s1), scalar_view(s2)))

    def value_batch(self, omega0: int, u: int, s1, s2):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}


class ConstantCost(_StaticCost):
    name = "constant"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.c = float(params.get("value", 0.0))

    def value_batch(self, omega0, u, s1, s2):
        return np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))[0] * 0.0 + self.c


class TrackOpponentMean(_StaticCost):
    """Quadratic penalty for missing the other team's mean action."""

    name = "track-opponent-mean"

    def value_batch(self, omega0, u, s1, s2):
        s_opp = np.asarray(s2 if self.team == 0 else s1, dtype=float)
        return (u - s_opp) ** 2


class TeamCoordination(_StaticCost):
    """Quadratic penalty for straying from the own team's mean action."""

    name = "team-coordination"

    def value_batch(self, omega0, u, s1, s2):
        s_own = np.asarray(s1 if self.team == 0 else s2, dtype=float)
        return (u - s_own) ** 2


class EvadeOpponentMean(_StaticCost):
    """Reward (as a shifted cost) for moving away from the opponent mean."""

    name = "evade-opponent-mean"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.offset = float(params.get("offset", 1.0))

    def value_batch(self, omega0, u, s1, s2):
        s_opp = np.asarray(s2 if self.team == 0 else s1, dtype=float)
        return self.offset - (u - s_opp) ** 2


class MfMismatchZeroSum(_StaticCost):
    """Pursuit and evasion of the opponent mean in one family.

    Attached to the first team it tracks the second team's mean, attached
    to the second team it runs from the first team's, shifted to stay
    nonnegative on binary actions.
    """

    name = "mf-mismatch-zero-sum"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.offset = float(params.get("offset", 1.0))

    def value_batch(self, omega0, u, s1, s2):
        if self.team == 0:
            return (u - np.asarray(s2, dtype=float)) ** 2
        return self.offset - (u - np.asarray(s1, dtype=float)) ** 2


class SpreadCost(_StaticCost):
    """Penalty for sitting at the own team's mean, rewarding dispersion."""

    name = "spread"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.offset = float(params.get("offset", 1.0))

    def value_batch(self, omega0, u, s1, s2):
        s_own = np.asarray(s1 if self.team == 0 else s2, dtype=float)
        return self.offset - np.abs(u - s_own)


class TableCost:
    """Dense cost table over a scalar statistic grid, bilinearly interpolated.

    values[omega0][u] is a matrix indexed by the two grids. Queries outside
    the grid hull clamp to the boundary. Both teams must use scalar
    statistics for a table cost to make sense; the validator enforces that.
    """

    name = "table"
    scalar_reducible = True

    def __init__(self, team: int, grid1, grid2, values):
        self.team = int(team)
        self.grid1 = np.asarray(grid1, dtype=np.float64)
        self.grid2 = np.asarray(grid2, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)
        for g in (self.grid1, self.grid2):
            if g.ndim != 1 or g.size < 1:
                raise ModelError("cost table grids must be nonempty vectors")
            if g.size > 1 and np.any(np.diff(g) <= 0):
                raise ModelError("cost table grids must be strictly increasing")
        if self.values.ndim != 4:
            raise ModelError("cost table values must have shape (world, action, grid1, grid2)")
        if self.values.shape[2:] != (self.grid1.size, self.grid2.size):
            raise ModelError("cost table grid shape mismatch")

    @staticmethod
    def _locate(grid: np.ndarray, x):
        x = np.clip(np.asarray(x, dtype=float), grid[0], grid[-1])
        if grid.size == 1:
            z = np.zeros_like(x, dtype=np.int64)
            return z, z, np.zeros_like(x, dtype=float)
        hi = np.clip(np.searchsorted(grid, x, side="right"), 1, grid.size - 1)
        lo = hi - 1
        t = (x - grid[lo]) / (grid[hi] - grid[lo])
        return lo, hi, t

    def value_batch(self, omega0, u, s1, s2):
        s1, s2 = np.broadcast_arrays(np.asarray(s1, dtype=float), np.asarray(s2, dtype=float))
        lo1, hi1, t1 = self._locate(self.grid1, s1)
        lo2, hi2, t2 = self._locate(self.grid2, s2)
        v = self.values[omega0, u]
        c00 = v[lo1, lo2]
        c01 = v[lo1, hi2]
        c10 = v[hi1, lo2]
        c11 = v[hi1, hi2]
        return (1 - t1) * ((1 - t2) * c00 + t2 * c01) + t1 * ((1 - t2) * c10 + t2 * c11)

    def value(self, omega0: int, u: int, s1, s2) -> float:
        return float(self.value_batch(omega0, u, scalar_view(s1), scalar_view(s2)))

    def to_dict(self) -> dict:
        return {
            "table": {
                "grid1": [float(v) for v in self.grid1],
                "grid2": [float(v) for v in self.grid2],
                "values": self.values.tolist(),
            }
        }


STATIC_COST_FAMILIES = {
    cls.name: cls
    for cls in (
        ConstantCost,
        TrackOpponentMean,
        TeamCoordination,
        EvadeOpponentMean,
        MfMismatchZeroSum,
        SpreadCost,
    )
}


def make_static_cost(d: dict, team: int):
    """Build a static cost from its JSON form."""
    if "table" in d:
        t = d["table"]
        return TableCost(team, t["grid1"], t["grid2"], t["values"])
    fam = d.get("family")
    if fam not in STATIC_COST_FAMILIES:
        raise ModelError(f"unknown cost family {fam!r}")
    return STATIC_COST_FAMILIES[fam](team, d.get("params", {}))


class _StageCost:
    name = ""

    def __init__(self, team: int, params: dict):
        self.team = int(team)
        self.params = dict(params)

    def value(self, omega0, x, u, sx1, sx2, su1, su2) -> float:
        raise NotImplementedError

    def needs_identity_state_stat(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}


class DynConstantCost(_StageCost):
    name = "constant"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.c = float(params.get("value", 0.0))

    def value(self, omega0, x, u, sx1, sx2, su1, su2):
        return self.c


class StateIndicatorCost(_StageCost):
    """Unit cost for occupying one designated state."""

    name = "state-indicator"

    def __init__(self, team, params):
        super().__init__(team, params)
        self.state = int(params.get("state", 0))

    def value(self, omega0, x, u, sx1, sx2, su1, su2):
        return 1.0 if x == self.state else 0.0


class StateCongestionCost(_StageCost):
    """Own-team state density at the decision maker's current state."""

    name = "congestion"

    def needs_identity_state_stat(self) -> bool:
        return True

    def value(self, omega0, x, u, sx1, sx2, su1, su2):
        own = sx1 if self.team == 0 else sx2
        return float(_vector_view(own)[x])


class ActionCongestionCost(_StageCost):
    """Own-team action density at the chosen action."""

    name = "action-congestion"

    def value(self, omega0, x, u, sx1, sx2, su1, su2):
        own = su1 if self.team == 0 else su2
        return float(_vector_view(own)[u])


class StaticActionStageCost(_StageCost):
    """A static cost family read as a stage cost.

    The inner cost sees the world point, the action, and both teams'
    action statistics; the private state plays no role. A horizon-1 game
    built from this family charges exactly what its static counterpart
    does, which is how the two models are cross-checked.
    """

    name = "static-action"

    def __init__(self, team, params):
        super().__init__(team, params)
        self._inner = make_static_cost(dict(params), team)

    def value(self, omega0, x, u, sx1, sx2, su1, su2):
        return self._inner.value(omega0, u, su1, su2)


DYNAMIC_COST_FAMILIES = {
    cls.name: cls
    for cls in (
        DynConstantCost,
        StateIndicatorCost,
        StateCongestionCost,
        ActionCongestionCost,
        StaticActionStageCost,
    )
}


def make_stage_cost(d: dict, team: int):
    fam = d.get("family")
    if fam not in DYNAMIC_COST_FAMILIES:
        raise ModelError(f"unknown stage cost family {fam!r}")
    return DYNAMIC_COST_FAMILIES[fam](team, d.get("params", {}))


class _Transition:
    name = ""
    statistic_free = False

    def __init__(self, team: int, params: dict, n_states: int, n_actions: int):
        self.team = int(team)
        self.params = dict(params)
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)

    def rows_at(self, t, x, u, sx1, sx2, su1, su2) -> np.ndarray:
        raise NotImplementedError

    def raw_rows(self):
        """Underlying tables for validation, or None when there are none."""
        return None

    def to_dict(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}


class FixedTransition(_Transition):
    """Statistic-free controlled kernel given as a dense table.

    params["rows"] is either one table of shape (states, actions, states)
    shared by every stage or a list of such tables, one per stage.
    """

    name = "fixed"
    statistic_free = True

    def __init__(self, team, params, n_states, n_actions):
        super().__init__(team, params, n_states, n_actions)
        rows = np.asarray(params["rows"], dtype=np.float64)
        if rows.ndim == 3:
            rows = rows[None]
        if rows.ndim != 4 or rows.shape[1:] != (n_states, n_actions, n_states):
            raise ModelError("fixed transition table has the wrong shape")
        self._tables = rows

    def rows_at(self, t, x, u, sx1, sx2, su1, su2):
        table = self._tables[min(t, self._tables.shape[0] - 1)]
        return table[x, u]

    def raw_rows(self):
        return self._tables.reshape(-1, self.n_states)


class StateCopiesAction(_Transition):
    """The next state is exactly the action just taken."""

    name = "state-copies-action"
    statistic_free = True

    def __init__(self, team, params, n_states, n_actions):
        super().__init__(team, params, n_states, n_actions)
        if n_states != n_actions:
            raise ModelError("state-copies-action needs matching state and action counts")
        self._eye = np.eye(n_states)

    def rows_at(self, t, x, u, sx1, sx2, su1, su2):
        return self._eye[u]


class MeanFieldMixtureTransition(_Transition):
    """Base kernel tilted toward the own team's current state distribution.

    The next-state row is (1 - weight) * base[x, u] + weight * mu, with mu
    the own-team state flow. Requires the identity state statistic so the
    full flow is visible.
    """

    name = "mean-field-mixture"

    def __init__(self, team, params, n_states, n_actions):
        super().__init__(team, params, n_states, n_actions)
        self.weight = float(params.get("weight", 0.5))
        if not 0.0 <= self.weight <= 1.0:
            raise ModelError("mean-field-mixture weight must lie in [0, 1]")
        base = np.asarray(params["base"], dtype=np.float64)
        if base.shape != (n_states, n_actions, n_states):
            raise ModelError("mean-field-mixture base table has the wrong shape")
        self._base = base

    def rows_at(self, t, x, u, sx1, sx2, su1, su2):
        own = sx1 if self.team == 0 else sx2
        mu = _vector_view(own)
        return (1.0 - self.weight) * self._base[x, u] + self.weight * mu

    def raw_rows(self):
        return self._base.reshape(-1, self.n_states)


TRANSITION_FAMILIES = {
    cls.name: cls for cls in (FixedTransition, StateCopiesAction, MeanFieldMixtureTransition)
}


def make_transition(d: dict, team: int, n_states: int, n_actions: int):
    fam = d.get("family")
    if fam not in TRANSITION_FAMILIES:
        raise ModelError(f"unknown transition family {fam!r}")
    return TRANSITION_FAMILIES[fam](team, d.get("params", {}), n_states, n_actions)
