"""Team policy classes and exchangeability tools.

A team of N decision makers can play
  * one behavioral rule shared by everyone, drawn independently
    ("symmetric-iid"),
  * a separate behavioral rule per seat ("product"), or
  * a finite mixture over joint deterministic profiles ("mixture"),
    which is how common randomness is represented.

Mixtures are the closure that symmetrization lives in: averaging a profile
over all seat permutations produces an exchangeable mixture with the same
team cost against any exchangeable opponent. The anticorrelated two-seat
mixture built by ``anticorrelated_pair`` is the standard witness that
exchangeable is strictly weaker than conditionally iid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core.errors import BudgetError, ModelError
from .core.spaces import Kernel

DEFAULT_SUPPORT_CAP = 4096
MAX_PERMUTATION_DMS = 6

ProfileKey = tuple[tuple[int, ...], ...]


@dataclass(frozen=True)
class DetPolicy:
    """Deterministic map from observation index to action index."""

    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @property
    def n_obs(self) -> int:
        return len(self.actions)

    def act(self, y: int) -> int:
        return self.actions[y]

    def as_kernel(self, n_actions: int) -> Kernel:
        return Kernel.deterministic(self.actions, n_actions)


@dataclass(frozen=True)
class BehavioralPolicy:
    """Stochastic observation-to-action rule."""

    kernel: Kernel

    @classmethod
    def from_rows(cls, rows) -> "BehavioralPolicy":
        return cls(Kernel(rows))

    @classmethod
    def deterministic(cls, det: DetPolicy, n_actions: int) -> "BehavioralPolicy":
        return cls(det.as_kernel(n_actions))

    @property
    def n_obs(self) -> int:
        return self.kernel.n_src

    @property
    def n_actions(self) -> int:
        return self.kernel.n_tgt


@dataclass(frozen=True)
class TeamPolicy:
    kind: str
    base: Optional[BehavioralPolicy] = None
    members: Optional[tuple[BehavioralPolicy, ...]] = None
    components: Optional[tuple[tuple[float, tuple[DetPolicy, ...]], ...]] = None

    @classmethod
    def symmetric_iid(cls, base: BehavioralPolicy) -> "TeamPolicy":
        return cls(kind="symmetric-iid", base=base)

    @classmethod
    def product(cls, members: Sequence[BehavioralPolicy]) -> "TeamPolicy":
        members = tuple(members)
        if not members:
            raise ModelError("product policy needs at least one member")
        for m in members:
            if not isinstance(m, BehavioralPolicy):
                raise ModelError(f"product members must be behavioral rules, got {type(m).__name__}")
        return cls(kind="product", members=members)

    @classmethod
    def mixture(cls, components: Sequence[tuple[float, Sequence[DetPolicy]]]) -> "TeamPolicy":
        comps = tuple((float(w), tuple(profile)) for w, profile in components)
        if not comps:
            raise ModelError("mixture policy needs at least one component")
        n = len(comps[0][1])
        for w, profile in comps:
            if w < -1e-15:
                raise ModelError("mixture weights must be nonnegative")
            if len(profile) != n:
                raise ModelError("mixture profiles must all have the same team size")
        total = sum(w for w, _ in comps)
        if abs(total - 1.0) > 1e-12:
            raise ModelError(f"mixture weights sum to {total!r}, not 1")
        return cls(kind="mixture", components=comps)

    @property
    def n_dms(self) -> Optional[int]:
        if self.kind == "product":
            return len(self.members)
        if self.kind == "mixture":
            return len(self.components[0][1])
        return None


def anticorrelated_pair() -> TeamPolicy:
    """Two blind seats forced onto opposite binary actions, fair coin."""
    a = DetPolicy((0,))
    b = DetPolicy((1,))
    return TeamPolicy.mixture([(0.5, (a, b)), (0.5, (b, a))])


def _det_maps_of(b: BehavioralPolicy) -> list[tuple[float, DetPolicy]]:
    """Kuhn decomposition of one behavioral rule into deterministic maps."""
    rows = b.kernel.rows
    out = []
    for choice in itertools.product(range(b.n_actions), repeat=b.n_obs):
        w = 1.0
        for y, u in enumerate(choice):
            w *= rows[y, u]
            if w == 0.0:
                break
        if w > 0.0:
            out.append((w, DetPolicy(choice)))
    return out


def behavioral_to_mixture(b: BehavioralPolicy, n_dms: int, max_support: int = DEFAULT_SUPPORT_CAP) -> TeamPolicy:
    """Expand an iid behavioral team into an equivalent deterministic mixture."""
    if n_dms < 1:
        raise ModelError("team size must be >= 1")
    per_dm = _det_maps_of(b)
    size = len(per_dm) ** n_dms
    if size > max_support:
        raise BudgetError("mixture support", size, max_support)
    comps = []
    for picks in itertools.product(per_dm, repeat=n_dms):
        w = math.prod(p[0] for p in picks)
        comps.append((w, tuple(p[1] for p in picks)))
    return TeamPolicy.mixture(comps)


def _as_profile_law(p: TeamPolicy, max_support: int) -> dict[tuple[DetPolicy, ...], float]:
    """Joint law over deterministic profiles, merging duplicate support points."""
    if p.kind == "mixture":
        law: dict[tuple[DetPolicy, ...], float] = {}
        for w, profile in p.components:
            law[profile] = law.get(profile, 0.0) + w
        return law
    if p.kind == "product":
        per_dm = [_det_maps_of(m) for m in p.members]
        size = math.prod(len(d) for d in per_dm)
        if size > max_support:
            raise BudgetError("mixture support", size, max_support)
        law = {}
        for picks in itertools.product(*per_dm):
            w = math.prod(pk[0] for pk in picks)
            profile = tuple(pk[1] for pk in picks)
            law[profile] = law.get(profile, 0.0) + w
        return law
    raise ModelError("symmetric-iid policies have no finite profile law without a team size")


def permute_profile(p: TeamPolicy, sigma: Sequence[int]) -> TeamPolicy:
    """Reindex seats so that seat j plays what seat sigma[j] played."""
    if p.kind == "symmetric-iid":
        return p
    n = p.n_dms
    sig = tuple(int(s) for s in sigma)
    if sorted(sig) != list(range(n)):
        raise ModelError(f"not a permutation of {n} seats: {sigma!r}")
    if p.kind == "product":
        return TeamPolicy.product(tuple(p.members[j] for j in sig))
    comps = [(w, tuple(profile[j] for j in sig)) for w, profile in p.components]
    return TeamPolicy.mixture(comps)


def symmetrize(p: TeamPolicy, max_support: int = DEFAULT_SUPPORT_CAP) -> TeamPolicy:
    """Average a team policy over all seat permutations.

    The result is an exchangeable mixture that costs the same as p against
    any exchangeable opponent, which is the reduction that lets the team
    optimum be searched over exchangeable policies only. Symmetric-iid
    input is already exchangeable and passes through unchanged.
    """
    if p.kind == "symmetric-iid":
        return p
    n = p.n_dms
    if n > MAX_PERMUTATION_DMS:
        raise BudgetError("permutation enumeration", math.factorial(n), math.factorial(MAX_PERMUTATION_DMS))
    law = _as_profile_law(p, max_support)
    out: dict[tuple[DetPolicy, ...], float] = {}
    scale = 1.0 / math.factorial(n)
    for sigma in itertools.permutations(range(n)):
        for profile, w in law.items():
            moved = tuple(profile[j] for j in sigma)
            out[moved] = out.get(moved, 0.0) + w * scale
    if len(out) > max_support:
        raise BudgetError("mixture support", len(out), max_support)
    key = lambda item: tuple(d.actions for d in item[0])
    comps = sorted(out.items(), key=key)
    total = sum(w for _, w in comps)
    comps = [(w / total, profile) for profile, w in comps]
    return TeamPolicy.mixture(comps)


def is_exchangeable(p: TeamPolicy, tol: float = 1e-9, max_support: int = DEFAULT_SUPPORT_CAP) -> bool:
    """Whether the profile law is invariant under every seat permutation."""
    if p.kind == "symmetric-iid":
        return True
    n = p.n_dms
    if n > MAX_PERMUTATION_DMS:
        raise BudgetError("permutation enumeration", math.factorial(n), math.factorial(MAX_PERMUTATION_DMS))
    law = _as_profile_law(p, max_support)
    for sigma in itertools.permutations(range(n)):
        moved: dict[tuple[DetPolicy, ...], float] = {}
        for profile, w in law.items():
            k = tuple(profile[j] for j in sigma)
            moved[k] = moved.get(k, 0.0) + w
        support = set(law) | set(moved)
        tv = 0.5 * sum(abs(law.get(k, 0.0) - moved.get(k, 0.0)) for k in support)
        if tv > tol:
            return False
    return True


def _inverse_cdf(weights, r: float) -> int:
    """Index drawn by inverse CDF, weights accumulated in input order."""
    cum = np.cumsum(np.asarray(weights, dtype=np.float64))
    idx = int(np.searchsorted(cum, r, side="right"))
    return min(idx, len(cum) - 1)


def sample_profile(p: TeamPolicy, n_dms: int, rng: np.random.Generator) -> list[DetPolicy]:
    """Realize one deterministic profile for a team of n_dms seats.

    Behavioral rules are realized observation by observation, which agrees
    in law with sampling the whole map up front since each seat consumes a
    single observation. Mixtures draw one component with shared randomness.
    """
    if n_dms < 1:
        raise ModelError("team size must be >= 1")
    if p.kind in ("product", "mixture") and p.n_dms != n_dms:
        raise ModelError(f"policy describes {p.n_dms} seats, asked for {n_dms}")
    if p.kind == "mixture":
        weights = [w for w, _ in p.components]
        comp = _inverse_cdf(weights, float(rng.random()))
        return list(p.components[comp][1])
    if p.kind == "product":
        bases = list(p.members)
    else:
        bases = [p.base] * n_dms
    out = []
    for b in bases:
        rows = b.kernel.rows
        draws = rng.random(b.n_obs)
        out.append(DetPolicy(tuple(_inverse_cdf(rows[y], float(draws[y])) for y in range(b.n_obs))))
    return out


def induced_seat_kernel(p: TeamPolicy, seat: int, n_actions: int, max_support: int = DEFAULT_SUPPORT_CAP) -> Kernel:
    """Marginal behavioral rule of one seat under the policy's profile law."""
    if p.kind == "symmetric-iid":
        return p.base.kernel
    if p.kind == "product":
        return p.members[seat].kernel
    law = _as_profile_law(p, max_support)
    n_obs = next(iter(law))[seat].n_obs
    rows = np.zeros((n_obs, n_actions))
    for profile, w in law.items():
        for y in range(n_obs):
            rows[y, profile[seat].act(y)] += w
    return Kernel(rows)
