"""Independent reference computations the tests compare against.

Everything here is written the slow, obvious way: direct enumeration
over joint profiles with exact rational probabilities, and plain loops
for chain propagation. None of it shares code with the package's
vectorized paths, which is the point.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from fractions import Fraction

import numpy as np


def _seat_action_laws_rational(spec, team, policy, n, w):
    """Per-seat action laws as Fractions, observations integrated out."""
    t = spec.teams[team]
    if policy.kind == "symmetric-iid":
        bases = [policy.base] * n
    elif policy.kind == "product":
        bases = list(policy.members)
    else:
        raise ValueError("mixture handled separately")
    laws = []
    for b in bases:
        law = [Fraction(0)] * t.actions.size
        for y in range(t.observations.size):
            qy = Fraction(float(t.obs_kernel[w][y]))
            for u in range(t.actions.size):
                law[u] += qy * Fraction(float(b.kernel.rows[y][u]))
        laws.append(law)
    return laws


def joint_action_law_rational(spec, team, policy, n, w):
    """Joint law of the team's action profile given the world point.

    Returns a dict mapping action tuples to exact Fractions. Floats are
    promoted to their exact binary values, so the only approximation in
    the oracle is whatever the inputs already carried.
    """
    t = spec.teams[team]
    if policy.kind == "mixture":
        out = defaultdict(Fraction)
        for weight, profile in policy.components:
            laws = []
            for d in profile:
                law = [Fraction(0)] * t.actions.size
                for y in range(t.observations.size):
                    law[d.act(y)] += Fraction(float(t.obs_kernel[w][y]))
                laws.append(law)
            for prof in itertools.product(range(t.actions.size), repeat=n):
                q = Fraction(float(weight))
                for k, u in enumerate(prof):
                    q *= laws[k][u]
                    if q == 0:
                        break
                if q != 0:
                    out[prof] += q
        return dict(out)
    laws = _seat_action_laws_rational(spec, team, policy, n, w)
    out = {}
    for prof in itertools.product(range(t.actions.size), repeat=n):
        q = Fraction(1)
        for k, u in enumerate(prof):
            q *= laws[k][u]
            if q == 0:
                break
        if q != 0:
            out[prof] = q
    return out


def _profile_team_cost(spec, team, w, profiles):
    """Average per-seat cost of one joint profile pair at world point w."""
    stats = []
    for j in range(2):
        t = spec.teams[j]
        counts = np.bincount(np.asarray(profiles[j]), minlength=t.actions.size)
        emp = counts / len(profiles[j])
        stats.append(t.statistic.apply_raw(emp))
    cost = spec.teams[team].cost
    return math.fsum(
        cost.value(w, int(u), stats[0], stats[1]) for u in profiles[team]
    ) / len(profiles[team])


def oracle_exact_cost(spec, p1, p2, team_sizes, team):
    """Expected team cost by full enumeration with rational probabilities."""
    terms = []
    for w in range(spec.n_world):
        pw = Fraction(float(spec.prior[w]))
        if pw == 0:
            continue
        law1 = joint_action_law_rational(spec, 0, p1, team_sizes[0], w)
        law2 = joint_action_law_rational(spec, 1, p2, team_sizes[1], w)
        for prof1, q1 in law1.items():
            for prof2, q2 in law2.items():
                c = _profile_team_cost(spec, team, w, (prof1, prof2))
                terms.append(float(pw * q1 * q2) * c)
    return math.fsum(terms)


def oracle_chain_cost(init, action_given_state, stage_cost, next_rows, horizon):
    """Total expected cost of a single agent walking a Markov chain.

    init: initial state weights; action_given_state[t]: matrix P(u | x);
    stage_cost(t, x, u): float; next_rows(t, x, u): next-state weights.
    No mean-field reading, so this is only valid for decoupled dynamics.
    """
    mu = [float(v) for v in init]
    n_x = len(mu)
    total = 0.0
    for t in range(horizon):
        pu = action_given_state[t]
        n_u = len(pu[0])
        for x in range(n_x):
            for u in range(n_u):
                total += mu[x] * float(pu[x][u]) * stage_cost(t, x, u)
        if t + 1 == horizon:
            break
        nxt = [0.0] * n_x
        for x in range(n_x):
            for u in range(n_u):
                m = mu[x] * float(pu[x][u])
                if m != 0.0:
                    row = next_rows(t, x, u)
                    for z in range(n_x):
                        nxt[z] += m * float(row[z])
        mu = nxt
    return total


def oracle_mismatch_maps(m1, m2, tau):
    """Smoothed response means of the pursuit/evasion fixture.

    Team 1 tracks m2, team 2 evades m1; with softmax smoothing at
    temperature tau the response means have closed forms.
    """

    def sigmoid(z):
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)

    return sigmoid((2.0 * m2 - 1.0) / tau), sigmoid((1.0 - 2.0 * m1) / tau)
