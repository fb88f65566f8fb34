"""Exact finite-horizon values for small deterministic levels, by backward
induction over the reachable state graph. Used to hand a trajectory *exact*
on-policy values and to compute the optimal-return baseline it is compared
against.

The environment's own `step` provides transitions (the point is to evaluate
the scoring chain on the real dynamics); the value recursions here are
independent of the package's estimators.

A state is (agent pose, grid contents); because the goal bonus decays with
the arrival step, values are time-indexed: V[t][state] is the value of being
in `state` with t steps already spent, V[t_max][.] = 0.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from uedlab.gridworld import (
    Action,
    EnvState,
    Level,
    action_space,
    goal_reward,
    reset,
    step,
)


def state_key(env: EnvState) -> tuple:
    a = env.agent
    return (a.row, a.col, int(a.direction), int(a.has_key), env.grid.tobytes())


def build_transition_graph(level: Level):
    """Enumerate states reachable from the level's start pose.

    Returns (start_key, states, transitions) with transitions[(key, action)]
    = (next_key, solves); a solving transition ends the episode, so solved
    states carry no outgoing edges.
    """
    env0 = reset(level)
    actions = action_space(level.family)
    k0 = state_key(env0)
    states: dict[tuple, EnvState] = {k0: env0}
    transitions: dict[tuple, tuple] = {}
    stack = [k0]
    while stack:
        key = stack.pop()
        env = states[key]
        for action in actions:
            nxt, _, _ = step(replace(env, t=0, done=False, solved=False), action)
            nk = state_key(nxt)
            transitions[(key, action)] = (nk, nxt.solved)
            if not nxt.solved and nk not in states:
                states[nk] = replace(nxt, t=0, done=False, solved=False)
                stack.append(nk)
    return k0, states, transitions


def policy_value_tables(level: Level, policy, gamma: float):
    """V[t][key] for a deterministic stationary policy (key -> Action)."""
    _, states, transitions = build_transition_graph(level)
    t_max = level.t_max
    tables = [dict.fromkeys(states, 0.0) for _ in range(t_max + 1)]
    for t in range(t_max - 1, -1, -1):
        nxt_table = tables[t + 1]
        for key in states:
            next_key, solves = transitions[(key, policy(key))]
            if solves:
                tables[t][key] = goal_reward(t + 1, t_max)
            else:
                tables[t][key] = gamma * nxt_table[next_key]
    return tables


def optimal_value_tables(level: Level, gamma: float):
    """V*[t][key]: backward induction with a max over actions."""
    _, states, transitions = build_transition_graph(level)
    actions = action_space(level.family)
    t_max = level.t_max
    tables = [dict.fromkeys(states, 0.0) for _ in range(t_max + 1)]
    for t in range(t_max - 1, -1, -1):
        nxt_table = tables[t + 1]
        for key in states:
            best = -np.inf
            for action in actions:
                next_key, solves = transitions[(key, action)]
                q = goal_reward(t + 1, t_max) if solves else gamma * nxt_table[next_key]
                best = max(best, q)
            tables[t][key] = best
    return tables


def make_hashed_policy(level: Level, rng: np.random.Generator):
    """A fixed deterministic stationary policy: each state draws one action
    lazily from `rng` and keeps it forever."""
    actions = action_space(level.family)
    table: dict[tuple, Action] = {}

    def policy(key: tuple) -> Action:
        if key not in table:
            table[key] = actions[int(rng.integers(len(actions)))]
        return table[key]

    return policy


def rollout_with_exact_values(level: Level, policy, value_tables):
    """Play `policy` from the start pose; pair each visited state with its
    exact time-indexed value. Returns (rewards, values, solved) where values
    has the usual trailing bootstrap (0 at termination by construction:
    a solved episode's next state is terminal and a timeout sits at the
    exhausted horizon, where the table is identically 0)."""
    env = reset(level)
    rewards: list[float] = []
    values: list[float] = [value_tables[0][state_key(env)]]
    while not env.done:
        env, reward, _ = step(env, policy(state_key(env)))
        rewards.append(reward)
        if env.solved:
            values.append(0.0)
        else:
            values.append(value_tables[env.t][state_key(env)])
    return np.asarray(rewards), np.asarray(values), env.solved
