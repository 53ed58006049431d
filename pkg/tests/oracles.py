"""Independent reference implementations used to cross-check the package.

Everything here is deliberately written a different way from the library:
plain fixed-point iteration instead of the sentinel-initialised sweep,
exhaustive trajectory enumeration instead of mass propagation, policy
iteration with direct linear solves instead of value iteration, and
central finite differences instead of reverse-mode gradients.
"""

from __future__ import annotations

import numpy as np

from gridirl.nets import forward


def soft_values_fixed_point(transition, reward, gamma, goal=None, tol=1e-13, sweeps=200000):
    """Iterate v = logsumexp_a(r + gamma * T v) from zero until stable."""
    n_states = transition.shape[0]
    v = np.zeros(n_states)
    for _ in range(sweeps):
        backup = v.copy()
        if goal is not None:
            backup[goal] = 0.0
        q = reward[:, None] + gamma * np.einsum("sap,p->sa", transition, backup)
        new_v = np.logaddexp.reduce(q, axis=1)
        if np.max(np.abs(new_v - v)) < tol:
            return new_v
        v = new_v
    raise AssertionError("reference soft backup did not converge")


def soft_values_horizon(transition, reward, gamma, goal, sweeps):
    """Exactly `sweeps` soft backups from -inf with the goal pinned to zero."""
    n_states = transition.shape[0]
    v = np.full(n_states, -np.inf)
    q = None
    for _ in range(sweeps):
        backup = v.copy()
        backup[goal] = 0.0
        # -inf values turn exp-weights to zero; guard 0 * -inf via where.
        tv = np.einsum("sap,p->sa", transition, np.where(np.isfinite(backup), backup, -1e30))
        q = reward[:, None] + gamma * tv
        v = np.logaddexp.reduce(q, axis=1)
    return v, q


def policy_iteration(transition, reward, gamma):
    """Optimal values via policy iteration with direct evaluation solves."""
    n_states, n_actions, _ = transition.shape
    actions = np.zeros(n_states, dtype=int)
    for _ in range(1000):
        chain = transition[np.arange(n_states), actions]
        values = np.linalg.solve(np.eye(n_states) - gamma * chain, reward)
        q = reward[:, None] + gamma * np.einsum("sap,p->sa", transition, values)
        improved = q.argmax(axis=1)
        if np.array_equal(improved, actions):
            return values, actions
        actions = improved
    raise AssertionError("reference policy iteration did not converge")


def policy_value_direct(transition, policy_probs, reward, gamma):
    """Evaluate a stochastic policy by solving (I - gamma P) v = r."""
    n_states = transition.shape[0]
    chain = np.einsum("sa,sap->sp", policy_probs, transition)
    return np.linalg.solve(np.eye(n_states) - gamma * chain, reward)


def enumerate_visitation(transition, policy_probs, start, horizon, goal=None):
    """State visitation mass by exhaustive enumeration of trajectory prefixes.

    Walks every positive-probability prefix of length up to `horizon`,
    accumulating the probability of being in each state at each step.
    Mass that reaches the goal is dropped (absorbed), matching the
    propagation semantics.
    """
    n_states, n_actions, _ = transition.shape
    successors = [
        [
            [(t, transition[s, a, t]) for t in range(n_states) if transition[s, a, t] > 0.0]
            for a in range(n_actions)
        ]
        for s in range(n_states)
    ]
    counts = np.zeros(n_states)

    def visit(state, depth, prob):
        if goal is not None and state == goal:
            return
        counts[state] += prob
        if depth == horizon:
            return
        for action in range(n_actions):
            p_action = prob * policy_probs[state, action]
            if p_action == 0.0:
                continue
            for nxt, p_next in successors[state][action]:
                visit(nxt, depth + 1, p_action * p_next)

    for state in range(n_states):
        if start[state] > 0.0:
            visit(state, 1, start[state])
    return counts


def goal_path_action_conditionals(next_state, reward, goal, max_actions):
    """First-action distribution over goal-reaching paths, by enumeration.

    For a deterministic MDP given as a (state, action) -> next state
    table, weighs every path that reaches the goal within `max_actions`
    actions by exp(sum of rewards of the states it visits before the
    goal), treating the goal as absorbing. Returns the per-state
    conditional distribution of the first action.
    """
    n_states, n_actions = next_state.shape
    cache: dict = {}

    def mass(state, budget):
        # total weight of paths from `state` reaching the goal in <= budget actions
        if state == goal:
            return 1.0
        if budget == 0:
            return 0.0
        key = (state, budget)
        if key not in cache:
            total = 0.0
            for action in range(n_actions):
                total += np.exp(reward[state]) * mass(next_state[state, action], budget - 1)
            cache[key] = total
        return cache[key]

    probs = np.zeros((n_states, n_actions))
    for state in range(n_states):
        if state == goal:
            continue
        weights = np.array([
            np.exp(reward[state]) * mass(next_state[state, action], max_actions - 1)
            for action in range(n_actions)
        ])
        probs[state] = weights / weights.sum()
    return probs


def finite_difference_gradients(params, x, error_signal, step=1e-5):
    """Central finite differences of error_signal . forward(params, x).

    Perturbs every weight and bias entry in place and restores it,
    returning gradient blocks shaped like the parameters.
    """
    error = np.asarray(error_signal, dtype=np.float64)

    def objective():
        reward, _ = forward(params, x)
        return float(error @ reward)

    grads = []
    for block in range(len(params.layers)):
        block_grads = []
        for array in (params.weights[block], params.biases[block]):
            grad = np.zeros_like(array)
            flat = array.reshape(-1)
            grad_flat = grad.reshape(-1)
            for i in range(flat.size):
                kept = flat[i]
                flat[i] = kept + step
                high = objective()
                flat[i] = kept - step
                low = objective()
                flat[i] = kept
                grad_flat[i] = (high - low) / (2.0 * step)
            block_grads.append(grad)
        grads.append(tuple(block_grads))
    return grads


def random_mdp(seed, n_states, n_actions, sparsity=None, goal=None, gamma=0.9):
    """A random dense or sparse MDP as raw arrays (transition, start)."""
    rng = np.random.default_rng(seed)
    if sparsity is None:
        transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    else:
        transition = np.zeros((n_states, n_actions, n_states))
        for s in range(n_states):
            for a in range(n_actions):
                targets = rng.choice(n_states, size=min(sparsity, n_states), replace=False)
                probs = rng.dirichlet(np.ones(targets.size))
                transition[s, a, targets] = probs
    start = rng.dirichlet(np.ones(n_states))
    return transition, start


def random_policy(seed, n_states, n_actions):
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.ones(n_actions), size=n_states)
