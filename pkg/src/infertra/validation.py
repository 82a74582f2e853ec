"""Input validation helpers shared by the estimators."""

from __future__ import annotations

from sklearn.utils.validation import check_is_fitted  # noqa: F401  (re-exported)

from .network import RoadNetwork
from .trajectory import (
    InvalidTrajectoryError,
    Observation,
    Trajectory,
    Violation,
    validate_observation,
    validate_trajectory,
)


def check_network(network):
    if not isinstance(network, RoadNetwork):
        raise TypeError(f"expected a RoadNetwork, got {type(network).__name__}")
    if network.n_nodes == 0:
        raise ValueError("network has no nodes")
    return network


def _coerce(item, kind, i):
    if isinstance(item, kind):
        return item
    if isinstance(item, (Trajectory, Observation)):
        return kind(item.nodes, item.times, id=item.id)
    try:
        nodes, times = item
    except (TypeError, ValueError):
        raise TypeError(f"item {i}: expected {kind.__name__} or a (nodes, times) pair") from None
    return kind(tuple(nodes), tuple(times), id=str(i))


def check_trajectories(network, X, allow_empty=False):
    """Validated list of :class:`Trajectory` from trajectories or ``(nodes, times)`` pairs."""
    out = [_coerce(item, Trajectory, i) for i, item in enumerate(X)]
    if not out and not allow_empty:
        raise ValueError("no trajectories given")
    for t in out:
        violations = validate_trajectory(network, t)
        if violations:
            raise InvalidTrajectoryError(violations, t.id)
    return out


def check_observation(network, obs):
    obs = _coerce(obs, Observation, 0)
    violations = validate_observation(network, obs)
    if violations:
        raise InvalidTrajectoryError(violations, obs.id)
    for i in range(1, len(obs.nodes)):
        if obs.nodes[i] == obs.nodes[i - 1]:
            raise InvalidTrajectoryError(
                [Violation("repeated-node", i, f"observation points {i - 1} and {i} share a node")], obs.id)
    return obs


def check_observations(network, X):
    return [check_observation(network, o) for o in X]
