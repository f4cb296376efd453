"""Assortment policies and a name-based registry used by the simulator and CLI."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..core import Instance
from ..orders import Batched, Fixed
from .basic import (assignment_to_assortment, pairwise_assignment, policy_greedy, policy_pairwise,
                    policy_random, single_provider_optimal)
from .dynamic import DynamicPairwise, policy_dynamic_pairwise
from .gradient import GdConfig, Surrogate, gd_gradient, gd_objective, policy_gradient_descent
from .group import pairwise_swap_gain, policy_group, swap_gains
from .ordering import (BatchPlan, EnvyCycleError, EnvyGraph, compute_envy_graph, policy_order_aware,
                       reverse_topological_order, topological_batches)

POLICY_NAMES = ("random", "greedy", "pairwise", "group", "group_matched", "gd", "dynamic", "order_aware")


def build_policy(name: str, instance: Instance, seed: int = 0, gd_config: GdConfig | None = None,
                 order=None):
    """Menu source for ``name``: an ``(N, M)`` int8 assortment, or a dynamic menu callable.

    ``order_aware`` needs a known order or batch plan (``Fixed``/``Batched``).
    """
    if name == "random":
        return policy_random(instance, np.random.default_rng(seed))
    if name == "greedy":
        return policy_greedy(instance)
    if name == "pairwise":
        return policy_pairwise(instance)
    if name == "group":
        return policy_group(instance)
    if name == "group_matched":
        return policy_group(instance, matched_only=True)
    if name == "gd":
        cfg = gd_config or GdConfig()
        return policy_gradient_descent(instance, replace(cfg, seed=cfg.seed + seed))
    if name == "dynamic":
        return policy_dynamic_pairwise(instance)
    if name == "order_aware":
        if not isinstance(order, (Fixed, Batched)):
            raise ValueError("order_aware needs a Fixed or Batched response order")
        return policy_order_aware(instance, order)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")


__all__ = [
    "POLICY_NAMES", "BatchPlan", "DynamicPairwise", "EnvyCycleError", "EnvyGraph", "GdConfig",
    "Surrogate", "assignment_to_assortment", "build_policy", "compute_envy_graph", "gd_gradient",
    "gd_objective", "pairwise_assignment", "pairwise_swap_gain", "policy_dynamic_pairwise",
    "policy_gradient_descent", "policy_greedy", "policy_group", "policy_order_aware",
    "policy_pairwise", "policy_random", "reverse_topological_order", "single_provider_optimal",
    "swap_gains", "topological_batches",
]
