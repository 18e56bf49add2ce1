"""Timing analysis, configuration synthesis and simulation for Ethernet with
multi-level frame preemption."""

from .analysis import Unschedulable, WcttReport, analyze, is_schedulable, wctt_end_to_end
from .network import (
    Flow,
    Link,
    ModelError,
    Network,
    Node,
    NodeKind,
    Path,
    PreemptionConfig,
    route_all,
    validate_config,
)
from .priority import assign_priorities_dmpo, assign_priorities_kmeans
from .simulator import SimConfig, SimReport, simulate
from .synthesis import assign_preemption_class, total_search_size, valid_configs
from .validate import cross_validate
from .workload import GenParams, generate

__version__ = "0.1.0"

__all__ = [
    "Flow", "GenParams", "Link", "ModelError", "Network", "Node", "NodeKind", "Path",
    "PreemptionConfig", "SimConfig", "SimReport", "Unschedulable", "WcttReport", "analyze",
    "assign_preemption_class", "assign_priorities_dmpo", "assign_priorities_kmeans",
    "cross_validate", "generate", "is_schedulable", "route_all", "simulate",
    "total_search_size", "valid_configs", "validate_config", "wctt_end_to_end",
]
