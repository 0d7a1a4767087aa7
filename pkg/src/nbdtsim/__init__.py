"""nbdtsim: deterministic simulator for the NBDT peer-to-peer overlay."""

from .geometry import (KeySpace, RoutingFault, RoutingTables, build_tables,
                       collection_of, hop_bound, level_of, level_start,
                       level_width, nested_geometry, next_hop, parent_of,
                       relay_path, responsible_node)
from .kernel import (CLIENT, FaultModel, JoinPayload, KeyPayload, Message,
                     MessageType, NetworkState, ReplyPayload, RunReport,
                     run_until_quiescent)
from .protocol import (INTRODUCERS, NodeState, ProtocolError, SimConfig,
                       SimContext, handle, local_op, out_of_range_policy,
                       reorg_watch)
from .workloads import DistributionSpec, default_params, gen_keys, sample_keys
from .experiments import (ExperimentConfig, ExperimentResult, LoadReport,
                          SystemHandle, SystemStatus, export_report)

__version__ = "0.1.0"
