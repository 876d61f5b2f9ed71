"""Power-state management for HPC clusters: simulator, policies, RL agent and workload tools."""
from ._kernels import ACTIVE, BACKEND, SLEEP, SWITCHING_OFF, SWITCHING_ON
from .policy import AgentPolicy, AlwaysOn, RandomPolicy, Timeout, parse_policy
from .simcore import ClusterState, Intent, PowerParams, SimConfig, SimulationResult, run_episode
from .workload import JobSpec, WorkloadTrace, read_swf, write_swf

__version__ = "0.1.0"
