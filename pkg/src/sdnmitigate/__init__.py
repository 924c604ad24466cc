"""Discrete-event simulation of flooding and slow DDoS attacks against a web
server behind an SDN switch, with an in-network defense that probes the
server, classifies the attack, identifies attackers and blocks them with
switch drop rules."""

from .controller import BlockEntry, Controller
from .engine import SchedulingError, Simulator, seconds, to_seconds
from .runner import RunReport, World, emit_report, run_scenario
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario, serialize_scenario
from .sentinel import DetectionEvent, Prober, ProbeState, Sentinel, SentinelConfig, SourceStats
from .topology import AddressPlan, FlowRule, HostAddr, Kind, LinkParams, Packet, Payload, Role, Switch
from .traffic import AttackConfig, BenignConfig
from .victim import ServerConfig, Victim

__version__ = "0.1.0"

__all__ = [
    "AddressPlan", "AttackConfig", "BenignConfig", "BlockEntry", "Controller", "DetectionEvent",
    "FlowRule", "HostAddr", "Kind", "LinkParams", "Packet", "Payload", "ProbeState", "Prober",
    "Role", "RunReport", "ScenarioConfig", "ScenarioError", "SchedulingError", "Sentinel",
    "SentinelConfig", "ServerConfig", "Simulator", "SourceStats", "Switch", "Victim", "World",
    "emit_report", "load_scenario", "parse_scenario", "run_scenario", "seconds",
    "serialize_scenario", "to_seconds",
]
