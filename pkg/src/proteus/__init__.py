"""Proteus: software modules on simulated reconfigurable hardware, exposed
to unmodified native applications as genuine character-device endpoints."""

from .channel import ChannelHandle, DuplexChannel, PollStatus, RingBuffer, Side, create_duplex
from .core import Platform, Policy, DeploymentState
from .ham import Ham, HamDescriptor, HardwareImage, SimulatedFpga
from .manifest import Implementation, ModuleManifest, load_manifest
from .modem import DialPlan, Modem, parse_at_line, parse_dial_plan
from .trace import TraceEvent, TraceKind, TraceLog

__version__ = "0.1.0"

__all__ = [
    "ChannelHandle",
    "DuplexChannel",
    "PollStatus",
    "RingBuffer",
    "Side",
    "create_duplex",
    "Platform",
    "Policy",
    "DeploymentState",
    "Ham",
    "HamDescriptor",
    "HardwareImage",
    "SimulatedFpga",
    "Implementation",
    "ModuleManifest",
    "load_manifest",
    "DialPlan",
    "Modem",
    "parse_at_line",
    "parse_dial_plan",
    "TraceEvent",
    "TraceKind",
    "TraceLog",
    "__version__",
]
