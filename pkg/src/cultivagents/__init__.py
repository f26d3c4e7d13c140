"""Profile-injected multi-agent gardening chat: role-specialized personas, a
model-based speaker selector with previous-speaker exclusion and fixed-length
rounds, and a streaming WebSocket service with deterministic offline backends."""

__version__ = "0.1.0"

from .agents import AgentSet, AgentSpec, builtin_agent_set, effective_prompt, load_agent_plugins
from .coordinator import CoordinatorConfig, SessionRuntime, run_round
from .profile import UserProfile, serialize_profile, validate_profile
from .providers import OpenAICompatibleProvider, ProviderRequest, ScriptedProvider, TokenDelta
from .session import Session, TranscriptEntry, create_session, export_transcript
from .store import SessionStore

__all__ = [
    "AgentSet",
    "AgentSpec",
    "CoordinatorConfig",
    "OpenAICompatibleProvider",
    "ProviderRequest",
    "ScriptedProvider",
    "Session",
    "SessionRuntime",
    "SessionStore",
    "TokenDelta",
    "TranscriptEntry",
    "UserProfile",
    "builtin_agent_set",
    "create_session",
    "effective_prompt",
    "export_transcript",
    "load_agent_plugins",
    "run_round",
    "serialize_profile",
    "validate_profile",
]
