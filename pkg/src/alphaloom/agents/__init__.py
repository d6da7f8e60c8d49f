"""Agent layer: schema-validated exchanges over pluggable completion backends."""

from .backends import (
    AgentRequest,
    AgentResponse,
    HttpBackend,
    HttpBackendConfig,
    RecordingBackend,
    ScriptedBackend,
)
from .calls import (
    DEFAULT_MAX_RETRIES,
    GenerationResult,
    call_agent,
    constraint_struct,
    factor_feedback,
    generate_factors,
    generate_logic,
    mine_logic,
    operations_library_text,
    refinement_direction,
)
from .schemas import AGENT_NAMES, AGENTS, AgentSpec

__all__ = [
    "AGENTS",
    "AGENT_NAMES",
    "AgentRequest",
    "AgentResponse",
    "AgentSpec",
    "DEFAULT_MAX_RETRIES",
    "GenerationResult",
    "HttpBackend",
    "HttpBackendConfig",
    "RecordingBackend",
    "ScriptedBackend",
    "call_agent",
    "constraint_struct",
    "factor_feedback",
    "generate_factors",
    "generate_logic",
    "mine_logic",
    "operations_library_text",
    "refinement_direction",
]
