"""Exception taxonomy shared across the package."""

from __future__ import annotations


class AlphaloomError(Exception):
    """Base class for all package errors."""


class PanelError(AlphaloomError):
    """Malformed or inconsistent panel data."""


class CsvFormatError(PanelError):
    """Bad row/cell in a CSV input; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyUniverseError(PanelError):
    """Universe filter removed every instrument."""


class SplitError(AlphaloomError):
    """Invalid train/validation/test split specification."""


class DslError(AlphaloomError):
    """Base class for expression language errors."""


class DslSyntaxError(DslError):
    """Tokenizer/parser failure; carries the 0-based character position."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class UnknownOperatorError(DslError):
    pass


class ArityError(DslError):
    pass


class ParameterError(DslError):
    """Operator parameter outside its legal range or not a literal."""


class ExprValidationError(DslError):
    """Structurally well-formed expression violating a catalogue rule."""


class LogicError(AlphaloomError):
    """Base class for market-logic schema errors."""


class CanonicalizationError(LogicError):
    pass


class CompileError(LogicError):
    pass


class RecordError(AlphaloomError):
    """Canonical text record cannot be decoded."""


class SchemaVersionError(RecordError):
    pass


class FitError(AlphaloomError):
    """Score-model fitting failure (e.g. underdetermined system)."""


class LeakageError(AlphaloomError):
    """Attempted read of test-split results during optimization."""


class AgentError(AlphaloomError):
    """Base class for agent-layer errors."""


class PayloadSchemaError(AgentError):
    """Request payload does not validate against the agent's input schema."""


class AgentCallError(AgentError):
    """Completion never produced a schema-valid output.

    Structured failure: carries the agent name, total attempts made and the
    last validation error so loops can record the skip.
    """

    def __init__(self, agent_name: str, attempts: int, last_error: str, raw_text: str = ""):
        self.agent_name = agent_name
        self.attempts = attempts
        self.last_error = last_error
        self.raw_text = raw_text
        super().__init__(
            f"{agent_name}: no schema-valid completion after {attempts} attempts: {last_error}"
        )


class MissingFixtureError(AgentError):
    """Scripted backend has no fixture for this (agent, payload) pair."""


class BackendTransportError(AgentError):
    """HTTP backend transport failure after retries."""


class RegenerationBudgetError(AgentError):
    """Factor generation exhausted its regeneration budget with no valid candidate."""


class RunStateError(AlphaloomError):
    """Run directory cannot be loaded or is in the wrong state."""


class CorruptRecordError(RunStateError):
    pass
