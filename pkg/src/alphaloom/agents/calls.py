"""Schema-enforced agent exchanges and the pipeline's agent operations.

``call_agent`` owns the repair loop: an invalid completion is
re-prompted with a repair instruction appended, up to ``max_retries``
times; exhaustion raises a structured :class:`AgentCallError`.  The
same validation path runs for every backend.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

import jsonschema

from ..dsl import CATALOGUE, FactorExpr, parse, unparse
from ..dsl.catalogue import Signature
from ..errors import AgentCallError, AgentError, PayloadSchemaError, RegenerationBudgetError
from ..logic import (
    ConstraintSet,
    MarketLogic,
    MarketLogicStruct,
    canonicalize_fields,
    check,
    compile_constraints,
    make_logic_id,
)
from ..records import dumps_canonical
from .backends import AgentRequest, AgentResponse
from .schemas import (
    AGENTS,
    FACTOR_FEEDBACK,
    FACTOR_GENERATOR,
    FINANCIAL_SEMANTICS,
    FORMULA_STRUCTURE,
    LOGIC_ABSTRACTION,
    LOGIC_GENERATOR,
    LOGIC_REFINEMENT,
    LOGIC_TO_CONSTRAINT,
)

DEFAULT_MAX_RETRIES = 3

_FENCE_RE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.DOTALL)


def _extract_json(text: str) -> dict:
    candidate = text.strip()
    fenced = _FENCE_RE.match(candidate)
    if fenced:
        candidate = fenced.group(1)
    obj = json.loads(candidate)
    if not isinstance(obj, dict):
        raise json.JSONDecodeError("completion is not a JSON object", candidate, 0)
    return obj


def _render_instruction(spec, payload: dict, repair: str | None) -> str:
    parts = [
        spec.instruction,
        "Input:",
        dumps_canonical(payload),
        "Respond with ONLY a JSON object matching this schema:",
        dumps_canonical(spec.output_schema),
    ]
    if repair:
        parts.append(repair)
    return "\n\n".join(parts)


def call_agent(
    agent_name: str,
    payload: dict,
    backend,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> AgentResponse:
    """One validated exchange with repair-retry on malformed completions."""
    spec = AGENTS[agent_name]
    try:
        jsonschema.validate(payload, spec.input_schema)
    except jsonschema.ValidationError as exc:
        raise PayloadSchemaError(f"{agent_name} input: {exc.message}") from exc

    repair: str | None = None
    last_error = ""
    raw_text = ""
    attempts = 0
    for attempt in range(max_retries + 1):
        request = AgentRequest(
            agent_name=agent_name,
            system=spec.system,
            instruction=_render_instruction(spec, payload, repair),
            input_payload=payload,
        )
        raw_text = backend.complete(request, attempt=attempt)
        attempts += 1
        try:
            output = _extract_json(raw_text)
            jsonschema.validate(output, spec.output_schema)
        except (json.JSONDecodeError, jsonschema.ValidationError) as exc:
            last_error = getattr(exc, "message", str(exc))
            repair = (
                f"Your previous reply was invalid ({last_error}). "
                "Respond again with ONLY a JSON object that validates against the schema."
            )
            continue
        return AgentResponse(output_payload=output, raw_text=raw_text, attempts=attempts)
    raise AgentCallError(agent_name, attempts, last_error, raw_text)


def operations_library_text() -> str:
    """Human-readable rendering of the operator catalogue for prompts."""
    lines = []
    seen: set[tuple[str, int]] = set()
    for name in CATALOGUE.names():
        for arity in CATALOGUE.arities(name):
            if (name, arity) in seen:
                continue
            seen.add((name, arity))
            sig: Signature = CATALOGUE.lookup(name, arity)
            args = ", ".join(sig.slots)
            lines.append(f"{name}({args}) [{sig.family}]")
    return "\n".join(lines)


def mine_logic(formula: str, backend, max_retries: int = DEFAULT_MAX_RETRIES) -> MarketLogic:
    """Three-stage chain from a factor formula to a human-readable logic.

    Stage order: structural decomposition, financial semantics mapping,
    logic abstraction.  The semantics stage must preserve every
    component's (name, expression, mathematical_meaning) triple exactly;
    a mutation aborts the chain naming the offending stage.
    """
    parse(formula)  # precondition: the formula must be a valid expression
    library = operations_library_text()

    structure = call_agent(
        FORMULA_STRUCTURE,
        {"formula": formula, "factor_operations_library": library},
        backend,
        max_retries,
    )
    semantics = call_agent(
        FINANCIAL_SEMANTICS,
        {
            "factor_formula": formula,
            "mathematical_analysis": structure.output_payload,
            "factor_operations_library": library,
        },
        backend,
        max_retries,
    )

    def triples(payload):
        return [
            (c["name"], c["expression"], c["mathematical_meaning"])
            for c in payload["components"]
        ]

    if triples(structure.output_payload) != triples(semantics.output_payload):
        raise AgentError(
            f"{FINANCIAL_SEMANTICS} mutated mathematical_meaning; "
            "stage outputs must preserve the structural decomposition exactly"
        )

    abstraction = call_agent(
        LOGIC_ABSTRACTION,
        {"component_analysis": semantics.output_payload},
        backend,
        max_retries,
    )
    texts = abstraction.output_payload
    return MarketLogic(
        id=make_logic_id("mined", formula, texts["logic_text"]),
        provenance="mined",
        logic_text=texts["logic_text"],
        c_text=texts["c_text"],
        b_text=texts["b_text"],
    )


def constraint_struct(
    logic: MarketLogic, backend, max_retries: int = DEFAULT_MAX_RETRIES
) -> tuple[MarketLogicStruct, ConstraintSet]:
    """Canonical structured form plus compiled constraints for a logic.

    The agent proposes the structured record; canonicalization and the
    constraint compilation are local and deterministic (the agent's own
    Gamma field is schema-checked but recomputed).
    """
    response = call_agent(
        LOGIC_TO_CONSTRAINT,
        {
            "logic_text": logic.logic_text,
            "c_text": logic.c_text,
            "b_text": logic.b_text,
            "dsl_operators": list(CATALOGUE.names()),
        },
        backend,
        max_retries,
    )
    h_struct = canonicalize_fields(response.output_payload["H_struct"])
    gamma = compile_constraints(h_struct)
    return h_struct, gamma


@dataclass(frozen=True)
class GenerationResult:
    expressions: tuple[FactorExpr, ...]
    regenerations: int
    rejected: tuple[tuple[str, str], ...]  # (expression text, reason)


def generate_factors(
    gamma: ConstraintSet,
    feedback,
    max_candidates: int,
    backend,
    regeneration_budget: int = 3,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> GenerationResult:
    """Constraint-conformant candidate expressions.

    Candidates that fail to parse or violate the constraint set are
    rejected and regenerated (the rejections travel back as feedback),
    bounded by ``regeneration_budget``.  Exhausting the budget with no
    valid candidate raises :class:`RegenerationBudgetError`.
    """
    collected: list[FactorExpr] = []
    seen: set[str] = set()
    rejected: list[tuple[str, str]] = []
    regenerations = 0
    current_feedback = feedback

    while True:
        payload = {
            "Gamma": gamma.to_payload(),
            "feedback": current_feedback,
            "max_candidates": max_candidates,
        }
        response = call_agent(FACTOR_GENERATOR, payload, backend, max_retries)
        round_rejects: list[tuple[str, str]] = []
        for candidate in response.output_payload["factors"]:
            if len(collected) >= max_candidates:
                break
            text = candidate["expression"]
            try:
                expr = parse(text)
            except Exception as exc:  # any DSL error is a rejection, not a crash
                round_rejects.append((text, f"parse: {exc}"))
                continue
            report = check(expr, gamma)
            if not report.ok:
                reason = "; ".join(v.message for v in report.violations)
                round_rejects.append((text, reason))
                continue
            canonical = unparse(expr)
            if canonical in seen:
                continue
            seen.add(canonical)
            collected.append(expr)
        rejected.extend(round_rejects)
        if len(collected) >= max_candidates:
            break
        if not round_rejects:
            break
        if regenerations >= regeneration_budget:
            break
        regenerations += 1
        current_feedback = {
            "prior_feedback": feedback,
            "rejected": [
                {"expression": text, "violations": reason} for text, reason in round_rejects
            ],
        }

    if not collected:
        raise RegenerationBudgetError(
            f"no constraint-conformant candidate after {regenerations} regenerations; "
            f"rejections: {[r[0] for r in rejected]}"
        )
    return GenerationResult(
        expressions=tuple(collected[:max_candidates]),
        regenerations=regenerations,
        rejected=tuple(rejected),
    )


def _metric(value) -> float:
    return 0.0 if value is None else float(value)


def factor_feedback(
    h_struct: MarketLogicStruct,
    candidates: list[dict],
    backend,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> dict | None:
    """Structured feedback over the recent candidate buffer.

    ``candidates`` rows carry "expression" and metric fields.  A schema
    failure returns None (the loop continues with null feedback).
    """
    if not candidates:
        raise AgentError("factor feedback requires at least one candidate")
    payload = {
        "H_struct": h_struct.to_record(),
        "candidates": [
            {
                "expression": row["expression"],
                "metrics": {
                    "IC": _metric(row.get("ic")),
                    "IR": _metric(row.get("ir")),
                    "MDD": _metric(row.get("mdd")),
                },
            }
            for row in candidates
        ],
    }
    try:
        response = call_agent(FACTOR_FEEDBACK, payload, backend, max_retries)
    except AgentCallError:
        return None
    return response.output_payload


def generate_logic(
    library: list[str],
    current: str | None,
    history: list[str],
    evidence: list[dict | None],
    feedback_history: list[dict | None],
    round_no: int,
    backend,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> dict:
    """One new human-readable logic from the generator agent.

    On round 1 the payload carries only the library; later rounds carry
    the full conditioning context.
    """
    if round_no < 1:
        raise AgentError("round numbering starts at 1")
    if round_no == 1:
        current, history, evidence, feedback_history = None, [], [], []
    payload = {
        "H_init_lib": list(library),
        "H_current": current,
        "H_hist": list(history),
        "E_hist": list(evidence),
        "fb_hist": list(feedback_history),
        "round": round_no,
    }
    response = call_agent(LOGIC_GENERATOR, payload, backend, max_retries)
    return response.output_payload


def refinement_direction(
    current: str,
    history: list[str],
    evidence: list[dict | None],
    feedback_history: list[dict | None],
    backend,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> dict | None:
    """Logic-level refinement suggestions; None when the agent fails."""
    payload = {
        "H_current": current,
        "H_hist": list(history),
        "E_hist": list(evidence),
        "fb_hist": list(feedback_history),
    }
    try:
        response = call_agent(LOGIC_REFINEMENT, payload, backend, max_retries)
    except AgentCallError:
        return None
    return response.output_payload
