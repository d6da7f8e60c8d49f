"""The eight pipeline agents: prompt templates and strict payload schemas.

Every request and response crosses this boundary as JSON validated
against the schemas below, for the scripted and the HTTP backend alike.
Output schemas are closed (no extra fields) so malformed completions are
caught before they reach the loops.
"""

from __future__ import annotations

from dataclasses import dataclass

FORMULA_STRUCTURE = "FormulaStructureAgent"
FINANCIAL_SEMANTICS = "FinancialSemanticsMappingAgent"
LOGIC_ABSTRACTION = "MarketLogicAbstractionAgent"
LOGIC_TO_CONSTRAINT = "LogicToFinanceConstraintAgent"
FACTOR_GENERATOR = "FactorExpressionGeneratorAgent"
FACTOR_FEEDBACK = "FactorPerformanceFeedbackAgent"
LOGIC_GENERATOR = "MarketLogicGeneratorAgent"
LOGIC_REFINEMENT = "MarketLogicRefinementDirectionAgent"


def _string():
    return {"type": "string"}


def _integer():
    return {"type": "integer"}


def _number():
    return {"type": "number"}


def _array(items):
    return {"type": "array", "items": items}


def _object(properties: dict, required: list[str] | None = None, closed: bool = True) -> dict:
    schema: dict = {"type": "object", "properties": properties}
    schema["required"] = sorted(properties) if required is None else required
    if closed:
        schema["additionalProperties"] = False
    return schema


_COMPONENT = _object(
    {
        "name": _string(),
        "expression": _string(),
        "mathematical_meaning": _string(),
    }
)

_COMPONENT_WITH_FINANCE = _object(
    {
        "name": _string(),
        "expression": _string(),
        "mathematical_meaning": _string(),
        "financial_interpretation": _string(),
    }
)

_DIRECTION = {"enum": ["+1", "-1", 1, -1]}

_H_STRUCT = _object(
    {
        "C": _object(
            {
                "formula": _string(),
                "predicates": _array(
                    _object(
                        {
                            "id": _string(),
                            "v": _string(),
                            "op": _string(),
                            "theta": _string(),
                            "w": _integer(),
                        },
                        required=["id", "v", "op"],
                    )
                ),
            }
        ),
        "B": _object(
            {"y": _string(), "d": _DIRECTION, "h": _integer()},
            required=["y", "d"],
        ),
    }
)

_GAMMA = _object(
    {
        "allowed_variables": _array(_string()),
        "operator_families": _array(_string()),
        "parameter_constraints": {"type": "object"},
        "direction_constraint": _string(),
    }
)

# nullable history entries: a failed feedback round appends null
_NULLABLE_OBJECT = {"type": ["object", "null"]}


@dataclass(frozen=True)
class AgentSpec:
    name: str
    system: str
    instruction: str
    input_schema: dict
    output_schema: dict


_SPECS = [
    AgentSpec(
        name=FORMULA_STRUCTURE,
        system=(
            "Decompose the factor formula into operational structure and formal "
            "properties only. Identify sub-expressions, map operators to "
            "mathematical meaning using the factor operations library, and note "
            "any inferred operators. Use only variables {open, close, high, low, "
            "volume, return} with canonical meanings. Do not provide financial "
            "interpretation."
        ),
        instruction=(
            "Identify sub-expressions, map operators to mathematical meaning "
            "using the factor operations library, and return a structured "
            "decomposition."
        ),
        input_schema=_object(
            {"formula": _string(), "factor_operations_library": _string()}
        ),
        output_schema=_object({"components": _array(_COMPONENT)}),
    ),
    AgentSpec(
        name=FINANCIAL_SEMANTICS,
        system=(
            "Translate mathematical factor components into financial "
            "interpretations. Preserve mathematical_meaning exactly, and connect "
            "each component to market behavior, investor psychology, trading "
            "patterns, liquidity, information flow, and risk-return "
            "characteristics using the factor operations library."
        ),
        instruction=(
            "Given factor_formula, mathematical_analysis, and "
            "factor_operations_library, add financial_interpretation to each "
            "component; preserve mathematical_meaning exactly and return only "
            "JSON. Use only variables {open, close, high, low, volume, return} "
            "with their standard meanings."
        ),
        input_schema=_object(
            {
                "factor_formula": _string(),
                "mathematical_analysis": _object({"components": _array(_COMPONENT)}),
                "factor_operations_library": _string(),
            }
        ),
        output_schema=_object({"components": _array(_COMPONENT_WITH_FINANCE)}),
    ),
    AgentSpec(
        name=LOGIC_ABSTRACTION,
        system=(
            "Abstract component-level financial semantics into explicit market "
            "logic H with C/B semantics. Provide a concise, human-readable "
            "logic_text and explicit C (conditions) and B (target, direction, "
            "horizon) to support downstream canonicalization."
        ),
        instruction=(
            "Given component_analysis, infer the market logic H. Provide a "
            "human-readable logic_text plus explicit C (conditions) and B "
            "(target/direction/horizon). Avoid formula details and keep the "
            "logic generalizable."
        ),
        input_schema=_object(
            {
                "component_analysis": _object(
                    {"components": _array(_COMPONENT_WITH_FINANCE)}
                )
            }
        ),
        output_schema=_object(
            {"logic_text": _string(), "c_text": _string(), "b_text": _string()}
        ),
    ),
    AgentSpec(
        name=LOGIC_TO_CONSTRAINT,
        system=(
            "Canonicalize H into H_struct (C as a Boolean formula over "
            "predicates; B with target, direction, horizon), then compile "
            "constraints Gamma over variables, operator families, parameter "
            "ranges, and direction consistency."
        ),
        instruction=(
            "Canonicalize H into H_struct (C as a Boolean formula over "
            "predicates, B with target/direction/horizon), then compile "
            "constraints Gamma."
        ),
        input_schema=_object(
            {
                "logic_text": _string(),
                "c_text": _string(),
                "b_text": _string(),
                "dsl_operators": _array(_string()),
            }
        ),
        output_schema=_object(
            {
                "H_struct": _H_STRUCT,
                "Gamma": _GAMMA,
                "canonicalization_notes": _string(),
            }
        ),
    ),
    AgentSpec(
        name=FACTOR_GENERATOR,
        system=(
            "Generate candidate factor expressions that satisfy Gamma. Select "
            "operators, time windows, and compositions consistent with allowed "
            "variables, operator families, and parameter constraints; ensure "
            "direction consistency."
        ),
        instruction=(
            "Generate candidate factor expressions consistent with Gamma. Use "
            "allowed variables, operator families, parameter constraints, and "
            "direction constraints. Incorporate feedback if provided, and return "
            "up to max_candidates expressions with brief rationale and operator "
            "list."
        ),
        input_schema=_object(
            {
                "Gamma": {"type": "object"},
                "feedback": {"type": ["string", "object", "null"]},
                "max_candidates": _integer(),
            }
        ),
        output_schema=_object(
            {
                "factors": _array(
                    _object(
                        {
                            "expression": _string(),
                            "rationale": _string(),
                            "operators": _array(_string()),
                        }
                    )
                ),
                "notes": _string(),
            }
        ),
    ),
    AgentSpec(
        name=FACTOR_FEEDBACK,
        system=(
            "Summarize candidate performance under a fixed logic. Compare "
            "validation metrics across candidates, identify the best expression, "
            "diagnose weaknesses, and suggest edits to guide the next "
            "generation."
        ),
        instruction=(
            "Compare recent candidates under the same logic and validation "
            "metrics. Identify the best expression and key metrics, explain "
            "weaknesses, and suggest edits to guide the next generation."
        ),
        input_schema=_object(
            {
                "H_struct": {"type": "object"},
                "candidates": _array(
                    _object(
                        {
                            "expression": _string(),
                            "metrics": _object(
                                {"IC": _number(), "IR": _number(), "MDD": _number()}
                            ),
                        }
                    )
                ),
            }
        ),
        output_schema=_object(
            {
                "summary": _object(
                    {"best_expression": _string(), "key_metrics": _string()}
                ),
                "feedback": _array(_string()),
                "suggested_edits": _array(
                    _object(
                        {
                            "action": {"enum": ["tighten", "relax", "shift"]},
                            "detail": _string(),
                        }
                    )
                ),
            }
        ),
    ),
    AgentSpec(
        name=LOGIC_GENERATOR,
        system=(
            "Generate new market logic H = <C,B> based on historical logics and "
            "feedback. Ensure the logic reflects plausible market mechanisms and "
            "remains consistent with the structured C/B schema."
        ),
        instruction=(
            "Use H_init_lib to seed the first-round logic; in later rounds use "
            "H_init_lib, H_current, H_hist, E_hist, and fb_hist to propose a new "
            "market logic grounded in existing market mechanisms and distinct "
            "from prior logics. Output a human-readable logic with explicit C "
            "and B semantics."
        ),
        input_schema=_object(
            {
                "H_init_lib": _array(_string()),
                "H_current": {"type": ["string", "null"]},
                "H_hist": _array(_string()),
                "E_hist": _array(_NULLABLE_OBJECT),
                "fb_hist": _array(_NULLABLE_OBJECT),
                "round": _integer(),
            }
        ),
        output_schema=_object(
            {"logic_text": _string(), "c_text": _string(), "b_text": _string()}
        ),
    ),
    AgentSpec(
        name=LOGIC_REFINEMENT,
        system=(
            "Analyze evidence and propose logic refinement directions. Aggregate "
            "factor performance across time, market conditions, and risk "
            "dimensions; identify logic components that are too broad, vague, or "
            "mismatched with market structure."
        ),
        instruction=(
            "Analyze historical evidence and propose logic refinements. "
            "Summarize factor performance distribution across time, market "
            "conditions, and risk dimensions, and identify logic components that "
            "are too broad, vague, or mismatched with market structure."
        ),
        input_schema=_object(
            {
                "H_current": _string(),
                "H_hist": _array(_string()),
                "E_hist": _array(_NULLABLE_OBJECT),
                "fb_hist": _array(_NULLABLE_OBJECT),
            }
        ),
        output_schema=_object(
            {
                "refinement_actions": _array(
                    _object(
                        {
                            "action": {"enum": ["tighten", "relax", "shift", "reweight"]},
                            "target": _string(),
                            "detail": _string(),
                        }
                    )
                ),
                "focus_variables": _array(_string()),
                "horizon_suggestion": _string(),
                "rationale": _string(),
            }
        ),
    ),
]

AGENTS: dict[str, AgentSpec] = {spec.name: spec for spec in _SPECS}

AGENT_NAMES = tuple(spec.name for spec in _SPECS)
