import json

import httpx
import pytest

from alphaloom.agents import (
    AGENT_NAMES,
    AGENTS,
    AgentRequest,
    HttpBackend,
    HttpBackendConfig,
    RecordingBackend,
    ScriptedBackend,
    call_agent,
    constraint_struct,
    factor_feedback,
    generate_factors,
    generate_logic,
    mine_logic,
    refinement_direction,
)
from alphaloom.dsl import parse, unparse
from alphaloom.errors import (
    AgentCallError,
    AgentError,
    BackendTransportError,
    MissingFixtureError,
    PayloadSchemaError,
    RegenerationBudgetError,
)
from alphaloom.logic import MarketLogic, check, make_logic_id
from alphaloom.records import fingerprint

from .scripted import LOGIC_SCRIPTS, RuleResponder
from .test_logic import divergence_struct_raw

EXAMPLE_FACTOR = "-TS_CORR(RANK(open),RANK(volume),10)"


def _payloads():
    """One schema-valid input payload per agent."""
    component = {
        "name": "factor",
        "expression": EXAMPLE_FACTOR,
        "mathematical_meaning": "rank correlation with sign reversal",
    }
    enriched = dict(component, financial_interpretation="participation confirms moves")
    return {
        "FormulaStructureAgent": {
            "formula": EXAMPLE_FACTOR,
            "factor_operations_library": "RANK(series) ...",
        },
        "FinancialSemanticsMappingAgent": {
            "factor_formula": EXAMPLE_FACTOR,
            "mathematical_analysis": {"components": [component]},
            "factor_operations_library": "RANK(series) ...",
        },
        "MarketLogicAbstractionAgent": {"component_analysis": {"components": [enriched]}},
        "LogicToFinanceConstraintAgent": {
            "logic_text": LOGIC_SCRIPTS[0]["logic_text"],
            "c_text": LOGIC_SCRIPTS[0]["c_text"],
            "b_text": LOGIC_SCRIPTS[0]["b_text"],
            "dsl_operators": ["RANK", "TS_CORR"],
        },
        "FactorExpressionGeneratorAgent": {
            "Gamma": {
                "allowed_variables": ["close", "volume"],
                "operator_families": ["cross_sectional", "time_series_relation"],
                "parameter_constraints": {"window": "positive integer"},
                "direction_constraint": "prefer negative IC on validation",
            },
            "feedback": None,
            "max_candidates": 2,
        },
        "FactorPerformanceFeedbackAgent": {
            "H_struct": divergence_struct_raw()["H_struct"],
            "candidates": [
                {"expression": EXAMPLE_FACTOR, "metrics": {"IC": 0.02, "IR": 0.5, "MDD": -0.1}},
                {
                    "expression": "(RANK(close)-RANK(volume))",
                    "metrics": {"IC": 0.01, "IR": 0.2, "MDD": -0.2},
                },
            ],
        },
        "MarketLogicGeneratorAgent": {
            "H_init_lib": [LOGIC_SCRIPTS[0]["logic_text"]],
            "H_current": None,
            "H_hist": [],
            "E_hist": [],
            "fb_hist": [],
            "round": 1,
        },
        "MarketLogicRefinementDirectionAgent": {
            "H_current": LOGIC_SCRIPTS[0]["logic_text"],
            "H_hist": [LOGIC_SCRIPTS[0]["logic_text"]],
            "E_hist": [{"logic_id": "x", "status": "ok"}],
            "fb_hist": [None],
        },
    }


class TestSchemaConformance:
    @pytest.mark.parametrize("agent_name", AGENT_NAMES)
    def test_fixture_exchange_validates(self, agent_name):
        payload = _payloads()[agent_name]
        backend = RecordingBackend(RuleResponder())
        response = call_agent(agent_name, payload, backend)
        assert response.attempts == 1
        # response payload re-validates against the output schema
        import jsonschema

        jsonschema.validate(response.output_payload, AGENTS[agent_name].output_schema)

    def test_invalid_input_payload_rejected(self):
        with pytest.raises(PayloadSchemaError):
            call_agent(
                "FactorExpressionGeneratorAgent",
                {"Gamma": {}, "max_candidates": "three", "feedback": None},
                RecordingBackend(RuleResponder()),
            )

    def test_extra_output_field_rejected(self):
        table = {
            "MarketLogicAbstractionAgent": {}
        }
        payload = _payloads()["MarketLogicAbstractionAgent"]
        bad = json.dumps(
            {"logic_text": "x", "c_text": "y", "b_text": "z", "confidence": 0.9}
        )
        table["MarketLogicAbstractionAgent"][fingerprint(payload)] = bad
        with pytest.raises(AgentCallError):
            call_agent("MarketLogicAbstractionAgent", payload, ScriptedBackend(table))


class TestScriptedBackend:
    def test_same_payload_byte_identical(self):
        backend = RecordingBackend(RuleResponder())
        payload = _payloads()["MarketLogicGeneratorAgent"]
        one = call_agent("MarketLogicGeneratorAgent", payload, backend)
        two = call_agent("MarketLogicGeneratorAgent", payload, backend)
        assert one.raw_text == two.raw_text
        frozen = backend.frozen()
        three = call_agent("MarketLogicGeneratorAgent", payload, frozen)
        assert three.raw_text == one.raw_text

    def test_missing_fixture_is_error(self):
        backend = ScriptedBackend({})
        with pytest.raises(MissingFixtureError):
            call_agent("MarketLogicGeneratorAgent", _payloads()["MarketLogicGeneratorAgent"], backend)

    def test_table_file_roundtrip(self, tmp_path):
        backend = RecordingBackend(RuleResponder())
        payload = _payloads()["MarketLogicGeneratorAgent"]
        call_agent("MarketLogicGeneratorAgent", payload, backend)
        path = tmp_path / "fixtures.json"
        backend.frozen().to_file(path)
        loaded = ScriptedBackend.from_file(path)
        assert loaded.table == backend.table

    def test_fingerprint_is_stable_hash_of_payload(self):
        payload = {"b": 1, "a": [1, 2]}
        assert fingerprint(payload) == fingerprint({"a": [1, 2], "b": 1})
        assert fingerprint(payload) != fingerprint({"a": [2, 1], "b": 1})


class TestRepairSequence:
    def test_malformed_then_repaired(self):
        payload = _payloads()["MarketLogicAbstractionAgent"]
        fp = fingerprint(payload)
        good = json.dumps({"logic_text": "t", "c_text": "c", "b_text": "b"})
        table = {"MarketLogicAbstractionAgent": {fp: ["not json at all", good]}}
        response = call_agent("MarketLogicAbstractionAgent", payload, ScriptedBackend(table))
        assert response.attempts == 2
        assert response.output_payload["logic_text"] == "t"

    def test_exhaustion_gives_structured_failure(self):
        payload = _payloads()["MarketLogicAbstractionAgent"]
        fp = fingerprint(payload)
        table = {"MarketLogicAbstractionAgent": {fp: json.dumps({"logic_text": "only"})}}
        with pytest.raises(AgentCallError) as err:
            call_agent(
                "MarketLogicAbstractionAgent", payload, ScriptedBackend(table), max_retries=3
            )
        failure = err.value
        assert failure.agent_name == "MarketLogicAbstractionAgent"
        assert failure.attempts == 4  # 1 initial + 3 repair retries
        assert failure.last_error

    def test_fenced_json_accepted(self):
        payload = _payloads()["MarketLogicAbstractionAgent"]
        fp = fingerprint(payload)
        fenced = "```json\n" + json.dumps({"logic_text": "t", "c_text": "c", "b_text": "b"}) + "\n```"
        table = {"MarketLogicAbstractionAgent": {fp: fenced}}
        response = call_agent("MarketLogicAbstractionAgent", payload, ScriptedBackend(table))
        assert response.attempts == 1


class TestMineLogic:
    def test_chain_produces_canonicalizable_logic(self):
        backend = RecordingBackend(RuleResponder())
        logic = mine_logic(EXAMPLE_FACTOR, backend)
        assert logic.provenance == "mined"
        h_struct, gamma = constraint_struct(logic, backend)
        report = check(parse(EXAMPLE_FACTOR), gamma)
        assert report.ok
        assert gamma.direction.d == -1

    def test_unparseable_formula_fails_before_any_call(self):
        backend = RecordingBackend(RuleResponder())
        from alphaloom.errors import DslError

        with pytest.raises(DslError):
            mine_logic("TS_MEAN(close)", backend)
        assert backend.calls == {}

    def test_mutated_meaning_violates_invariant(self):
        class Mutating(RuleResponder):
            def _FinancialSemanticsMappingAgent(self, payload):
                text = super()._FinancialSemanticsMappingAgent(payload)
                obj = json.loads(text)
                obj["components"][0]["mathematical_meaning"] = "something else"
                return json.dumps(obj)

        with pytest.raises(AgentError, match="FinancialSemanticsMappingAgent"):
            mine_logic(EXAMPLE_FACTOR, RecordingBackend(Mutating()))


class TestGenerateFactors:
    def _gamma(self):
        from alphaloom.logic import canonicalize_fields, compile_constraints

        return compile_constraints(canonicalize_fields(divergence_struct_raw(w=5)))

    def test_all_returned_expressions_conform(self):
        gamma = self._gamma()
        result = generate_factors(gamma, None, 5, RecordingBackend(RuleResponder()))
        assert 1 <= len(result.expressions) <= 5
        for expr in result.expressions:
            assert check(expr, gamma).ok

    def test_rejection_triggers_regeneration(self):
        gamma = self._gamma()

        class OneBad(RuleResponder):
            def _FactorExpressionGeneratorAgent(self, payload):
                if payload["feedback"] and isinstance(payload["feedback"], dict) and payload[
                    "feedback"
                ].get("rejected"):
                    factors = [
                        {
                            "expression": "(RANK(DELTA(close,5))-RANK(DELTA(volume,5)))",
                            "rationale": "valid divergence",
                            "operators": ["RANK", "DELTA", "SUB"],
                        }
                    ]
                else:
                    factors = [
                        {
                            "expression": "(RANK(DELTA(close,5))-RANK(DELTA(volume,5)))",
                            "rationale": "valid divergence",
                            "operators": ["RANK", "DELTA", "SUB"],
                        },
                        {
                            "expression": "RSI(high,14)",  # technical family not admitted
                            "rationale": "violates the constraint set",
                            "operators": ["RSI"],
                        },
                    ]
                return json.dumps({"factors": factors, "notes": ""})

        result = generate_factors(gamma, None, 2, RecordingBackend(OneBad()))
        assert [unparse(e) for e in result.expressions] == [
            "(RANK(DELTA(close,5))-RANK(DELTA(volume,5)))"
        ]
        assert result.regenerations == 1
        assert any("RSI" in text for text, _ in result.rejected)

    def test_budget_exhaustion_with_no_valid_candidate(self):
        gamma = self._gamma()

        class AlwaysBad(RuleResponder):
            def _FactorExpressionGeneratorAgent(self, payload):
                return json.dumps(
                    {
                        "factors": [
                            {"expression": "RSI(close,14)", "rationale": "", "operators": ["RSI"]}
                        ],
                        "notes": "",
                    }
                )

        with pytest.raises(RegenerationBudgetError):
            generate_factors(
                gamma, None, 2, RecordingBackend(AlwaysBad()), regeneration_budget=2
            )

    def test_max_candidates_cap(self):
        gamma = self._gamma()
        result = generate_factors(gamma, None, 1, RecordingBackend(RuleResponder()))
        assert len(result.expressions) == 1

    def test_first_round_payload_carries_null_feedback(self):
        gamma = self._gamma()
        seen = {}

        class Spy(RuleResponder):
            def _FactorExpressionGeneratorAgent(self, payload):
                seen["feedback"] = payload["feedback"]
                return super()._FactorExpressionGeneratorAgent(payload)

        generate_factors(gamma, None, 2, RecordingBackend(Spy()))
        assert seen["feedback"] is None


class TestLogicAgents:
    def test_first_round_payload_shape(self):
        captured = {}

        class Spy(RuleResponder):
            def _MarketLogicGeneratorAgent(self, payload):
                captured.update(payload)
                return super()._MarketLogicGeneratorAgent(payload)

        generate_logic(
            ["seed text"], "current", ["h1"], [{"e": 1}], [{"f": 1}], 1, RecordingBackend(Spy())
        )
        assert captured["H_current"] is None
        assert captured["H_hist"] == [] and captured["E_hist"] == [] and captured["fb_hist"] == []

    def test_later_round_payload_carries_history(self):
        captured = {}

        class Spy(RuleResponder):
            def _MarketLogicGeneratorAgent(self, payload):
                captured.update(payload)
                return super()._MarketLogicGeneratorAgent(payload)

        generate_logic(
            ["seed text"], "current", ["h1"], [{"e": 1}], [None], 3, RecordingBackend(Spy())
        )
        assert captured["H_current"] == "current"
        assert captured["fb_hist"] == [None]
        assert captured["round"] == 3

    def test_scripted_iteration_one_logic_canonicalizes(self):
        backend = RecordingBackend(RuleResponder())
        trio = generate_logic([LOGIC_SCRIPTS[0]["logic_text"]], None, [], [], [], 2, backend)
        logic = MarketLogic(
            id=make_logic_id("gen", trio["logic_text"]),
            provenance="generated",
            logic_text=trio["logic_text"],
            c_text=trio["c_text"],
            b_text=trio["b_text"],
        )
        h_struct, gamma = constraint_struct(logic, backend)
        assert h_struct.b.h == 1
        assert gamma.allowed_variables

    def test_factor_feedback_schema_failure_returns_none(self):
        h_struct, _ = constraint_struct(
            MarketLogic(
                id="x",
                provenance="generated",
                logic_text=LOGIC_SCRIPTS[0]["logic_text"],
                c_text=LOGIC_SCRIPTS[0]["c_text"],
                b_text=LOGIC_SCRIPTS[0]["b_text"],
            ),
            RecordingBackend(RuleResponder()),
        )

        class Broken(RuleResponder):
            def _FactorPerformanceFeedbackAgent(self, payload):
                return "{not json"

        fb = factor_feedback(
            h_struct,
            [{"expression": EXAMPLE_FACTOR, "ic": 0.1, "ir": 0.2, "mdd": -0.1}],
            RecordingBackend(Broken()),
        )
        assert fb is None

    def test_refinement_actions_restricted_to_enum(self):
        backend = RecordingBackend(RuleResponder())
        fb = refinement_direction("current", ["h"], [{"logic_id": "x"}], [], backend)
        for action in fb["refinement_actions"]:
            assert action["action"] in {"tighten", "relax", "shift", "reweight"}

    def test_no_test_metrics_in_recorded_payloads(self, synth_panel, synth_splits):
        """End-to-end payload inspection: nothing reads the test split."""
        from alphaloom.loops import LoopSettings, PipelineEngine, outer_loop, start_outer_state
        from alphaloom.backtest import StrategyConfig
        from alphaloom.synthetic import seed_library

        settings = LoopSettings(outer_rounds=1, t_early=1, candidates_per_round=2, max_trials=4)
        engine = PipelineEngine(
            synth_panel, synth_splits, StrategyConfig(top_k=10, n_drop=2), settings
        )
        backend = RecordingBackend(RuleResponder())
        recorded_payloads = []

        original = backend.complete

        def spy(request, attempt=0):
            recorded_payloads.append(request.input_payload)
            return original(request, attempt)

        backend.complete = spy
        state = start_outer_state(seed_library(), backend, settings)
        outer_loop(state, engine, backend, settings)
        assert recorded_payloads
        test_start = synth_splits.test[0].isoformat()
        for payload in recorded_payloads:
            blob = json.dumps(payload)
            # neither the test boundary date nor a test-split label may
            # ever reach an agent payload
            assert test_start not in blob
            assert '"split": "test"' not in blob


class TestHttpBackend:
    def _backend(self, handler, **kwargs):
        transport = httpx.MockTransport(handler)
        config = HttpBackendConfig(
            endpoint="https://llm.example/v1/chat/completions",
            model="test-model",
            credential_env="ALPHALOOM_TEST_KEY",
            **kwargs,
        )
        return HttpBackend(config, transport=transport)

    def _request(self):
        return AgentRequest(
            agent_name="MarketLogicAbstractionAgent",
            system="sys",
            instruction="user text",
            input_payload={"component_analysis": {"components": []}},
        )

    def test_wire_format(self, monkeypatch):
        monkeypatch.setenv("ALPHALOOM_TEST_KEY", "sekrit")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers["authorization"]
            body = json.loads(request.content)
            seen["body"] = body
            return httpx.Response(
                200,
                json={"choices": [{"message": {"content": "{\"ok\": true}"}}]},
            )

        backend = self._backend(handler)
        text = backend.complete(self._request())
        assert text == '{"ok": true}'
        assert seen["auth"] == "Bearer sekrit"
        assert seen["body"]["model"] == "test-model"
        roles = [m["role"] for m in seen["body"]["messages"]]
        assert roles == ["system", "user"]
        assert seen["body"]["messages"][0]["content"] == "sys"
        assert seen["body"]["messages"][1]["content"] == "user text"

    def test_missing_credential_is_transport_error(self, monkeypatch):
        monkeypatch.delenv("ALPHALOOM_TEST_KEY", raising=False)
        backend = self._backend(lambda request: httpx.Response(200, json={}))
        with pytest.raises(BackendTransportError, match="ALPHALOOM_TEST_KEY"):
            backend.complete(self._request())

    def test_server_error_retries_then_fails(self, monkeypatch):
        monkeypatch.setenv("ALPHALOOM_TEST_KEY", "k")
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            return httpx.Response(500, text="boom")

        backend = self._backend(handler, max_retries=2)
        with pytest.raises(BackendTransportError):
            backend.complete(self._request())
        assert calls["n"] == 3
