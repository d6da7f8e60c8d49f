import pytest

from alphaloom.dsl import parse
from alphaloom.dsl.catalogue import CATALOGUE
from alphaloom.errors import CanonicalizationError, CompileError, RecordError
from alphaloom.logic import (
    ConstraintSet,
    MarketLogic,
    MarketLogicStruct,
    Predicate,
    Prediction,
    canonicalize_fields,
    check,
    compile_constraints,
    deserialize,
    serialize,
)
from alphaloom.records import dumps_canonical


def divergence_struct_raw(w=1):
    """The canonical worked example: price up and volume not up, bet on
    reversal over one day."""
    return {
        "H_struct": {
            "C": {
                "formula": "price_trend_up AND volume_trend_not_up",
                "predicates": [
                    {"id": "price_trend_up", "v": "price", "op": "trend_up", "theta": "", "w": w},
                    {
                        "id": "volume_trend_not_up",
                        "v": "volume",
                        "op": "trend_not_up",
                        "theta": "",
                        "w": w,
                    },
                ],
            },
            "B": {"y": "forward_return", "d": "-1", "h": 1},
        }
    }


class TestCanonicalize:
    def test_synonyms_and_defaults(self):
        raw = {
            "C": {
                "formula": "",
                "predicates": [{"id": "p1", "v": "PRICE", "op": "rises", "theta": None, "w": None}],
            },
            "B": {"y": "next_period_return", "d": "-1", "h": None},
        }
        h = canonicalize_fields(raw)
        assert h.predicates[0].v == "price"
        assert h.predicates[0].op == "trend_up"
        assert h.predicates[0].w == 1
        assert h.b == Prediction(y="forward_return", d=-1, h=1)
        assert h.formula == "p1"

    def test_direction_text_normalization(self):
        for raw_d, want in [("-1", -1), ("+1", 1), (1, 1), ("negative", -1), ("UP", 1)]:
            raw = divergence_struct_raw()
            raw["H_struct"]["B"]["d"] = raw_d
            assert canonicalize_fields(raw).b.d == want

    def test_missing_direction_is_error(self):
        raw = divergence_struct_raw()
        del raw["H_struct"]["B"]["d"]
        with pytest.raises(CanonicalizationError, match="direction"):
            canonicalize_fields(raw)

    def test_unmappable_direction_is_error(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["B"]["d"] = "sideways"
        with pytest.raises(CanonicalizationError):
            canonicalize_fields(raw)

    def test_duplicate_predicate_ids_error(self):
        raw = divergence_struct_raw()
        preds = raw["H_struct"]["C"]["predicates"]
        preds[1] = dict(preds[0])
        raw["H_struct"]["C"]["formula"] = "price_trend_up"
        with pytest.raises(CanonicalizationError, match="duplicate"):
            canonicalize_fields(raw)

    def test_unknown_variable_is_error(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["C"]["predicates"][0]["v"] = "earnings"
        with pytest.raises(CanonicalizationError, match="earnings"):
            canonicalize_fields(raw)

    def test_formula_referencing_unknown_predicate(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["C"]["formula"] = "price_trend_up AND ghost"
        with pytest.raises(CanonicalizationError, match="ghost"):
            canonicalize_fields(raw)

    def test_volume_synonyms(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["C"]["predicates"][1]["v"] = "turnover"
        assert canonicalize_fields(raw).predicates[1].v == "volume"

    def test_idempotent(self):
        h = canonicalize_fields(divergence_struct_raw(w=5))
        again = canonicalize_fields(h.to_record())
        assert again == h

    def test_unmappable_target_is_error(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["B"]["y"] = "volatility"
        with pytest.raises(CanonicalizationError, match="target"):
            canonicalize_fields(raw)


class TestCompile:
    def test_worked_example(self):
        gamma = compile_constraints(canonicalize_fields(divergence_struct_raw()))
        assert gamma.allowed_variables == frozenset({"open", "high", "low", "close", "volume"})
        assert gamma.operator_families == frozenset(
            {
                "cross_sectional",
                "time_series_aggregation",
                "time_series_change",
                "time_series_relation",
            }
        )
        # the five canonical members are reachable through those families
        members = set()
        for family in gamma.operator_families:
            members.update(CATALOGUE.members_of(family))
        assert {"RANK", "ZSCORE", "DELTA", "TS_CORR", "TS_MEAN"} <= members
        assert gamma.parameter_constraints["window"].minimum == 1
        assert gamma.parameter_constraints["lag"].minimum == 1
        assert gamma.direction == Prediction(y="forward_return", d=-1, h=1)

    def test_single_volume_trend_predicate(self):
        raw = {
            "C": {"formula": "", "predicates": [{"id": "v_up", "v": "volume", "op": "trend_up", "w": 5}]},
            "B": {"y": "forward_return", "d": "+1", "h": 1},
        }
        gamma = compile_constraints(canonicalize_fields(raw))
        assert gamma.allowed_variables == frozenset({"volume"})
        assert {
            "time_series_change",
            "time_series_aggregation",
            "smoothing_decay",
        } <= gamma.operator_families
        assert "time_series_relation" not in gamma.operator_families
        assert gamma.direction.d == 1
        assert gamma.parameter_constraints["window"].advised == (2, 10)

    def test_deterministic_and_byte_identical(self):
        h = canonicalize_fields(divergence_struct_raw(w=3))
        one = compile_constraints(h)
        two = compile_constraints(h)
        assert one == two
        assert serialize(one) == serialize(two)

    def test_unrecognized_op_names_predicate(self):
        h = MarketLogicStruct(
            formula="p1",
            predicates=(Predicate(id="p1", v="close", op="wiggles", theta="", w=1),),
            b=Prediction(y="forward_return", d=1, h=1),
        )
        with pytest.raises(CompileError, match="p1"):
            compile_constraints(h)

    def test_monotone_growth_when_adding_predicates(self):
        base_raw = {
            "C": {"formula": "", "predicates": [{"id": "a", "v": "close", "op": "trend_up", "w": 2}]},
            "B": {"y": "forward_return", "d": "+1", "h": 1},
        }
        small = compile_constraints(canonicalize_fields(base_raw))
        grown_raw = {
            "C": {
                "formula": "",
                "predicates": base_raw["C"]["predicates"]
                + [{"id": "b", "v": "volume", "op": "at_low", "w": 9}],
            },
            "B": {"y": "forward_return", "d": "+1", "h": 1},
        }
        grown = compile_constraints(canonicalize_fields(grown_raw))
        assert small.allowed_variables <= grown.allowed_variables
        assert small.operator_families <= grown.operator_families

    def test_or_formula_admits_conditional_family(self):
        raw = divergence_struct_raw()
        raw["H_struct"]["C"]["formula"] = "price_trend_up OR volume_trend_not_up"
        gamma = compile_constraints(canonicalize_fields(raw))
        assert "conditional_logical" in gamma.operator_families


class TestCheck:
    @pytest.fixture()
    def gamma(self):
        return compile_constraints(canonicalize_fields(divergence_struct_raw()))

    def test_example_factor_conforms(self, gamma):
        report = check(parse("-TS_CORR(RANK(open),RANK(volume),10)"), gamma)
        assert report.ok and not report.violations

    def test_variable_violation(self):
        raw = {
            "C": {"formula": "", "predicates": [{"id": "v", "v": "volume", "op": "trend_up", "w": 5}]},
            "B": {"y": "forward_return", "d": "+1", "h": 1},
        }
        gamma = compile_constraints(canonicalize_fields(raw))
        report = check(parse("TS_MEAN(high,5)"), gamma)
        assert not report.ok
        assert any(v.rule == "variable" and "high" in v.message for v in report.violations)

    def test_family_violation(self, gamma):
        report = check(parse("RSI(close,14)"), gamma)
        assert not report.ok
        assert any(v.rule == "operator_family" for v in report.violations)

    def test_glue_families_always_allowed(self, gamma):
        report = check(parse("ABS(LOG(close)) + SQRT(volume)"), gamma)
        assert report.ok

    def test_ok_report_is_consistent_with_walk(self, gamma):
        from alphaloom.dsl import list_operators, list_variables

        expr = parse("ZSCORE(DELTA(close, 3)) - RANK(volume)")
        report = check(expr, gamma)
        assert report.ok
        assert list_variables(expr) <= gamma.allowed_variables
        allowed = gamma.operator_families | {"arithmetic", "mathematical"}
        for op in list_operators(expr):
            family = next(
                sig.family for sig in CATALOGUE.signatures() if sig.name == op
            )
            assert family in allowed


class TestRecords:
    def test_logic_roundtrip_byte_identical(self):
        logic = MarketLogic(
            id="mined-abc",
            provenance="mined",
            logic_text="volume-less rallies revert",
            c_text="price up without volume",
            b_text="short-horizon return negative",
        )
        line = serialize(logic)
        assert serialize(deserialize(line)) == line

    def test_struct_roundtrip(self):
        h = canonicalize_fields(divergence_struct_raw(w=4))
        line = serialize(h)
        assert deserialize(line) == h
        assert serialize(deserialize(line)) == line

    def test_gamma_roundtrip(self):
        gamma = compile_constraints(canonicalize_fields(divergence_struct_raw(w=4)))
        line = serialize(gamma)
        assert deserialize(line) == gamma

    def test_missing_b_is_error(self):
        record = {"schema_version": 1, "H_struct": {"C": {"formula": "p", "predicates": []}}}
        with pytest.raises((RecordError, CanonicalizationError)):
            deserialize(dumps_canonical(record))

    def test_version_mismatch(self):
        with pytest.raises(RecordError):
            deserialize('{"schema_version": 99, "id": "x"}')

    def test_two_serializations_byte_identical(self):
        h = canonicalize_fields(divergence_struct_raw(w=2))
        assert serialize(h) == serialize(canonicalize_fields(divergence_struct_raw(w=2)))
