import numpy as np
import pytest

from alphaloom.dsl import (
    Call,
    Const,
    Var,
    list_operators,
    list_variables,
    negated,
    parse,
    required_lookback,
    unparse,
)
from alphaloom.errors import (
    ArityError,
    DslSyntaxError,
    ExprValidationError,
    ParameterError,
    UnknownOperatorError,
)

from .progen import random_program


class TestParse:
    def test_single_application(self):
        expr = parse("RANK(close)")
        assert expr.root == Call("RANK", (Var("close"),))

    def test_example_factor_shape(self):
        expr = parse("-TS_CORR(RANK(open), RANK(volume), 10)")
        root = expr.root
        assert root.op == "NEG"
        corr = root.args[0]
        assert corr.op == "TS_CORR"
        assert corr.args[0] == Call("RANK", (Var("open"),))
        assert corr.args[1] == Call("RANK", (Var("volume"),))
        assert corr.args[2] == Const(10.0)

    def test_case_insensitive_normalization(self):
        assert parse("ts_mean(CLOSE, 5)") == parse("TS_MEAN(close, 5)")

    def test_infix_sugar_normalizes_to_calls(self):
        expr = parse("(close > open) ? (volume) : (0)")
        assert expr.root.op == "IFELSE"
        assert list_operators(expr) == {"GT", "IFELSE"}

    def test_precedence(self):
        expr = parse("close + open * 2")
        assert expr.root.op == "ADD"
        assert expr.root.args[1].op == "MUL"

    def test_arity_error(self):
        with pytest.raises(ArityError, match="TS_MEAN"):
            parse("TS_MEAN(close)")

    def test_unknown_operator(self):
        with pytest.raises(UnknownOperatorError):
            parse("WIBBLE(close, 3)")

    def test_syntax_error_carries_position(self):
        with pytest.raises(DslSyntaxError) as err:
            parse("TS_MEAN(close,, 5)")
        assert err.value.position is not None

    def test_unexpected_character_position(self):
        with pytest.raises(DslSyntaxError) as err:
            parse("close $ open")
        assert err.value.position == 6

    def test_quantile_range_enforced(self):
        with pytest.raises(ParameterError, match="quantile"):
            parse("TS_QUANTILE(close, 5, 1.5)")
        with pytest.raises(ParameterError):
            parse("PERCENTILE(close, 0.0)")

    def test_window_must_be_positive_integer_literal(self):
        with pytest.raises(ParameterError):
            parse("TS_MEAN(close, 0)")
        with pytest.raises(ParameterError):
            parse("TS_MEAN(close, 2.5)")
        with pytest.raises(ParameterError):
            parse("TS_MEAN(close, volume)")

    def test_macd_windows_ordered(self):
        with pytest.raises(ParameterError, match="MACD"):
            parse("MACD(close, 10, 5)")
        parse("MACD(close, 5, 10)")

    def test_sma_modifier_bounded(self):
        with pytest.raises(ParameterError, match="SMA"):
            parse("SMA(close, 3, 4)")
        parse("SMA(close, 3, 3)")

    def test_sequence_only_under_regression(self):
        parse("REGBETA(close, SEQUENCE(5), 5)")
        with pytest.raises(ExprValidationError):
            parse("SEQUENCE(5) + close")
        with pytest.raises(ExprValidationError):
            parse("TS_MEAN(SEQUENCE(5), 5)")

    def test_sequence_length_must_match_window(self):
        with pytest.raises(ParameterError, match="SEQUENCE"):
            parse("REGRESI(close, SEQUENCE(4), 5)")

    def test_constant_only_expression_rejected(self):
        with pytest.raises(ExprValidationError, match="market variable"):
            parse("1 + 2")

    def test_max_min_overload_by_arity(self):
        assert parse("MAX(close)").root.op == "MAX"
        assert parse("MAX(close, open)").root == Call("MAX", (Var("close"), Var("open")))


class TestUnparse:
    def test_canonical_single_call(self):
        assert unparse(parse("rank( close )")) == "RANK(close)"

    def test_nested_conditional_fully_parenthesized(self):
        text = unparse(parse("close>open ? high : low"))
        assert text == "((close>open)?(high):(low))"

    def test_negation_of_example_factor(self):
        assert (
            unparse(parse("-TS_CORR(RANK(open), RANK(volume), 10)"))
            == "-TS_CORR(RANK(open),RANK(volume),10)"
        )

    @pytest.mark.parametrize("seed", range(40))
    def test_roundtrip_random_programs(self, seed):
        rng = np.random.default_rng(seed)
        expr = random_program(rng)
        assert parse(unparse(expr)) == expr

    def test_roundtrip_every_catalogue_operator(self):
        samples = [
            "RANK(close)", "ZSCORE(close)", "MEAN(close)", "STD(close)", "SKEW(close)",
            "KURT(close)", "MAX(close)", "MIN(close)", "MEDIAN(close)",
            "PERCENTILE(close,0.3)", "PERCENTILE(close,0.3,5)",
            "DELTA(close,2)", "DELAY(close,2)", "TS_PCTCHANGE(close,2)",
            "TS_MEAN(close,5)", "TS_SUM(close,5)", "TS_MIN(close,5)", "TS_MAX(close,5)",
            "TS_MEDIAN(close,5)", "TS_STD(close,5)", "TS_VAR(close,5)", "TS_MAD(close,5)",
            "TS_RANK(close,5)", "TS_ZSCORE(close,5)", "TS_QUANTILE(close,5,0.4)",
            "TS_ARGMAX(close,5)", "TS_ARGMIN(close,5)", "HIGHDAY(close,5)",
            "LOWDAY(close,5)", "SUMAC(close,5)", "PROD(close,3)",
            "TS_CORR(close,volume,5)", "TS_COVARIANCE(close,volume,5)",
            "SMA(close,5,2)", "WMA(close,5)", "EMA(close,5)", "DECAYLINEAR(close,5)",
            "LOG(close)", "SQRT(close)", "POW(close,2)", "SIGN(close)", "EXP(close)",
            "ABS(close)", "MAX(close,open)", "MIN(close,open)", "INV(close)",
            "FLOOR(close)", "COUNT((close>open),5)", "SUMIF(close,5,(close>open))",
            "FILTER(close,(close>open))", "((close>open)&&(volume>100))",
            "((close>open)||(volume>100))", "((close>open)?(high):(low))",
            "REGBETA(close,volume,5)", "REGRESI(close,SEQUENCE(5),5)",
            "RSI(close,5)", "MACD(close,3,8)", "BB_MIDDLE(close,5)",
            "BB_UPPER(close,5)", "BB_LOWER(close,5)",
            "(close+open)", "(close-open)", "(close*open)", "(close/open)", "-close",
        ]
        for text in samples:
            expr = parse(text)
            assert parse(unparse(expr)) == expr, text


class TestAnalysis:
    def test_lookback_examples(self):
        assert required_lookback(parse("RANK(close)")) == 0
        assert required_lookback(parse("DELAY(close, 3)")) == 3
        assert required_lookback(parse("TS_MEAN(DELTA(close, 2), 5)")) == 6
        assert required_lookback(parse("return")) == 1
        assert required_lookback(parse("RSI(close, 4)")) == 4
        assert required_lookback(parse("TS_CORR(DELAY(close,2), volume, 5)")) == 6
        assert required_lookback(parse("EMA(close, 20)")) == 0

    def test_list_operators_examples(self):
        assert list_operators(parse("-TS_CORR(RANK(open),RANK(volume),10)")) == {
            "NEG",
            "TS_CORR",
            "RANK",
        }
        assert list_operators(parse("close")) == set()
        assert list_operators(parse("(close>open)?(volume):(0)")) == {"GT", "IFELSE"}

    def test_list_variables(self):
        assert list_variables(parse("TS_CORR(close, volume, 5) + open")) == {
            "close",
            "volume",
            "open",
        }

    def test_negated_round_trip(self):
        expr = parse("RANK(close)")
        flipped = negated(expr)
        assert unparse(flipped) == "-RANK(close)"
        assert negated(flipped) == expr
