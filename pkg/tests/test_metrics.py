import json
import random
from fractions import Fraction

import pytest

from entitylib.metrics import (
    ScoreTriple,
    TypeCounts,
    evaluate,
    loose_macro,
    loose_micro,
    per_type_counts,
    strict,
    write_per_type_tsv,
)

PREDS = [{"a"}, {"c", "d"}]
GOLDS = [{"a", "b"}, {"c"}]


def brute_force(preds, golds):
    """Set arithmetic with exact fractions, following the same empty-set conventions."""
    n = len(preds)
    exact = Fraction(sum(p == g for p, g in zip(preds, golds)), n)
    macro_p = sum(
        (Fraction(len(p & g), len(p)) if p else Fraction(int(not g))) for p, g in zip(preds, golds)
    ) / n
    macro_r = sum(
        (Fraction(len(p & g), len(g)) if g else Fraction(int(not p))) for p, g in zip(preds, golds)
    ) / n
    common = sum(len(p & g) for p, g in zip(preds, golds))
    predicted, gold = sum(map(len, preds)), sum(map(len, golds))
    micro_p = Fraction(common, predicted) if predicted else Fraction(1)
    micro_r = Fraction(common, gold) if gold else Fraction(1)

    def f1(p, r):
        return 2 * p * r / (p + r) if p + r else Fraction(0)

    return {
        "strict": (exact, exact, exact),
        "loose_macro": (macro_p, macro_r, f1(macro_p, macro_r)),
        "loose_micro": (micro_p, micro_r, f1(micro_p, micro_r)),
    }


class TestMetrics:
    def test_two_instance_example(self):
        report = evaluate(PREDS, GOLDS)
        assert report.strict == ScoreTriple(0.0, 0.0, 0.0)
        assert report.loose_macro == ScoreTriple(0.75, 0.75, 0.75)
        assert report.loose_micro.precision == pytest.approx(2 / 3)
        assert report.loose_micro.recall == pytest.approx(2 / 3)
        assert report.loose_micro.f1 == pytest.approx(2 / 3)

    def test_perfect(self):
        report = evaluate(GOLDS, GOLDS)
        for triple in (report.strict, report.loose_macro, report.loose_micro):
            assert triple == ScoreTriple(1.0, 1.0, 1.0)

    def test_empty_sets_match(self):
        assert strict([set(), {"a"}], [set(), {"a"}]).f1 == 1.0
        assert loose_macro([set()], [set()]) == ScoreTriple(1.0, 1.0, 1.0)

    def test_empty_prediction_conventions(self):
        assert loose_macro([set()], [{"a"}]) == ScoreTriple(0.0, 0.0, 0.0)
        assert loose_micro([set(), set()], [{"a"}, {"b"}]) == ScoreTriple(1.0, 0.0, 0.0)

    def test_errors(self):
        with pytest.raises(ValueError, match="2 predictions for 1 gold sets"):
            strict(PREDS, GOLDS[:1])
        with pytest.raises(ValueError, match="empty set of instances"):
            evaluate([], [])

    def test_matches_brute_force(self):
        rng = random.Random(0)
        types = [f"/t{i}" for i in range(8)]
        preds = [set(rng.sample(types, rng.randint(0, 4))) for _ in range(1000)]
        golds = [set(rng.sample(types, rng.randint(1, 4))) for _ in range(1000)]
        for _ in range(150):
            i = rng.randrange(1000)
            preds[i] = set(golds[i])
        report = evaluate(preds, golds).to_dict()
        for metric, expected in brute_force(preds, golds).items():
            got = report[metric]
            for key, value in zip(("p", "r", "f1"), expected):
                assert got[key] == pytest.approx(float(value), rel=0, abs=1e-12), (metric, key)
        assert report["strict"]["f1"] == float(brute_force(preds, golds)["strict"][0])

    def test_dominance_and_permutation(self):
        rng = random.Random(1)
        types = list("abcde")
        preds = [set(rng.sample(types, rng.randint(0, 3))) for _ in range(200)]
        golds = [set(rng.sample(types, rng.randint(1, 3))) for _ in range(200)]
        report = evaluate(preds, golds)
        assert report.loose_macro.precision >= report.strict.precision
        assert report.loose_macro.recall >= report.strict.recall
        order = list(range(200))
        rng.shuffle(order)
        shuffled = evaluate([preds[i] for i in order], [golds[i] for i in order])
        assert shuffled.strict == report.strict
        assert shuffled.loose_micro == report.loose_micro
        assert shuffled.loose_macro.f1 == pytest.approx(report.loose_macro.f1, abs=1e-12)

    def test_report_json(self):
        data = json.loads(evaluate(PREDS, GOLDS).to_json())
        assert list(data) == ["strict", "loose_macro", "loose_micro", "n"]
        assert data["n"] == 2 and data["strict"] == {"p": 0.0, "r": 0.0, "f1": 0.0}


def test_per_type_counts(tmp_path):
    counts = per_type_counts(PREDS, GOLDS)
    assert counts == {
        "a": TypeCounts(1, 0, 0),
        "b": TypeCounts(0, 0, 1),
        "c": TypeCounts(1, 0, 0),
        "d": TypeCounts(0, 1, 0),
    }
    write_per_type_tsv(tmp_path / "types.tsv", counts)
    lines = (tmp_path / "types.tsv").read_text().splitlines()
    assert lines[0] == "type\ttp\tfp\tfn"
    assert lines[2] == "b\t0\t0\t1"
