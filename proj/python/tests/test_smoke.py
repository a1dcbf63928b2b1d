import json
import math

import pytest

import foc

QUICK = """seed = 3
[train]
epochs = 3
warmup_epochs = 2
head_only_epochs = 1
[model]
hidden_dims = 8
head_copies = 2
[gen]
component.0.count = 40
component.1.count = 40
component.2.count = 40
"""


def test_version():
    assert foc.__version__ == foc.version()
    assert foc.version()


def test_joint_is_symmetric():
    z1 = [[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]]
    z2 = [[0.6, 0.4], [0.1, 0.9], [0.3, 0.7]]
    p = foc.joint_distribution(z1, z2)
    assert sum(map(sum, p)) == pytest.approx(1.0)
    assert p[0][1] == pytest.approx(p[1][0])


def test_mutual_information_cases():
    one_hot = [[1.0, 0.0], [0.0, 1.0]]
    assert foc.mutual_information(one_hot, one_hot) == pytest.approx(math.log(2))
    uniform = [[0.5, 0.5]] * 4
    assert foc.mutual_information(uniform, uniform) == pytest.approx(0.0, abs=1e-12)
    loss, g1, g2 = foc.mi_loss(one_hot, one_hot)
    assert loss == pytest.approx(-math.log(2))
    assert len(g1) == 2 and len(g2[0]) == 2


def test_cross_entropy_and_inverse():
    loss, grad = foc.cross_entropy([[0.75, 0.25]], [0])
    assert loss == pytest.approx(-math.log(0.75))
    assert grad[0][0] == pytest.approx(-1 / 0.75)

    loss, _, _ = foc.ce_inverse_pair([[1.0, 0.0]], [[0.5, 0.5]])
    assert loss == pytest.approx(math.log(2))

    z1 = [[0.0, 0.0, 1.0]]
    z2 = [[1.0, 0.0, 0.0]]
    z3 = [[0.5, 0.5, 0.0]]
    loss, *_ = foc.ce_inverse_triplet(z1, z2, z3)
    assert loss == pytest.approx(0.5 * math.log(2))


def test_mappings_and_scores():
    assign, acc = foc.best_permutation_mapping([[0, 5], [4, 1]])
    assert assign == [1, 0]
    assert acc == pytest.approx(0.9)
    assert foc.majority_mapping([[3, 1], [2, 2], [0, 0]]) == [0, 0, 0]
    assert foc.macro_f1([0, 0, 0, 0], [0, 0, 1, 1], 2) == pytest.approx(1 / 3)

    r = foc.consistency([0, 0, 0, 0, 1, 1, 1, 1, 1, 1], [7, 7, 7, 8, 9, 9, 9, 9, 9, 9])
    assert r["overall"] == pytest.approx(0.9)
    assert [c["value"] for c in r["per_cluster"]] == pytest.approx([0.75, 1.0])
    assert foc.consistency([0, 0, 0, 0, 1, 1, 1, 1, 1, 1], [7, 7, 7, 8, 9, 9, 9, 9, 9, 9], [8])["evaluated"] == 9


def test_shape_errors_raise():
    with pytest.raises(ValueError):
        foc.macro_f1([0, 1], [0], 2)
    with pytest.raises(ValueError):
        foc.joint_distribution([[1.0, 0.0], [0.5]], [[1.0, 0.0], [0.5, 0.5]])


def test_pipeline(tmp_path):
    data = tmp_path / "data.csv"
    foc.gen_data(QUICK, data)
    assert len(data.read_text().splitlines()) == 121

    out = foc.train(QUICK, data, tmp_path / "run")
    lines = open(out["metrics_log"]).read().splitlines()
    assert json.loads(lines[0])["format"] == "focmetrics v1"
    assert len(lines) == 1 + 5

    doc = json.loads(foc.evaluate(out["checkpoint"], data, QUICK))
    assert doc
    eval_path = tmp_path / "eval.json"
    eval_path.write_text(json.dumps(doc))
    foc.report(out["metrics_log"], tmp_path / "report.csv", eval_path, tmp_path / "scatter.csv")
    assert (tmp_path / "report.csv").exists()

    again = tmp_path / "again.csv"
    foc.gen_data(QUICK, again)
    assert again.read_bytes() == data.read_bytes()


def test_bad_config_raises():
    with pytest.raises(foc.ConfigError):
        foc.gen_data("bogus = 1\n", "/nonexistent/never.csv")
