import math

import pytest

import gittins_sim as gs

MM1 = {
    "k": 1,
    "arrival": {"family": "exponential", "rate": 0.5},
    "size": {"family": "exponential", "rate": 1.0},
    "arrivals": 200000,
    "seed": 3,
    "r_points": 16,
}


def test_distribution_round_trip():
    d = gs.distribution({"family": "hyperexponential", "mean": 1.0, "cv2": 4.0})
    assert d.family == "hyperexponential"
    assert d.mean() == pytest.approx(1.0)
    assert d.cv2() == pytest.approx(4.0)
    assert gs.distribution({"family": "deterministic", "value": 2}).residual_bounds() == (0.0, 2.0)


def test_rank_function():
    rf = gs.RankFunction(gs.distribution({"family": "exponential", "rate": 2.0}))
    assert rf.rank(0.3) == pytest.approx(0.5)
    assert rf.single_job_wine(0.3) == pytest.approx(1.0, abs=1e-3)
    known = gs.RankFunction(gs.distribution({"family": "uniform", "low": 0, "high": 2}), known=True)
    assert known.rank(1.25) == 1.25


def test_mm1_mean_number():
    out = gs.simulate(MM1)
    n = out["mean_n"]
    assert abs(n["mean"] - 1.0) <= 3 * n["ci"]
    assert out["arrivals"] > 150000
    assert len(out["mean_w_r"]) == len(out["r_grid"]) + 1


def test_determinism_and_hash():
    a = gs.simulate(dict(MM1, arrivals=5000))
    b = gs.simulate(dict(MM1, arrivals=5000))
    assert a == b
    assert gs.config_hash(MM1) != gs.config_hash(dict(MM1, seed=4))


def test_loss_terms():
    lt = gs.loss_terms(dict(MM1, k=2))
    assert lt["loss_a"] == pytest.approx(gs.gap_constant() * math.log(2.0))
    assert lt["loss_b"] == pytest.approx(0.0, abs=1e-12)
    assert lt["loss_c"] == 0.0
    assert gs.heavy_traffic_limit(1.0, 0.0) == 0.5


def test_config_errors():
    with pytest.raises(gs.ConfigError, match="config.horizn"):
        gs.simulate(dict(MM1, horizn=3))
    with pytest.raises(ValueError, match="line"):
        gs.simulate("{\n  \"k\": }")


def test_verify():
    lines = gs.verify(dict(MM1, arrivals=20000, suite=["wine", "decomposition"]), workers=1)
    assert lines
    assert all(passed for _, passed, _ in lines)
