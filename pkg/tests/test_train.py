import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geneopocket import train
from geneopocket.errors import DomainError, OptimizationError
from geneopocket.geneo import INITIAL_GUESS, TABLE1, GeneoParams, predict, volumetric_accuracy
from geneopocket.ingest import PocketSpec, synth_protein
from geneopocket.potentials import Channel
from geneopocket.train import (
    SIGMA_MAX,
    SIGMA_MIN,
    TrainConfig,
    fit,
    format_trace,
    from_unconstrained,
    objective,
    save_result,
    to_unconstrained,
)

LIPO = int(Channel.LIPOPHILIC)


@pytest.fixture(scope="module")
def single_pool():
    spec = PocketSpec(chemistry="single", informative="lipophilic")
    return [synth_protein(seed, 80, spec) for seed in range(6)]


@st.composite
def params(draw):
    sigma = draw(st.lists(st.floats(SIGMA_MIN, SIGMA_MAX), min_size=8, max_size=8))
    w = draw(st.lists(st.floats(1e-3, 1.0), min_size=8, max_size=8))
    total = math.fsum(w)
    alpha = [v / total for v in w]
    alpha = [v / math.fsum(alpha) for v in alpha]
    return GeneoParams(sigma, alpha, draw(st.floats(0.001, 0.999)))


class TestReparameterization:
    @given(params())
    def test_round_trip(self, p):
        back = from_unconstrained(to_unconstrained(p))
        assert np.max(np.abs(back.as_vector() - p.as_vector())) <= 1e-10

    @given(st.lists(st.floats(-60, 60), min_size=17, max_size=17))
    def test_any_point_is_feasible(self, u):
        p = from_unconstrained(u)
        assert abs(math.fsum(p.alpha) - 1.0) <= 1e-12
        assert all(SIGMA_MIN <= s <= SIGMA_MAX for s in p.sigma)
        assert 0.0 < p.theta < 1.0

    def test_rejects_wrong_length_and_nan(self):
        with pytest.raises(DomainError):
            from_unconstrained(np.zeros(16))
        u = np.zeros(17)
        u[3] = np.nan
        with pytest.raises(OptimizationError):
            from_unconstrained(u)


class TestObjective:
    def test_perfect_prediction_scores_one(self):
        s, lig = synth_protein(0, 120)
        top = predict(s, TABLE1, lig.mask.spec).pocket_mask(1)
        assert objective(TABLE1, [(s, top)]) == 1.0

    def test_near_one_threshold_scores_zero(self):
        s, lig = synth_protein(0, 60)
        p = GeneoParams(TABLE1.sigma, TABLE1.alpha, math.nextafter(1.0, 0.0))
        assert objective(p, [(s, lig)]) == 0.0

    def test_mean_of_items(self, single_pool):
        items = single_pool[:3]
        each = [volumetric_accuracy(predict(s, INITIAL_GUESS, lig.mask.spec), lig) for s, lig in items]
        assert abs(objective(INITIAL_GUESS, items) - sum(each) / 3) <= 1e-12

    def test_empty_trainset(self):
        with pytest.raises(DomainError):
            objective(TABLE1, [])


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [{"trainset": ()}, {"max_iters": 0}, {"tolerance": 0.0}, {"step": -1.0}]
    )
    def test_invalid(self, single_pool, kw):
        base = {"trainset": single_pool[:1]}
        base.update(kw)
        with pytest.raises(DomainError):
            TrainConfig(**base)


class TestFit:
    def test_single_iteration_budget(self, single_pool):
        res = fit(TrainConfig(single_pool[:2], max_iters=1))
        assert len(res.objective_trace) == 1
        assert res.iterations == 1
        assert np.max(np.abs(to_unconstrained(res.params) - to_unconstrained(INITIAL_GUESS))) <= 1.0 + 1e-9

    def test_deterministic_and_monotone(self, single_pool):
        cfg = TrainConfig(single_pool[:3], max_iters=12, seed=4)
        a, b = fit(cfg), fit(cfg)
        assert a == b
        trace = a.objective_trace
        assert all(x <= y for x, y in zip(trace, trace[1:]))
        assert a.final_objective >= a.initial_objective - cfg.tolerance
        assert abs(objective(a.params, cfg.trainset) - a.final_objective) <= 1e-12
        assert abs(math.fsum(a.params.alpha) - 1.0) <= 1e-12

    def test_informative_channel_gains_weight(self, single_pool):
        res = fit(TrainConfig(single_pool[:5], max_iters=40, seed=0))
        assert res.params.alpha[LIPO] > 1 / 8

    def test_landscape_favours_informative_weight(self, single_pool):
        # Raising the informative weight from uniform, others sharing the rest,
        # improves the objective somewhere along the scan.
        items = single_pool[:5]
        def at(w):
            alpha = [(1 - w) / 7] * 8
            alpha[LIPO] = w
            return objective(GeneoParams(INITIAL_GUESS.sigma, alpha, 0.5), items)
        base = at(1 / 8)
        assert max(at(w) for w in (0.25, 0.4, 0.55, 0.7)) > base

    def test_non_finite_objective(self, single_pool, monkeypatch):
        monkeypatch.setattr(train, "prepared_objective", lambda p, items, connectivity=6: math.nan)
        with pytest.raises(OptimizationError):
            fit(TrainConfig(single_pool[:1], max_iters=2))

    def test_persisted_outputs(self, single_pool, tmp_path):
        res = fit(TrainConfig(single_pool[:1], max_iters=3))
        params_path, trace_path = save_result(res, tmp_path)
        lines = trace_path.read_text().splitlines()
        assert lines[0] == "iter,objective"
        assert len(lines) == len(res.objective_trace) + 1
        assert format_trace(res) == trace_path.read_text()
        assert params_path.read_text().startswith("sigma.1 = ")
