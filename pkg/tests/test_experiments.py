import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppcorr import experiments as ex
from gppcorr.experiments import (
    FIGURE1_NU,
    FIGURE1_Q,
    JURA_METALS,
    RECOVERY_ROWS,
    ExperimentConfig,
    JuraConfig,
    colocated_partial_corr,
    figure1_model,
    gen_graph,
    gen_precision,
    run_jura_pipeline,
    run_recovery_study,
    run_roc_study,
    score_parameters,
    synthetic_jura,
)
from gppcorr.gaussian import make_rng
from gppcorr.netcalc import partial_coeff_matrix

SMALL_ROC = dict(q=4, grid_side=6, replicates=3, edge_prob=0.5, n_lambda=15, master_seed=7)
SMALL_REC = dict(grid_side=6, replicates=2, missing_count=10, master_seed=3)


def table_rows(report):
    return {k: (t.columns, t.rows) for k, t in report.tables.items()}


class TestGraphs:
    def test_edge_prob_extremes(self):
        rng = make_rng(1)
        assert not gen_graph(6, 0.0, rng).any()
        full = gen_graph(6, 1.0, rng)
        assert full.sum() == 30 and not np.diag(full).any()

    def test_mean_edge_count(self):
        rng = make_rng(2)
        counts = [gen_graph(10, 0.2, rng).sum() / 2 for _ in range(1000)]
        assert abs(np.mean(counts) - 9.0) < 1.0

    def test_empty_graph_identity(self):
        sp = gen_precision(np.zeros((4, 4), bool), make_rng(3))
        assert np.array_equal(sp.q_mat, np.eye(4))

    def test_single_edge_weight(self):
        adj = np.zeros((3, 3), bool)
        adj[0, 1] = adj[1, 0] = True
        rng = make_rng(4)
        sp = gen_precision(adj, rng)
        w = sp.q_mat[0, 1]
        assert 0.2 <= abs(w) <= 0.6
        assert partial_coeff_matrix(sp)[0, 1] == -w

    def test_pattern_fidelity(self):
        rng = make_rng(5)
        for _ in range(1000):
            q = int(rng.integers(2, 11))
            adj = gen_graph(q, float(rng.uniform()), rng)
            qm = gen_precision(adj, rng).q_mat
            off = ~np.eye(q, dtype=bool)
            assert np.array_equal(qm[off] != 0, adj[off])
            assert np.allclose(np.diag(qm), 1.0)
            assert np.linalg.eigvalsh(qm).min() > 0

    def test_rejects_asymmetric_adjacency(self):
        adj = np.zeros((3, 3), bool)
        adj[0, 1] = True
        with pytest.raises(ValueError):
            gen_precision(adj, make_rng(0))


class TestFigure1:
    def test_configuration(self):
        m = figure1_model()
        assert m.nus == FIGURE1_NU and m.phi == 10.0
        assert np.array_equal(m.sp.q_mat, FIGURE1_Q)

    def test_truth_scores_zero(self):
        m = figure1_model()
        for est, tru in score_parameters(m, m).values():
            assert np.array_equal(est, tru)
        assert colocated_partial_corr(m).shape == (10,)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(replicates=0), dict(q=1), dict(edge_prob=1.5),
                                    dict(family="lmc"), dict(nu_range=(2.0, 1.0))])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)

    def test_defaults(self):
        cfg = ExperimentConfig.roc_defaults()
        assert (cfg.q, cfg.grid_side, cfg.replicates) == (8, 20, 30)
        rec = ExperimentConfig.recovery_defaults()
        assert (rec.q, rec.replicates, rec.missing_count) == (5, 20, 200)


class TestRocStudy:
    def test_small_run_is_deterministic(self):
        cfg = ExperimentConfig(**SMALL_ROC)
        a, b = run_roc_study(cfg), run_roc_study(cfg)
        assert table_rows(a) == table_rows(b)
        assert set(a.tables) == {"auc", "roc_points", "summary"}
        assert a.summary["used"] + sum(r[2] != "ok" for r in a.tables["auc"].rows) == 3

    def test_parallel_schedule_matches_serial(self):
        serial = run_roc_study(ExperimentConfig(**SMALL_ROC))
        par = run_roc_study(ExperimentConfig(**{**SMALL_ROC, "workers": 2}))
        assert table_rows(serial) == table_rows(par)

    def test_empty_truth_skipped(self):
        rep = run_roc_study(ExperimentConfig(**{**SMALL_ROC, "edge_prob": 0.0}))
        assert rep.summary["used"] == 0
        assert all(r[2] == "skipped" and "degenerate" in r[-1] for r in rep.tables["auc"].rows)

    def test_arms_share_one_dataset(self, monkeypatch):
        seen = {"spatial": [], "independent": []}
        fit, indep = ex.fit_sigma_mle, ex.sample_cov_independent

        def spy_fit(sample, model, **kw):
            seen["spatial"].append(sample.values.copy())
            return fit(sample, model, **kw)

        def spy_indep(sample):
            seen["independent"].append(sample.values.copy())
            return indep(sample)

        monkeypatch.setattr(ex, "fit_sigma_mle", spy_fit)
        monkeypatch.setattr(ex, "sample_cov_independent", spy_indep)
        run_roc_study(ExperimentConfig(**{**SMALL_ROC, "replicates": 2, "edge_prob": 0.6}))
        assert len(seen["spatial"]) == len(seen["independent"]) > 0
        for a, b in zip(seen["spatial"], seen["independent"]):
            assert np.array_equal(a, b)


class TestRecoveryStudy:
    def test_small_run(self):
        rep = run_recovery_study(ExperimentConfig.recovery_defaults(**SMALL_REC))
        t = rep.tables["rmse_table"]
        assert tuple(r[0] for r in t.rows) == RECOVERY_ROWS
        truth_col = t.columns.index("rmse_Truth")
        for row in t.rows[:3]:
            assert row[truth_col] == 0.0
        assert rep.summary["used"] == 2

    def test_needs_five_components(self):
        with pytest.raises(ValueError):
            run_recovery_study(ExperimentConfig(**{**SMALL_REC, "q": 4}))

    def test_deterministic(self):
        cfg = ExperimentConfig.recovery_defaults(**{**SMALL_REC, "replicates": 1})
        assert table_rows(run_recovery_study(cfg)) == table_rows(run_recovery_study(cfg))


class TestJura:
    def test_synthetic_shape(self):
        data, names = synthetic_jura(1)
        assert (data.n, data.q) == (359, 7)
        assert names == JURA_METALS
        assert np.all(data.values > 0)
        assert np.all(data.locs.coords[:, 0] <= 14.5) and np.all(data.locs.coords[:, 1] <= 2.5)

    def test_small_pipeline(self):
        data, names = synthetic_jura(2, n=60)
        sub = ex.FieldSample(data.values[:, :3], data.locs)
        rep = run_jura_pipeline(sub, names[:3], JuraConfig(test_count=20, seed=4, n_lags=11))
        assert {"prediction", "smoothness", "colocated", "effective_ranges", "curves", "sigma_hat"} == set(rep.tables)
        assert rep.tables["prediction"].rows[-1][0] == "Overall"
        assert len(rep.tables["curves"].rows) == 2 * 3 * 11
        assert "strongest_pairs_p_matern" in rep.summary

    def test_rejects_nonpositive_for_log(self):
        data, names = synthetic_jura(2, n=30)
        vals = data.values.copy()
        vals[0, 0] = -1.0
        with pytest.raises(ValueError):
            run_jura_pipeline(ex.FieldSample(vals, data.locs), names, JuraConfig(test_count=5))

    def test_needs_two_components(self):
        data, names = synthetic_jura(2, n=30)
        with pytest.raises(ValueError):
            run_jura_pipeline(ex.FieldSample(data.values[:, :1], data.locs), names[:1], JuraConfig(test_count=5))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**31))
def test_gen_precision_is_unit_diagonal_spd(q, seed):
    rng = make_rng(seed)
    sp = gen_precision(gen_graph(q, 0.5, rng), rng)
    assert np.allclose(np.diag(sp.q_mat), 1.0)
    assert np.linalg.eigvalsh(sp.q_mat).min() > 0
