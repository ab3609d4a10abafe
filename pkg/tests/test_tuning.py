"""Fold construction and the cross-validated grid search."""

import numpy as np

from relclust.core import HyperParams
from relclust.data import make_blobs
from relclust.oracle import sample_constraints
from relclust.tuning import (
    DEFAULT_LAMBDAS,
    DEFAULT_TAUS,
    default_workers,
    format_report_csv,
    stratified_folds,
    tune,
)


def blob_problem(seed=0, per_cluster=15, m=30):
    ds = make_blobs(3, per_cluster, dim=2, separation=6.0, seed=seed)
    cs = sample_constraints(ds, m, seed=seed + 1)
    return ds, cs


class TestFolds:
    def test_disjoint_and_covering(self):
        _, cs = blob_problem()
        folds = stratified_folds(cs, 5, seed=3)
        seen = np.concatenate(folds)
        assert len(seen) == cs.m
        assert len(np.unique(seen)) == cs.m

    def test_stratification_balances_labels(self):
        ds, _ = blob_problem()
        cs = sample_constraints(ds, 100, seed=7)
        folds = stratified_folds(cs, 5, seed=8)
        labels = np.array(cs.labels())
        for lab in ("yes", "no", "dnk"):
            total = (labels == lab).sum()
            per_fold = [(labels[f] == lab).sum() for f in folds]
            assert max(per_fold) - min(per_fold) <= 1, (lab, total, per_fold)

    def test_deterministic(self):
        _, cs = blob_problem()
        a = stratified_folds(cs, 5, seed=9)
        b = stratified_folds(cs, 5, seed=9)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))


class TestTune:
    def test_too_few_constraints_warns_and_keeps_base(self):
        ds, _ = blob_problem()
        cs = sample_constraints(ds, 3, seed=10)
        base = HyperParams(k=3, tau=1.0, lam=2.0**-6, seed=11)
        result = tune(ds, cs, base, workers=1)
        assert result.warned
        assert result.hyper == base
        assert result.records == ()

    def test_single_point_grid_returns_it(self):
        ds, cs = blob_problem(seed=12)
        base = HyperParams(k=3, epsilon=0.05, seed=13)
        result = tune(ds, cs, base, taus=[0.7], lambdas=[2.0**-5], workers=1)
        assert result.hyper.tau == 0.7
        assert result.hyper.lam == 2.0**-5

    def test_rigged_grid_point_wins(self):
        # an absurd ridge weight flattens the classifier and loses; the mild
        # one must be selected, and it must be the argmax on a re-scan
        ds, cs = blob_problem(seed=14, m=40)
        base = HyperParams(k=3, epsilon=0.05, seed=15)
        result = tune(ds, cs, base, taus=[1.0], lambdas=[2.0**-10, 1e4], workers=1)
        assert result.hyper.lam == 2.0**-10
        means = {
            lam: result.mean_accuracy(1.0, lam) for lam in (2.0**-10, 1e4)
        }
        assert means[2.0**-10] == max(means.values())
        assert result.mean_accuracy(*[1.0, result.hyper.lam]) == max(means.values())

    def test_ties_prefer_small_lambda_then_small_tau(self):
        # trivially easy instance: every grid point scores 1.0
        ds, cs = blob_problem(seed=16, per_cluster=20, m=40)
        base = HyperParams(k=3, epsilon=0.05, seed=17)
        result = tune(
            ds, cs, base, taus=[1.0, 0.5], lambdas=[2.0**-8, 2.0**-10], workers=1
        )
        accs = {r[3] for r in result.records}
        assert accs == {1.0}, "fixture must be easy enough to tie everywhere"
        assert result.hyper.lam == 2.0**-10
        assert result.hyper.tau == 0.5

    def test_report_csv_shape(self):
        ds, cs = blob_problem(seed=18)
        base = HyperParams(k=3, epsilon=0.05, seed=19)
        result = tune(ds, cs, base, taus=[0.5], lambdas=[2.0**-6], workers=1)
        lines = format_report_csv(result).splitlines()
        assert lines[0] == "tau,lambda,fold,accuracy"
        assert len(lines) == 1 + 5  # one grid point x five folds

    def test_default_grids_match_protocol(self):
        assert DEFAULT_TAUS == (0.5, 1.0, 1.5)
        assert DEFAULT_LAMBDAS == (2.0**-10, 2.0**-8, 2.0**-6, 2.0**-4, 2.0**-2)

    def test_worker_pool_capped_by_environment(self, monkeypatch):
        monkeypatch.setenv("RELCLUST_THREADS", "1")
        assert default_workers() == 1
        monkeypatch.delenv("RELCLUST_THREADS")
        assert default_workers() >= 1
