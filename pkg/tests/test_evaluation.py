import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spa_eeg.errors import ValidationError
from spa_eeg.evaluation import (
    ConfusionCounts,
    EvalReport,
    PipelineFailure,
    RunResult,
    _run_split,
    accuracy,
    confusion,
    fit_pipeline,
    format_pct,
    kfold_cv,
    learning_curve_csv,
    method_spec,
    render_tables,
    runs_csv,
    subsample_experiment,
    summary_csv,
)
from spa_eeg.spa import HyperparamGrid
from spa_eeg.splits import stratified_kfold, stratified_subsample
from spa_eeg.synth import sample_mixed_sources

SMALL_GRID = HyperparamGrid(p_values=(1, 2), k_min=6, k_max=14, k_step=2)


def mixed(n_per_class=40, contrast=10.0, seed=0, n_channels=6, n_samples=120):
    prof = np.ones((2, n_channels))
    prof[0, 0] = prof[1, 1] = contrast
    ep = sample_mixed_sources(n_channels, n_samples, prof, n_per_class, seed=seed).epochs
    return ep.replace(subject_id=f"S{seed}")


def spa_spec(**kw):
    return method_spec("csp+spa", m=2, grid=SMALL_GRID, **kw)


class TestMetrics:
    @pytest.mark.parametrize("counts,expected", [
        ((40, 40, 10, 10), 80.0), ((7, 0, 0, 0), 100.0), ((0, 0, 5, 5), 0.0),
    ])
    def test_accuracy(self, counts, expected):
        assert accuracy(ConfusionCounts(*counts)) == expected

    def test_accuracy_empty(self):
        with pytest.raises(ValidationError):
            accuracy(ConfusionCounts())

    def test_confusion(self):
        cm = confusion([1, 1, 2, 2, 2], [1, 2, 2, 1, 2])
        assert (cm.tp, cm.fn, cm.tn, cm.fp) == (1, 1, 2, 1)
        assert cm.total == 5


class TestSplits:
    @settings(max_examples=50, deadline=None)
    @given(n1=st.integers(10, 80), n2=st.integers(10, 80), folds=st.integers(2, 10),
           seed=st.integers(0, 2**63))
    def test_kfold_partition_and_stratification(self, n1, n2, folds, seed):
        labels = np.random.default_rng(seed % 2**32).permutation(np.repeat([1, 2], [n1, n2]))
        parts = stratified_kfold(labels, folds, seed)
        allidx = np.concatenate(parts)
        np.testing.assert_array_equal(np.sort(allidx), np.arange(labels.size))
        for cls, n in ((1, n1), (2, n2)):
            counts = np.array([np.sum(labels[f] == cls) for f in parts])
            assert counts.max() - counts.min() <= 1
            assert np.all(np.abs(counts - n / folds) < 1)
        sizes = [len(f) for f in parts]
        assert max(sizes) - min(sizes) <= 1

    def test_kfold_deterministic(self):
        labels = np.repeat([1, 2], 30)
        a = stratified_kfold(labels, 10, 5)
        b = stratified_kfold(labels, 10, 5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = stratified_kfold(labels, 10, 6)
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    def test_kfold_too_small(self):
        with pytest.raises(ValidationError):
            stratified_kfold(np.repeat([1, 2], [5, 20]), 10, 0)

    @pytest.mark.parametrize("fraction,n_train", [(1 / 2, 144), (1 / 3, 96), (1 / 6, 48), (1 / 12, 24)])
    def test_subsample_sizes(self, fraction, n_train):
        labels = np.repeat([1, 2], 144)
        train, test = stratified_subsample(labels, fraction, 0)
        assert len(train) == n_train and len(test) == 288 - n_train
        assert np.sum(labels[train] == 1) == n_train // 2
        assert not set(train) & set(test)

    @pytest.mark.parametrize("fraction", [1.0, 0.0, 0.01])
    def test_subsample_infeasible(self, fraction):
        with pytest.raises(ValidationError):
            stratified_subsample(np.repeat([1, 2], 20), fraction, 0)


class TestPipelines:
    def test_method_names(self):
        for name in ("csp+spa", "csp+lda", "mdrm", "ts+lda", "ts+spa"):
            assert method_spec(name).name == name
        assert method_spec("ts+lda").shrinkage == 0.05
        assert method_spec("csp+lda").shrinkage == 0.0

    def test_unknown_and_placeholder(self):
        with pytest.raises(ValidationError):
            method_spec("csp+knn")
        with pytest.raises(NotImplementedError):
            method_spec("csp+svm")

    def test_oracle_protocol_flagged(self):
        ep = mixed()
        fitted = fit_pipeline(spa_spec(protocol="oracle_on_eval"), ep.subset(np.arange(60)), 0,
                              evals=ep.subset(np.arange(60, 80)))
        assert fitted.oracle_tuned

    @pytest.mark.parametrize("name", ["csp+spa", "csp+lda", "mdrm", "ts+lda", "ts+spa"])
    def test_separable_data(self, name):
        spec = method_spec(name, m=2, grid=SMALL_GRID)
        rep = kfold_cv(mixed(contrast=30.0, n_samples=200), spec, folds=5, seed=1)
        assert rep.mean >= 95.0
        assert len(rep.runs) == 5

    def test_spa_perfect_when_separable(self):
        rep = kfold_cv(mixed(contrast=100.0, n_samples=300), spa_spec(), folds=5, seed=0)
        assert rep.mean == 100.0

    def test_chance_level_on_null_data(self):
        means = []
        for seed in range(20):
            ep = mixed(n_per_class=30, contrast=1.0, seed=seed)
            shuffled = ep.replace(labels=np.random.default_rng(seed).permutation(ep.labels))
            means.append(kfold_cv(shuffled, method_spec("csp+lda", m=2), folds=5, seed=seed).mean)
        assert 40.0 <= np.mean(means) <= 60.0


class TestHarness:
    def test_same_seed_same_report(self):
        ep = mixed()
        a = kfold_cv(ep, spa_spec(), folds=5, seed=3)
        b = kfold_cv(ep, spa_spec(), folds=5, seed=3)
        assert a.runs == b.runs and a.config == b.config

    def test_thread_count_independent(self):
        ep = mixed()
        reports = {}
        for workers in (1, 8):
            reports[workers] = [
                kfold_cv(ep, spa_spec(), folds=5, seed=9, n_workers=workers),
                kfold_cv(ep, method_spec("mdrm"), folds=5, seed=9, n_workers=workers),
            ] + subsample_experiment(ep, method_spec("csp+lda", m=2), (0.5, 0.25), 4, 9,
                                     n_workers=workers)
        for render in (runs_csv, summary_csv, learning_curve_csv):
            assert render(reports[1]).encode() == render(reports[8]).encode()

    @pytest.mark.parametrize("name", ["csp+spa", "csp+lda", "mdrm", "ts+lda", "ts+spa"])
    def test_poisoned_test_rows_never_reach_fit(self, name):
        spec = method_spec(name, m=2, grid=SMALL_GRID)
        ep = mixed()
        clean = kfold_cv(ep, spec, folds=5, seed=2)
        poisoned = kfold_cv(ep, spec, folds=5, seed=2, poison=True)
        assert clean.runs == poisoned.runs
        subsample_experiment(ep, spec, (0.5,), 2, 2, poison=True)

    def test_poison_detects_leak(self):
        # A buggy split that trains on every row, test rows included.
        ep = mixed()
        everything = np.arange(ep.n_trials)
        with pytest.raises(PipelineFailure):
            _run_split(ep, method_spec("csp+lda", m=2), everything, everything[:10], 0, 0, poison=True)

    def test_oracle_protocol_cannot_be_poisoned(self):
        with pytest.raises(ValidationError):
            kfold_cv(mixed(), spa_spec(protocol="oracle_on_eval"), folds=5, poison=True)

    def test_std_is_sample_std(self):
        rep = EvalReport("m", "S", "cv3", [RunResult(i, a, ConfusionCounts(1), 0)
                                           for i, a in enumerate([70.0, 80.0, 90.0])])
        assert rep.mean == pytest.approx(80.0, abs=1e-12)
        assert rep.std == pytest.approx(10.0)
        single = EvalReport("m", "S", "1/2", [RunResult(0, 75.0, ConfusionCounts(1), 0)])
        assert single.std == 0.0

    def test_learning_curve_monotone(self):
        ep = mixed(n_per_class=144, contrast=3.0, n_samples=150, seed=4)
        reps = subsample_experiment(ep, method_spec("csp+lda", m=2), ("1/2", "1/12"), 20, 0)
        assert [r.split for r in reps] == ["1/2", "1/12"]
        assert reps[0].mean >= reps[1].mean

    def test_subsample_fraction_labels(self):
        ep = mixed()
        reps = subsample_experiment(ep, method_spec("csp+lda", m=2), (0.5,), 3, 0)
        assert reps[0].split == "1/2" and len(reps[0].runs) == 3

    def test_failure_carries_context(self):
        ep = mixed(n_per_class=12)
        spec = method_spec("csp+lda", m=3)
        with pytest.raises(PipelineFailure, match="csp\\+lda, fraction 1/6, replicate 1"):
            subsample_experiment(ep, spec, ("1/6",), 1, 0)


class TestTables:
    def report(self, method, subject="S1", accs=(80.0, 90.0), oracle=False):
        runs = [RunResult(i, a, ConfusionCounts(1), 7, 10, 1) for i, a in enumerate(accs)]
        return EvalReport(method, subject, "cv10", runs, oracle_tuned=oracle)

    @pytest.mark.parametrize("value,text", [
        (84.595, "84.60"), (84.594, "84.59"), (0.125, "0.13"), (100.0, "100.00"), (2.675, "2.68"),
    ])
    def test_format(self, value, text):
        assert format_pct(value) == text

    def test_empty(self):
        runs, summary, _ = render_tables([])
        assert summary == "subject,method,mean,std\r\n"
        assert runs == "subject,method,fraction,run,accuracy,k,p,seed\r\n"

    def test_two_methods(self):
        _, summary, text = render_tables([self.report("csp+spa"), self.report("csp+lda")])
        lines = summary.strip().split("\r\n")
        assert lines[1:] == ["S1,csp+spa,85.00,7.07", "S1,csp+lda,85.00,7.07"]
        assert "85.00 ± 7.07" in text

    def test_oracle_watermark(self):
        _, summary, text = render_tables([self.report("csp+spa", oracle=True)])
        assert "csp+spa [oracle-tuned]" in summary and "[oracle-tuned]" in text

    def test_runs_columns(self):
        runs = runs_csv([self.report("csp+spa")]).strip().split("\r\n")
        assert runs[1] == "S1,csp+spa,cv10,0,80.00,10,1,7"

    def test_placeholders_and_subject_summary(self):
        reps = [self.report("csp+spa", "S1"), self.report("csp+spa", "S2", (60.0, 70.0))]
        _, summary, text = render_tables(reps, ("csp+svm",))
        assert "S1,csp+svm,not implemented,not implemented" in summary
        mean_row = [l for l in text.splitlines() if l.startswith("Mean")][0]
        assert "75.00" in mean_row
