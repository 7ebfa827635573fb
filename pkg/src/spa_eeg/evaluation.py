"""Cross-validation and small-training-set experiments.

Band-pass filtering is label-independent and happens before these
functions are called; everything that looks at labels (CSP, Karcher means,
LDA moments, SPA hyperparameter search) is fitted on the training rows of
each split only.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from .baselines import fit_tangent_space, lda_fit, lda_predict, mdrm_fit, mdrm_predict, tangent_map
from .csp import FeatureMatrix, fit_csp, normalized_covariance, transform_set
from .errors import SpaEegError, ValidationError
from .seeding import derive_seed
from .spa import HyperparamGrid, spa_fit, spa_predict, tune_hyperparameters
from .splits import stratified_kfold, stratified_subsample

DEFAULT_FRACTIONS = (Fraction(1, 2), Fraction(1, 3), Fraction(1, 6), Fraction(1, 12))
NOT_IMPLEMENTED = ("csp+svm", "ts+svm")


@dataclass(frozen=True)
class ConfusionCounts:
    """Two-class confusion counts with class 1 as the positive class."""

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)


def confusion(y_true, y_pred):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return ConfusionCounts(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        tn=int(np.sum((y_true == 2) & (y_pred == 2))),
        fp=int(np.sum((y_true == 2) & (y_pred == 1))),
        fn=int(np.sum((y_true == 1) & (y_pred == 2))),
    )


def accuracy(counts):
    """Percentage of correctly classified samples."""
    if counts.total == 0:
        raise ValidationError("accuracy of an empty evaluation is undefined")
    return 100.0 * (counts.tp + counts.tn) / counts.total


@dataclass(frozen=True)
class PipelineSpec:
    """Feature stage plus classifier.

    ``feature`` is ``"csp"``, ``"spd"`` (trial covariances) or
    ``"tangent"``; ``classifier`` is ``"spa"``, ``"lda"`` or ``"mdrm"``.
    Fixing both ``k`` and ``p`` bypasses the SPA grid search.
    """

    feature: str
    classifier: str
    m: int = 3
    shrinkage: float = 0.0
    grid: HyperparamGrid = field(default_factory=HyperparamGrid)
    protocol: str = "inner_cv"
    k: int = None
    p: int = None

    def __post_init__(self):
        if self.feature not in ("csp", "spd", "tangent"):
            raise ValidationError(f"unknown feature stage {self.feature!r}")
        if self.classifier not in ("spa", "lda", "mdrm"):
            raise ValidationError(f"unknown classifier {self.classifier!r}")
        if (self.classifier == "mdrm") != (self.feature == "spd"):
            raise ValidationError("mdrm needs the spd feature stage and vice versa")
        if self.protocol not in ("inner_cv", "oracle_on_eval"):
            raise ValidationError(f"unknown tuning protocol {self.protocol!r}")

    @property
    def name(self):
        if self.classifier == "mdrm":
            return "mdrm"
        prefix = "csp" if self.feature == "csp" else "ts"
        return f"{prefix}+{self.classifier}"


def method_spec(name, m=3, grid=None, protocol="inner_cv"):
    """Pipeline for a method name: csp+spa, csp+lda, mdrm, ts+lda, ts+spa."""
    grid = grid or HyperparamGrid()
    table = {
        "csp+spa": PipelineSpec("csp", "spa", m=m, grid=grid, protocol=protocol),
        "csp+lda": PipelineSpec("csp", "lda", m=m, shrinkage=0.0),
        "mdrm": PipelineSpec("spd", "mdrm"),
        "ts+lda": PipelineSpec("tangent", "lda", shrinkage=0.05),
        "ts+spa": PipelineSpec("tangent", "spa", grid=grid, protocol=protocol),
    }
    if name in NOT_IMPLEMENTED:
        raise NotImplementedError(f"{name} is not implemented")
    if name not in table:
        raise ValidationError(f"unknown method {name!r}")
    return table[name]


@dataclass
class FittedPipeline:
    spec: PipelineSpec
    parts: dict
    k: int = None
    p: int = None
    oracle_tuned: bool = False

    def features(self, epochs):
        if self.spec.feature == "csp":
            return transform_set(self.parts["csp"], epochs)
        covs = normalized_covariance(epochs.data)
        if self.spec.feature == "spd":
            return covs
        return FeatureMatrix(tangent_map(self.parts["tangent"], covs), epochs.labels)

    def predict(self, epochs):
        feats = self.features(epochs)
        clf = self.parts["classifier"]
        if self.spec.classifier == "mdrm":
            return np.atleast_1d(mdrm_predict(clf, feats))
        if self.spec.classifier == "lda":
            return np.atleast_1d(lda_predict(clf, feats.values))
        return np.atleast_1d(spa_predict(clf, feats.values))

    def is_finite(self):
        def arrays(obj):
            if isinstance(obj, np.ndarray):
                yield obj
            elif isinstance(obj, (list, tuple)):
                for o in obj:
                    yield from arrays(o)
            elif hasattr(obj, "__dataclass_fields__"):
                for name in obj.__dataclass_fields__:
                    yield from arrays(getattr(obj, name))

        return all(np.all(np.isfinite(a)) for a in arrays(list(self.parts.values())))


def fit_pipeline(spec, train, seed=0, evals=None):
    """Fit every stage of ``spec`` on ``train``.

    ``evals`` is only consulted by the oracle-on-eval SPA protocol.
    """
    parts = {}
    if spec.feature == "csp":
        parts["csp"] = fit_csp(train, spec.m)
    elif spec.feature == "tangent":
        parts["tangent"] = fit_tangent_space(normalized_covariance(train.data))
    fitted = FittedPipeline(spec, parts)
    feats = fitted.features(train)

    if spec.classifier == "mdrm":
        parts["classifier"] = mdrm_fit(feats, train.labels)
    elif spec.classifier == "lda":
        parts["classifier"] = lda_fit(feats.values, feats.labels, spec.shrinkage)
    else:
        if spec.k is not None and spec.p is not None:
            k, p = spec.k, spec.p
        else:
            eval_feats = fitted.features(evals) if evals is not None else None
            tuned = tune_hyperparameters(feats, spec.grid, spec.protocol, eval_feats, seed)
            k, p = tuned.k, tuned.p
            fitted.oracle_tuned = tuned.oracle_tuned
        parts["classifier"] = spa_fit(feats, k, p)
        fitted.k, fitted.p = parts["classifier"].k, parts["classifier"].p
    return fitted


@dataclass(frozen=True)
class RunResult:
    index: int
    accuracy: float
    confusion: ConfusionCounts
    seed: int
    k: int = None
    p: int = None


@dataclass
class EvalReport:
    """Accuracies over folds or replicates for one subject and method."""

    method: str
    subject: str
    split: str
    runs: list
    config: dict = field(default_factory=dict)
    oracle_tuned: bool = False

    @property
    def accuracies(self):
        return np.array([r.accuracy for r in self.runs])

    @property
    def mean(self):
        return float(np.mean(self.accuracies))

    @property
    def std(self):
        # Sample standard deviation; a single run has no spread.
        acc = self.accuracies
        return float(np.std(acc, ddof=1)) if acc.size > 1 else 0.0

    @property
    def confusion(self):
        total = ConfusionCounts()
        for r in self.runs:
            total = total + r.confusion
        return total


class PipelineFailure(SpaEegError, RuntimeError):
    """A fit or prediction failed inside one fold or replicate."""


def _run_split(epochs, spec, train_idx, test_idx, seed, index, clean=None, poison=False,
               where=None):
    where = where or f"run {index}"
    source = epochs
    if poison:
        if spec.classifier == "spa" and spec.protocol == "oracle_on_eval" and spec.k is None:
            raise ValidationError("oracle_on_eval reads test rows by design; cannot poison")
        data = epochs.data.copy()
        data[test_idx] = np.nan
        source = epochs.replace(data=data)
    train = source.subset(train_idx)
    test = (clean or epochs).subset(test_idx)
    try:
        fitted = fit_pipeline(spec, train, seed, evals=test)
        if poison and not fitted.is_finite():
            raise PipelineFailure(f"{spec.name}, {where}: fitted model touched held-out rows")
        pred = fitted.predict(test)
    except PipelineFailure:
        raise
    except SpaEegError as exc:
        raise PipelineFailure(f"{spec.name}, {where}: {exc}") from exc
    cm = confusion(test.labels, pred)
    return RunResult(index, accuracy(cm), cm, seed, fitted.k, fitted.p), fitted.oracle_tuned


def _execute(tasks, n_workers):
    if n_workers <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(t) for t in tasks]
        return [f.result() for f in futures]


def kfold_cv(epochs, spec, folds=10, seed=0, n_workers=1, poison=False):
    """Stratified ``folds``-fold cross-validation of a full pipeline.

    With ``poison=True`` the held-out trials are replaced by NaN before
    fitting, and a fitted model containing NaN raises
    :class:`PipelineFailure` (leakage check).
    """
    test_folds = stratified_kfold(epochs.labels, folds, seed)
    everything = np.arange(epochs.n_trials)
    tasks = []
    for i, test_idx in enumerate(test_folds):
        train_idx = np.setdiff1d(everything, test_idx)
        run_seed = derive_seed(seed, i)
        tasks.append(
            lambda tr=train_idx, te=test_idx, s=run_seed, i=i: _run_split(
                epochs, spec, tr, te, s, i, poison=poison, where=f"fold {i + 1}/{folds}"
            )
        )
    results = _execute(tasks, n_workers)
    return EvalReport(
        method=spec.name,
        subject=epochs.subject_id,
        split=f"cv{folds}",
        runs=[r for r, _ in results],
        config=_config_echo(spec, seed, folds=folds),
        oracle_tuned=any(o for _, o in results),
    )


def _fraction_label(fraction):
    f = Fraction(str(fraction) if isinstance(fraction, str) else fraction).limit_denominator(1000)
    return f"{f.numerator}/{f.denominator}"


def subsample_experiment(epochs, spec, fractions=DEFAULT_FRACTIONS, replicates=20, seed=0,
                         n_workers=1, poison=False):
    """Train on a stratified random fraction, test on the rest, ``replicates``
    times per fraction. Returns one :class:`EvalReport` per fraction."""
    reports = []
    for fi, fraction in enumerate(fractions):
        tasks = []
        for rep in range(replicates):
            run_seed = derive_seed(seed, fi, rep)
            train_idx, test_idx = stratified_subsample(epochs.labels, float(Fraction(fraction)), run_seed)
            tasks.append(
                lambda tr=train_idx, te=test_idx, s=run_seed, r=rep: _run_split(
                    epochs, spec, tr, te, s, r, poison=poison,
                    where=f"fraction {_fraction_label(fraction)}, replicate {r + 1}",
                )
            )
        results = _execute(tasks, n_workers)
        reports.append(
            EvalReport(
                method=spec.name,
                subject=epochs.subject_id,
                split=_fraction_label(fraction),
                runs=[r for r, _ in results],
                config=_config_echo(spec, seed, replicates=replicates),
                oracle_tuned=any(o for _, o in results),
            )
        )
    return reports


def _config_echo(spec, seed, **extra):
    out = {"seed": seed, "m": spec.m, "protocol": spec.protocol, "std": "sample (n-1)"}
    if spec.classifier == "spa":
        g = spec.grid
        out["grid"] = f"p={list(g.p_values)};k={g.k_min}..{g.k_max}/{g.k_step}"
    out.update(extra)
    return out


def format_pct(x):
    """Two decimals, rounding half up on the shortest decimal repr."""
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "nan"
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


RUN_COLUMNS = ("subject", "method", "fraction", "run", "accuracy", "k", "p", "seed")
SUMMARY_COLUMNS = ("subject", "method", "mean", "std")
CURVE_COLUMNS = ("subject", "method", "fraction", "mean", "std")
ORACLE_MARK = " [oracle-tuned]"


def _label(rep):
    return rep.method + (ORACLE_MARK if rep.oracle_tuned else "")


def _write_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def runs_csv(reports):
    rows = []
    for rep in reports:
        for r in rep.runs:
            rows.append([
                rep.subject, _label(rep), rep.split, r.index, format_pct(r.accuracy),
                "" if r.k is None else r.k, "" if r.p is None else r.p, r.seed,
            ])
    return _write_csv(RUN_COLUMNS, rows)


def _placeholder_rows(reports, not_implemented, with_split):
    rows = []
    for subject, split in dict.fromkeys((rep.subject, rep.split) for rep in reports):
        for name in not_implemented:
            rows.append([subject, name] + ([split] if with_split else [])
                        + ["not implemented", "not implemented"])
    return rows


def summary_csv(reports, not_implemented=()):
    rows = [[rep.subject, _label(rep), format_pct(rep.mean), format_pct(rep.std)]
            for rep in reports]
    return _write_csv(SUMMARY_COLUMNS, rows + _placeholder_rows(reports, not_implemented, False))


def learning_curve_csv(reports, not_implemented=()):
    rows = [[rep.subject, _label(rep), rep.split, format_pct(rep.mean), format_pct(rep.std)]
            for rep in reports]
    return _write_csv(CURVE_COLUMNS, rows + _placeholder_rows(reports, not_implemented, True))


def text_table(reports, not_implemented=()):
    """Aligned table: one row per subject, one ``mean ± std`` column per method,
    plus across-subject Mean and Std rows."""
    methods = list(dict.fromkeys(rep.method for rep in reports)) + list(not_implemented)
    subjects = list(dict.fromkeys((rep.subject, rep.split) for rep in reports))
    cell = {(rep.subject, rep.split, rep.method): rep for rep in reports}
    header = ["subject", "split"] + [
        m + (ORACLE_MARK if any(r.oracle_tuned for r in reports if r.method == m) else "")
        for m in methods
    ]
    body = []
    for subject, split in subjects:
        row = [subject, split]
        for m in methods:
            rep = cell.get((subject, split, m))
            row.append("not implemented" if m in not_implemented
                       else "" if rep is None else f"{format_pct(rep.mean)} ± {format_pct(rep.std)}")
        body.append(row)
    for split in dict.fromkeys(s for _, s in subjects):
        means = {m: [cell[(s, sp, m)].mean for s, sp in subjects
                     if sp == split and (s, sp, m) in cell] for m in methods}
        if len(subjects) > 1:
            body.append(["Mean", split] + [
                format_pct(np.mean(means[m])) if means[m] else "" for m in methods])
            body.append(["Std", split] + [
                format_pct(np.std(means[m], ddof=1)) if len(means[m]) > 1 else ""
                for m in methods])
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip()
             for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def render_tables(reports, not_implemented=()):
    """``(runs_csv, summary_csv, text_table)`` for a list of reports."""
    return (runs_csv(reports), summary_csv(reports, not_implemented),
            text_table(reports, not_implemented))
