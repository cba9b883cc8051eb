"""Regularized logistic classification of screened curves.

Maps the (CUSUM, DV) feature pair to the probability that a variable curve
is an isolated event.  Features are standardized to mean zero and standard
deviation one half, then logistic coefficients get independent heavy-tailed
Cauchy priors (scale 10 on the intercept, 2.5 on each feature), which keeps
estimates finite even on perfectly separated training sets.  The MAP is
found by damped Newton iteration with step halving; the prior's mild
non-concavity is handled by ridging the Newton system whenever it loses
definiteness.  The screening stage supplies the variability indicator, so
the event probability is the product of the selection flag and the
classifier output.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

__all__ = [
    "ClassProbability",
    "ClassifierError",
    "CrossValidation",
    "LogisticModel",
    "combine_probability",
    "cross_validate",
    "fit_logistic_map",
    "load_model",
    "predict_prob",
    "roc_auc",
    "save_model",
    "standardize_features",
]

MODEL_FORMAT = "bumphunt-model v1"
DEFAULT_INTERCEPT_SCALE = 10.0
DEFAULT_COEF_SCALE = 2.5


class ClassifierError(RuntimeError):
    """Training or serialization failure."""


@dataclass(frozen=True)
class LogisticModel:
    """Trained MAP logistic model with its standardization."""

    feature_names: tuple[str, ...]
    centers: np.ndarray
    scales: np.ndarray
    coefficients: np.ndarray  # intercept first, on standardized features
    prior_scales: np.ndarray
    n_pos: int
    n_neg: int
    cv_auc: float


@dataclass(frozen=True)
class ClassProbability:
    """Decomposed event probability for one curve."""

    p_variable: float
    p_event_given_variable: float

    @property
    def p_event(self) -> float:
        return self.p_variable * self.p_event_given_variable


def standardize_features(features):
    """Shift and scale each column to mean 0, standard deviation 0.5.

    Returns (standardized, centers, scales) with scales chosen so that
    dividing by them yields sd 0.5, the convention the weakly-informative
    prior scales assume.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ClassifierError("need a 2-d feature matrix with >= 2 rows")
    if not np.all(np.isfinite(x)):
        raise ClassifierError("features contain non-finite entries")
    centers = x.mean(axis=0)
    sd = x.std(axis=0)
    for j, s in enumerate(sd):
        if s == 0:
            raise ClassifierError("feature column %d has zero variance" % j)
    scales = 2.0 * sd
    return (x - centers) / scales, centers, scales


def _sigmoid(eta):
    out = np.empty_like(eta, dtype=float)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _penalized_loglik(xd, y, beta, prior_scales):
    eta = xd @ beta
    # log p and log(1-p) via the numerically stable softplus
    loglik = (y * eta - np.logaddexp(0.0, eta)).sum()
    prior = -np.log1p((beta / prior_scales) ** 2).sum()
    return loglik + prior


def fit_logistic_map(features, labels, prior_scales=None,
                     feature_names=None, grad_tol: float = 1e-8,
                     max_iter: int = 1000) -> LogisticModel:
    """MAP logistic coefficients under independent Cauchy priors.

    Starts from zero and iterates damped Newton steps on the penalized log
    likelihood until the gradient is below `grad_tol`; the Newton system is
    ridged when the heavy-tailed prior makes it indefinite and steps are
    halved until the objective increases.  Raises on non-convergence.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or len(y) != x.shape[0]:
        raise ClassifierError("features/labels shape mismatch")
    if not (np.all((y == 0) | (y == 1)) and 0 < y.sum() < len(y)):
        raise ClassifierError("labels must be binary with both classes present")
    xs, centers, scales = standardize_features(x)
    k = x.shape[1]
    xd = np.hstack([np.ones((len(y), 1)), xs])
    if prior_scales is None:
        prior_scales = np.array([DEFAULT_INTERCEPT_SCALE]
                                + [DEFAULT_COEF_SCALE] * k)
    prior_scales = np.asarray(prior_scales, dtype=float)
    if len(prior_scales) != k + 1 or np.any(prior_scales <= 0):
        raise ClassifierError("need one positive prior scale per coefficient")

    beta = np.zeros(k + 1)
    obj = _penalized_loglik(xd, y, beta, prior_scales)
    for iteration in range(max_iter):
        p = _sigmoid(xd @ beta)
        grad = xd.T @ (y - p) - 2.0 * beta / (prior_scales ** 2 + beta ** 2)
        if np.max(np.abs(grad)) <= grad_tol:
            break
        r = p * (1.0 - p)
        neg_hess = (xd * r[:, None]).T @ xd
        s2b2 = prior_scales ** 2 + beta ** 2
        neg_hess[np.diag_indices_from(neg_hess)] += \
            2.0 * (prior_scales ** 2 - beta ** 2) / (s2b2 ** 2)
        ridge = 0.0
        while True:
            try:
                step = cho_solve(cho_factor(
                    neg_hess + ridge * np.eye(k + 1)), grad)
                break
            except LinAlgError:
                ridge = max(2.0 * ridge, 1e-6)
        t = 1.0
        while t > 1e-12:
            cand = beta + t * step
            cand_obj = _penalized_loglik(xd, y, cand, prior_scales)
            if cand_obj > obj:
                beta, obj = cand, cand_obj
                break
            t *= 0.5
        else:
            # no ascent along the Newton direction; fall back to gradient
            t = 1.0 / (1.0 + np.abs(grad).max())
            while t > 1e-14:
                cand = beta + t * grad
                cand_obj = _penalized_loglik(xd, y, cand, prior_scales)
                if cand_obj > obj:
                    beta, obj = cand, cand_obj
                    break
                t *= 0.5
            else:
                raise ClassifierError(
                    "no ascent direction at iteration %d (|grad|=%.3g)"
                    % (iteration, np.abs(grad).max()))
    else:
        raise ClassifierError(
            "Newton did not converge in %d iterations (|grad|=%.3g)"
            % (max_iter, np.abs(grad).max()))

    if feature_names is None:
        feature_names = tuple("f%d" % j for j in range(k))
    n_pos = int(y.sum())
    return LogisticModel(
        feature_names=tuple(feature_names),
        centers=centers,
        scales=scales,
        coefficients=beta,
        prior_scales=prior_scales,
        n_pos=n_pos,
        n_neg=len(y) - n_pos,
        cv_auc=float("nan"),
    )


def predict_prob(model: LogisticModel, features):
    """Event probability for one feature row or a stack of rows."""
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if not np.all(np.isfinite(x)):
        raise ClassifierError("features contain non-finite entries")
    xs = (x - model.centers) / model.scales
    eta = model.coefficients[0] + xs @ model.coefficients[1:]
    p = _sigmoid(eta)
    return float(p[0]) if single else p


def combine_probability(selected: bool,
                        p_event_given_variable: float) -> ClassProbability:
    """Compose the screening indicator with the classifier output."""
    return ClassProbability(
        p_variable=1.0 if selected else 0.0,
        p_event_given_variable=float(p_event_given_variable),
    )


def roc_auc(scores, labels):
    """ROC curve by threshold sweep and its trapezoid-rule area.

    Returns (fpr, tpr, auc); thresholds run over the unique scores from
    high to low, tied scores moving together.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    n_pos = y.sum()
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ClassifierError("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    boundary = np.nonzero(np.diff(s_sorted))[0]
    last = np.append(boundary, len(s) - 1)
    tp = np.cumsum(y_sorted)[last]
    fp = np.cumsum(1.0 - y_sorted)[last]
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    return fpr, tpr, float(np.trapezoid(tpr, fpr))


@dataclass(frozen=True)
class CrossValidation:
    """Per-fold ROC curves and AUCs from stratified k-fold validation."""

    fold_rocs: tuple
    fold_aucs: tuple
    mean_auc: float


def _stratified_folds(labels, k: int, seed):
    """Deterministic round-robin class-stratified fold assignment."""
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(y), dtype=int)
    for cls in (0, 1):
        idx = np.nonzero(y == cls)[0]
        if len(idx) < k:
            raise ClassifierError(
                "class %d has %d members, fewer than %d folds"
                % (cls, len(idx), k))
        perm = rng.permutation(len(idx))
        fold[idx[perm]] = np.arange(len(idx)) % k
    return fold


def cross_validate(features, labels, k: int = 10, seed=0,
                   prior_scales=None) -> CrossValidation:
    """Stratified k-fold validation of the MAP logistic classifier."""
    if k < 2:
        raise ClassifierError("need at least 2 folds")
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    fold = _stratified_folds(y, k, seed)
    rocs, aucs = [], []
    for f in range(k):
        train = fold != f
        test = ~train
        if len(np.unique(y[test])) < 2 or len(np.unique(y[train])) < 2:
            raise ClassifierError("fold %d lost a class; stratification bug" % f)
        model = fit_logistic_map(x[train], y[train], prior_scales=prior_scales)
        scores = predict_prob(model, x[test])
        fpr, tpr, auc = roc_auc(scores, y[test])
        rocs.append((fpr, tpr))
        aucs.append(auc)
    return CrossValidation(
        fold_rocs=tuple(rocs),
        fold_aucs=tuple(aucs),
        mean_auc=float(np.mean(aucs)),
    )


def _fmt(values) -> str:
    return "\t".join("%.17g" % v for v in np.atleast_1d(values))


def save_model(model: LogisticModel, path) -> None:
    """Write the model as versioned plain-text key-value lines."""
    buf = io.StringIO()
    buf.write(MODEL_FORMAT + "\n")
    buf.write("feature_names\t%s\n" % "\t".join(model.feature_names))
    buf.write("centers\t%s\n" % _fmt(model.centers))
    buf.write("scales\t%s\n" % _fmt(model.scales))
    buf.write("coefficients\t%s\n" % _fmt(model.coefficients))
    buf.write("prior_scales\t%s\n" % _fmt(model.prior_scales))
    buf.write("n_pos\t%d\n" % model.n_pos)
    buf.write("n_neg\t%d\n" % model.n_neg)
    buf.write("cv_auc\t%.17g\n" % model.cv_auc)
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_model(path) -> LogisticModel:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != MODEL_FORMAT:
        raise ClassifierError("unrecognized model file format")
    fields = {}
    for ln in lines[1:]:
        key, *vals = ln.split("\t")
        fields[key] = vals
    try:
        return LogisticModel(
            feature_names=tuple(fields["feature_names"]),
            centers=np.array([float(v) for v in fields["centers"]]),
            scales=np.array([float(v) for v in fields["scales"]]),
            coefficients=np.array([float(v) for v in fields["coefficients"]]),
            prior_scales=np.array([float(v) for v in fields["prior_scales"]]),
            n_pos=int(fields["n_pos"][0]),
            n_neg=int(fields["n_neg"][0]),
            cv_auc=float(fields["cv_auc"][0]),
        )
    except (KeyError, ValueError) as exc:
        raise ClassifierError("incomplete model file: %s" % exc) from exc
