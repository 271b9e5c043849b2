"""Classical baseline classifiers, evaluation metrics and the ranked comparison table."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike, NDArray

from vegspec.spectra import ClassIndex, SpectralLibrary, encode_labels

GNB_VAR_FLOOR = 1e-9


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


# --------------------------------------------------------------------------- LDA


@dataclass(frozen=True, eq=False)
class LdaModel:
    class_means: NDArray[np.float64]  # (C, D)
    chol: NDArray[np.float64]  # lower-triangular factor of the shrunk pooled covariance
    log_priors: NDArray[np.float64]
    shrinkage: float
    class_index: Optional[ClassIndex] = None

    def decision_function(self, x: ArrayLike) -> NDArray[np.float64]:
        """log_prior[c] - 0.5 * Mahalanobis^2(s, mu_c), shape (N, C)."""
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if X.shape[1] != self.class_means.shape[1]:
            raise ValueError(
                f"expected {self.class_means.shape[1]} bands, got {X.shape[1]}"
            )
        scores = np.empty((X.shape[0], self.class_means.shape[0]))
        for c, mu in enumerate(self.class_means):
            z = scipy.linalg.solve_triangular(self.chol, (X - mu).T, lower=True,
                                              check_finite=False)
            scores[:, c] = self.log_priors[c] - 0.5 * np.sum(z * z, axis=0)
        return scores


def _xy(train: Union[SpectralLibrary, Tuple[ArrayLike, ArrayLike]]):
    if isinstance(train, SpectralLibrary):
        index, y = encode_labels(train)
        return train.reflectance, y, index
    X, y = train
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("expected X of shape (N, D) and y of shape (N,)")
    return X, y, None


def _n_classes(y: NDArray[np.int64], index: Optional[ClassIndex]) -> int:
    C = len(index) if index is not None else int(y.max()) + 1
    counts = np.bincount(y, minlength=C)
    if C < 2:
        raise ValueError("need at least 2 classes")
    if np.any(counts == 0):
        raise ValueError(f"classes without training spectra: {np.flatnonzero(counts == 0).tolist()}")
    return C


def fit_lda(
    train: Union[SpectralLibrary, Tuple[ArrayLike, ArrayLike]],
    shrinkage: float = 0.1,
    priors: Optional[ArrayLike] = None,
) -> LdaModel:
    """Shrinkage LDA.

    The pooled within-class covariance is blended toward a scaled identity,
    ``(1 - shrinkage) * S + shrinkage * tr(S)/D * I``, and Cholesky-factored.
    ``priors`` defaults to the empirical class frequencies; any positive
    vector is normalised.
    """
    if not 0.0 <= shrinkage <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    X, y, index = _xy(train)
    C = _n_classes(y, index)
    n, D = X.shape
    means = np.vstack([X[y == c].mean(axis=0) for c in range(C)])
    centered = X - means[y]
    dof = max(n - C, 1)
    cov = centered.T @ centered / dof
    target = np.trace(cov) / D
    shrunk = (1.0 - shrinkage) * cov + shrinkage * target * np.eye(D)
    try:
        chol = np.linalg.cholesky(shrunk)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"shrunk covariance is not positive-definite (shrinkage={shrinkage}, "
            f"D={D}, n={n}); raise the shrinkage above 0"
        ) from None
    if priors is None:
        p = np.bincount(y, minlength=C).astype(np.float64)
    else:
        p = np.asarray(priors, dtype=np.float64)
        if p.shape != (C,) or np.any(p <= 0):
            raise ValueError("priors must be a positive vector with one entry per class")
    p = p / p.sum()
    return LdaModel(means, chol, np.log(p), float(shrinkage), index)


def predict_lda(model: LdaModel, x: ArrayLike) -> Union[int, NDArray[np.int64]]:
    single = np.ndim(x) == 1
    labels = np.argmax(model.decision_function(x), axis=1).astype(np.int64)
    return int(labels[0]) if single else labels


# --------------------------------------------------------------------------- baselines


class BaselineKind(str, enum.Enum):
    LDA = "lda"
    RIDGE = "ridge"
    NEAREST_CENTROID = "nearest_centroid"
    GAUSSIAN_NB = "gaussian_nb"
    KNN = "knn"
    LOGISTIC = "logistic"


DISPLAY_NAMES = {
    BaselineKind.LDA: "LDA",
    BaselineKind.RIDGE: "RidgeClassifier",
    BaselineKind.NEAREST_CENTROID: "NearestCentroid",
    BaselineKind.GAUSSIAN_NB: "GaussianNB",
    BaselineKind.KNN: "KNearestNeighbors",
    BaselineKind.LOGISTIC: "LogisticRegression",
}


class NearestCentroid:
    def fit(self, X, y, n_classes):
        self.centroids_ = np.vstack([X[y == c].mean(axis=0) for c in range(n_classes)])
        return self

    def predict(self, X):
        d2 = ((X[:, None, :] - self.centroids_[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


class GaussianNB:
    def fit(self, X, y, n_classes):
        self.theta_ = np.vstack([X[y == c].mean(axis=0) for c in range(n_classes)])
        var = np.vstack([X[y == c].var(axis=0) for c in range(n_classes)])
        self.var_ = np.maximum(var, GNB_VAR_FLOOR)
        counts = np.bincount(y, minlength=n_classes)
        self.log_prior_ = np.log(counts / counts.sum())
        return self

    def joint_log_likelihood(self, X):
        out = np.empty((X.shape[0], self.theta_.shape[0]))
        for c in range(self.theta_.shape[0]):
            v = self.var_[c]
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * v)) - 0.5 * np.sum((X - self.theta_[c]) ** 2 / v, axis=1)
            out[:, c] = self.log_prior_[c] + ll
        return out

    def predict(self, X):
        return np.argmax(self.joint_log_likelihood(X), axis=1)


class RidgeClassifier:
    """One-vs-rest ridge regression on {-1, +1} targets with an unpenalised intercept."""

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y, n_classes):
        Y = -np.ones((X.shape[0], n_classes))
        Y[np.arange(X.shape[0]), y] = 1.0
        x_mean = X.mean(axis=0)
        y_mean = Y.mean(axis=0)
        Xc = X - x_mean
        Yc = Y - y_mean
        n, D = Xc.shape
        if D <= n:
            A = Xc.T @ Xc + self.alpha * np.eye(D)
            coef = scipy.linalg.solve(A, Xc.T @ Yc, assume_a="pos")
        else:
            # Dual form: w = X^T (X X^T + alpha I)^-1 Y.
            K = Xc @ Xc.T + self.alpha * np.eye(n)
            coef = Xc.T @ scipy.linalg.solve(K, Yc, assume_a="pos")
        self.coef_ = coef  # (D, C)
        self.intercept_ = y_mean - x_mean @ coef
        return self

    def predict(self, X):
        return np.argmax(X @ self.coef_ + self.intercept_, axis=1)


class KNearestNeighbors:
    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y, n_classes):
        if self.k > X.shape[0]:
            raise ValueError(f"k={self.k} exceeds the training-set size {X.shape[0]}")
        self.X_, self.y_, self.n_classes_ = X, y, n_classes
        return self

    def predict(self, X):
        sq_train = np.sum(self.X_ ** 2, axis=1)
        out = np.empty(X.shape[0], dtype=np.int64)
        for i, x in enumerate(X):
            d2 = sq_train - 2.0 * (self.X_ @ x) + x @ x
            # Stable sort so equidistant neighbours resolve by training order.
            nn = np.argsort(d2, kind="stable")[: self.k]
            votes = np.bincount(self.y_[nn], minlength=self.n_classes_)
            out[i] = int(np.argmax(votes))
        return out


class LogisticRegression:
    """Multinomial logistic regression by full-batch gradient descent."""

    def __init__(self, l2: float = 1e-4, n_iter: int = 500, learning_rate: float = 1e-2):
        self.l2 = l2
        self.n_iter = n_iter
        self.learning_rate = learning_rate

    def fit(self, X, y, n_classes):
        n, D = X.shape
        W = np.zeros((D, n_classes))
        b = np.zeros(n_classes)
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), y] = 1.0
        for _ in range(self.n_iter):
            z = X @ W + b
            z -= z.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            g = (p - onehot) / n
            W -= self.learning_rate * (X.T @ g + self.l2 * W)
            b -= self.learning_rate * g.sum(axis=0)
        self.coef_, self.intercept_ = W, b
        return self

    def predict(self, X):
        return np.argmax(X @ self.coef_ + self.intercept_, axis=1)


class _LdaBaseline:
    def __init__(self, shrinkage: float = 0.1):
        self.shrinkage = shrinkage

    def fit(self, X, y, n_classes):
        self.model_ = fit_lda((X, y), self.shrinkage)
        return self

    def predict(self, X):
        return predict_lda(self.model_, X)


_FACTORIES = {
    BaselineKind.LDA: _LdaBaseline,
    BaselineKind.RIDGE: RidgeClassifier,
    BaselineKind.NEAREST_CENTROID: NearestCentroid,
    BaselineKind.GAUSSIAN_NB: GaussianNB,
    BaselineKind.KNN: KNearestNeighbors,
    BaselineKind.LOGISTIC: LogisticRegression,
}


def fit_baseline(kind: Union[BaselineKind, str], train, **params):
    kind = BaselineKind(kind)
    X, y, index = _xy(train)
    C = _n_classes(y, index)
    model = _FACTORIES[kind](**params).fit(X, y, C)
    model.kind = kind
    return model


def predict_baseline(model, x: ArrayLike) -> Union[int, NDArray[np.int64]]:
    single = np.ndim(x) == 1
    labels = np.asarray(model.predict(np.atleast_2d(np.asarray(x, dtype=np.float64))), dtype=np.int64)
    return int(labels[0]) if single else labels


# --------------------------------------------------------------------------- metrics


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    balanced_accuracy: float
    weighted_f1: float
    wall_time_s: float
    confusion: NDArray[np.int64]  # rows = truth, columns = prediction

    def to_dict(self, labels: Optional[Sequence[str]] = None) -> Dict[str, object]:
        d: Dict[str, object] = {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "f1_weighted": self.weighted_f1,
            "n": int(self.confusion.sum()),
            "confusion": self.confusion.tolist(),
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d


def evaluate(
    predictions: ArrayLike, truth: ArrayLike, C: int, wall_time_s: float = 0.0
) -> EvalReport:
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(truth, dtype=np.int64).reshape(-1)
    if pred.shape != true.shape:
        raise ValueError(f"{pred.size} predictions but {true.size} truth labels")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    for name, arr in (("prediction", pred), ("truth", true)):
        if np.any(arr < 0) or np.any(arr >= C):
            raise ValueError(f"{name} label out of range [0, {C})")

    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    n = confusion.sum()
    tp = np.diag(confusion).astype(np.float64)
    support = confusion.sum(axis=1).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)

    present = support > 0
    recall = np.divide(tp, support, out=np.zeros(C), where=present)
    precision = np.divide(tp, predicted, out=np.zeros(C), where=predicted > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom, out=np.zeros(C), where=denom > 0)

    return EvalReport(
        accuracy=float(tp.sum() / n),
        balanced_accuracy=float(recall[present].mean()),
        weighted_f1=float(np.sum(support / n * f1)),
        wall_time_s=float(wall_time_s),
        confusion=confusion,
    )


# --------------------------------------------------------------------------- comparison


@dataclass(frozen=True, eq=False)
class ComparisonRow:
    name: str
    report: Optional[EvalReport]
    error: Optional[str] = None


@dataclass(frozen=True)
class ComparisonTable:
    rows: Tuple[ComparisonRow, ...]

    def names(self) -> List[str]:
        return [r.name for r in self.rows]

    def to_csv(self) -> str:
        lines = ["model,accuracy,balanced_accuracy,f1_weighted,time_s"]
        for r in self.rows:
            if r.report is None:
                lines.append(f"{r.name},ERROR,ERROR,ERROR,ERROR")
                continue
            m = r.report
            lines.append(
                f"{r.name},{m.accuracy:.4f},{m.balanced_accuracy:.4f},"
                f"{m.weighted_f1:.4f},{m.wall_time_s:.3f}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header = ("Model", "Accuracy", "Balanced Acc", "F1 Score", "Time Taken")
        body = []
        for r in self.rows:
            if r.report is None:
                body.append((r.name, "error: " + (r.error or "unknown"), "", "", ""))
            else:
                m = r.report
                body.append((r.name, f"{m.accuracy:.4f}", f"{m.balanced_accuracy:.4f}",
                             f"{m.weighted_f1:.4f}", f"{m.wall_time_s:.3f}"))
        widths = [max(len(row[i]) for row in [header] + body) for i in range(5)]
        fmt = lambda row: "  ".join(
            cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(row, widths))
        ).rstrip()
        return "\n".join([fmt(header), fmt(tuple("-" * w for w in widths))] + [fmt(r) for r in body]) + "\n"


def rank(rows: Sequence[ComparisonRow]) -> ComparisonTable:
    """Accuracy descending, ties by name ascending; failed models go last."""
    ok = sorted((r for r in rows if r.report is not None),
                key=lambda r: (-r.report.accuracy, r.name))
    failed = sorted((r for r in rows if r.report is None), key=lambda r: r.name)
    return ComparisonTable(tuple(ok + failed))


def compare(
    train: SpectralLibrary,
    test: SpectralLibrary,
    kinds: Sequence[Union[BaselineKind, str]],
    clock=time.perf_counter,
) -> ComparisonTable:
    if not kinds:
        raise ValueError("no models requested")
    index, y_train = encode_labels(train)
    test_labels = test.labels()
    unknown = sorted(set(test_labels) - set(index.labels))
    if unknown:
        raise ValueError(f"test labels absent from training set: {', '.join(unknown)}")
    y_test = np.array([index.index(label) for label in test_labels], dtype=np.int64)
    C = len(index)

    rows = []
    for kind in kinds:
        kind = BaselineKind(kind)
        name = DISPLAY_NAMES[kind]
        try:
            t0 = clock()
            model = fit_baseline(kind, train)
            pred = predict_baseline(model, test.reflectance)
            elapsed = round(clock() - t0, 3)
            rows.append(ComparisonRow(name, evaluate(pred, y_test, C, elapsed)))
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            rows.append(ComparisonRow(name, None, f"{type(exc).__name__}: {exc}"))
    return rank(rows)
