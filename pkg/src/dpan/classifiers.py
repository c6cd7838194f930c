"""Six supervised classifiers over feature vectors, with confidence scores.

Everything is implemented on numpy: multinomial logistic regression (full
batch gradient descent), one-vs-rest linear SVM (subgradient descent),
k-nearest neighbours, a CART decision tree, bootstrap-bagged random forest,
and gradient-boosted trees on the softmax cross-entropy gradient. Confidence
semantics per model:

  LR   max softmax probability
  SVM  max softmax over the per-class margins
  KNN  fraction of the k neighbours voting for the winner
  RF   fraction of trees voting for the winner
  GBT  max softmax over accumulated class scores
  DT   none (a lone tree offers no usable confidence)

Class labels are kept in ascending order and all argmax ties resolve to the
first (lowest) label. LR, SVM and KNN expect standardized features; the tree
models are scale-invariant and take raw features.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .trees import Tree, grow_tree

GRAD_TOL = 1e-6


class ClassifierKind(str, enum.Enum):
    LR = "lr"
    SVM = "svm"
    KNN = "knn"
    DT = "dt"
    RF = "rf"
    GBT = "gbt"


NEEDS_STANDARDIZATION = {ClassifierKind.LR, ClassifierKind.SVM, ClassifierKind.KNN}

DEFAULT_HYPERPARAMS: dict[ClassifierKind, dict] = {
    ClassifierKind.LR: {"l2": 1e-3, "rate": 0.1, "epochs": 500},
    ClassifierKind.SVM: {"C": 1.0, "epochs": 500},
    ClassifierKind.KNN: {"k": 5},
    ClassifierKind.DT: {"depth": None},
    ClassifierKind.RF: {"trees": 100, "depth": None},
    ClassifierKind.GBT: {"rounds": 100, "rate": 0.1, "depth": 3},
}


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


@dataclass
class Prediction:
    label: str
    confidence: float | None
    scores: np.ndarray  # per-class, aligned with model.labels


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((len(X), 1))])


def lr_loss(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean softmax cross-entropy plus l2 * ||weights||^2.

    weights is (D+1, C); the final row is the bias and is regularized with
    the rest. y holds class indices.
    """
    p = softmax(_augment(X) @ weights)
    nll = -np.log(p[np.arange(len(y)), y]).mean()
    return float(nll + l2 * (weights**2).sum())


def lr_gradient(weights: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    """Analytic gradient of lr_loss; the penalty contributes 2*l2*weights."""
    A = _augment(X)
    p = softmax(A @ weights)
    p[np.arange(len(y)), y] -= 1.0
    return A.T @ p / len(y) + 2.0 * l2 * weights


@dataclass
class ClassifierModel:
    kind: ClassifierKind
    labels: list[str]

    def class_scores(self, x: np.ndarray) -> tuple[np.ndarray, float | None]:
        raise NotImplementedError

    @property
    def dim(self) -> int:
        raise NotImplementedError


@dataclass
class LRModel(ClassifierModel):
    weights: np.ndarray  # (D+1, C)

    def class_scores(self, x):
        p = softmax(_augment(x[None, :]) @ self.weights)[0]
        return p, float(p.max())

    @property
    def dim(self):
        return self.weights.shape[0] - 1


@dataclass
class SVMModel(ClassifierModel):
    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)

    def margins(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.bias

    def class_scores(self, x):
        p = softmax(self.margins(x))
        return p, float(p.max())

    @property
    def dim(self):
        return self.weights.shape[1]


@dataclass
class KNNModel(ClassifierModel):
    X: np.ndarray
    y: np.ndarray  # class indices
    k: int

    def class_scores(self, x):
        d2 = ((self.X - x) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")[: self.k]
        votes = np.bincount(self.y[order], minlength=len(self.labels))
        scores = votes / self.k
        return scores, float(scores.max())

    @property
    def dim(self):
        return self.X.shape[1]


@dataclass
class DTModel(ClassifierModel):
    tree: Tree
    n_features: int

    def class_scores(self, x):
        counts = self.tree.leaf_values(x[None, :])[0]
        return counts / counts.sum(), None

    @property
    def dim(self):
        return self.n_features


@dataclass
class RFModel(ClassifierModel):
    trees: list[Tree]
    tree_seeds: list[int]
    n_features: int

    def class_scores(self, x):
        votes = np.zeros(len(self.labels))
        row = x[None, :]
        for t in self.trees:
            counts = t.leaf_values(row)[0]
            votes[int(counts.argmax())] += 1.0
        scores = votes / len(self.trees)
        return scores, float(scores.max())

    @property
    def dim(self):
        return self.n_features


@dataclass
class GBTModel(ClassifierModel):
    class_trees: list[list[Tree]]  # [round][class]
    learning_rate: float
    n_features: int

    def raw_scores(self, x: np.ndarray) -> np.ndarray:
        f = np.zeros(len(self.labels))
        row = x[None, :]
        for round_trees in self.class_trees:
            for c, t in enumerate(round_trees):
                f[c] += self.learning_rate * t.leaf_values(row)[0, 0]
        return f

    def class_scores(self, x):
        p = softmax(self.raw_scores(x))
        return p, float(p.max())

    @property
    def dim(self):
        return self.n_features


def _check_training_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (n, d) with one label per row")
    labels = sorted(set(str(v) for v in y))
    if len(labels) < 2:
        raise ValueError("training data must contain at least 2 classes")
    index = {lab: i for i, lab in enumerate(labels)}
    y_idx = np.array([index[str(v)] for v in y])
    return X, y_idx, labels


def _fit_lr(X, y_idx, n_classes, l2=1e-3, rate=0.1, epochs=500):
    if l2 < 0 or rate <= 0 or epochs < 1:
        raise ValueError("invalid LR hyperparameters")
    W = np.zeros((X.shape[1] + 1, n_classes))
    for _ in range(int(epochs)):
        g = lr_gradient(W, X, y_idx, l2)
        if np.linalg.norm(g) < GRAD_TOL:
            break
        W -= rate * g
    return W


def _fit_svm(X, y_idx, n_classes, C=1.0, epochs=500, rate=0.1):
    if C <= 0 or epochs < 1:
        raise ValueError("invalid SVM hyperparameters")
    n, d = X.shape
    lam = 1.0 / C
    W = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    T = np.full((n, n_classes), -1.0)
    T[np.arange(n), y_idx] = 1.0
    for epoch in range(int(epochs)):
        margins = X @ W.T + b
        viol = (T * margins < 1.0).astype(np.float64) * T
        g_w = lam * W - viol.T @ X / n
        g_b = -viol.mean(axis=0)
        if np.sqrt((g_w**2).sum() + (g_b**2).sum()) < GRAD_TOL:
            break
        step = rate / np.sqrt(1.0 + epoch)
        W -= step * g_w
        b -= step * g_b
    return W, b


def _fit_gbt(X, y_idx, n_classes, rounds=100, rate=0.1, depth=3):
    if rounds < 1 or rate <= 0:
        raise ValueError("invalid GBT hyperparameters")
    n = len(X)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y_idx] = 1.0
    F = np.zeros((n, n_classes))
    class_trees = []
    for _ in range(int(rounds)):
        P = softmax(F)
        round_trees = []
        for c in range(n_classes):
            residual = onehot[:, c] - P[:, c]
            t = grow_tree(X, residual, task="regression", max_depth=depth)
            F[:, c] += rate * t.leaf_values(X)[:, 0]
            round_trees.append(t)
        class_trees.append(round_trees)
    return class_trees


def fit(kind: ClassifierKind, hyperparams: dict | None, X, y, seed: int = 0) -> ClassifierModel:
    """Train one classifier. Deterministic given the seed."""
    kind = ClassifierKind(kind)
    hp = dict(DEFAULT_HYPERPARAMS[kind])
    hp.update(hyperparams or {})
    X, y_idx, labels = _check_training_data(X, y)
    n_classes = len(labels)

    if kind is ClassifierKind.LR:
        W = _fit_lr(X, y_idx, n_classes, l2=hp["l2"], rate=hp["rate"], epochs=hp["epochs"])
        return LRModel(kind, labels, weights=W)

    if kind is ClassifierKind.SVM:
        W, b = _fit_svm(X, y_idx, n_classes, C=hp["C"], epochs=hp["epochs"],
                        rate=hp.get("rate", 0.1))
        return SVMModel(kind, labels, weights=W, bias=b)

    if kind is ClassifierKind.KNN:
        k = int(hp["k"])
        if not 1 <= k <= len(X):
            raise ValueError(f"k={k} must be in [1, {len(X)}]")
        return KNNModel(kind, labels, X=X, y=y_idx, k=k)

    if kind is ClassifierKind.DT:
        tree = grow_tree(X, y_idx, n_classes=n_classes, max_depth=hp["depth"])
        return DTModel(kind, labels, tree=tree, n_features=X.shape[1])

    if kind is ClassifierKind.RF:
        n_trees = int(hp["trees"])
        if n_trees < 1:
            raise ValueError("random forest needs at least 1 tree")
        bootstrap = bool(hp.get("bootstrap", True))
        if hp.get("features", "sqrt") == "sqrt":
            max_features = max(1, int(np.sqrt(X.shape[1])))
        else:
            max_features = None
        seeds = [int(s) for s in np.random.default_rng(seed).integers(0, 2**63, size=n_trees)]
        trees = []
        for ts in seeds:
            rng_t = np.random.default_rng(ts)
            idx = rng_t.integers(0, len(X), len(X)) if bootstrap else np.arange(len(X))
            trees.append(
                grow_tree(X[idx], y_idx[idx], n_classes=n_classes,
                          max_depth=hp["depth"], max_features=max_features, rng=rng_t)
            )
        return RFModel(kind, labels, trees=trees, tree_seeds=seeds, n_features=X.shape[1])

    if kind is ClassifierKind.GBT:
        class_trees = _fit_gbt(X, y_idx, n_classes, rounds=hp["rounds"],
                               rate=hp["rate"], depth=hp["depth"])
        return GBTModel(kind, labels, class_trees=class_trees,
                        learning_rate=float(hp["rate"]), n_features=X.shape[1])

    raise ValueError(f"unknown classifier kind {kind}")


def predict(model: ClassifierModel, x: np.ndarray) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"feature vector has {x.shape}, model expects ({model.dim},)")
    scores, confidence = model.class_scores(x)
    return Prediction(
        label=model.labels[int(scores.argmax())],
        confidence=confidence,
        scores=scores,
    )


def predict_many(model: ClassifierModel, X) -> list[Prediction]:
    return [predict(model, x) for x in np.asarray(X, dtype=np.float64)]
