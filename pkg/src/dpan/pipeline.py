"""Enrollment pipeline: split, cross-validate, search, train, tune, package.

The trained artifact (a DPAN model) bundles the feature extractor weights,
the optional feature standardizer, the classifier, the class labels and the
tuned confidence threshold in one binary container. The threshold is chosen
as the maximum confidence over all tuning adversaries and all misclassified
legitimate validation images, plus a small epsilon: the weakest threshold
that yields zero false positives on the tuning sets. All randomness is
driven by named sub-seeds derived from one master seed, so enrollment is
reproducible byte for byte.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import classifiers as clf
from . import features as feat
from . import imgen
from .classifiers import ClassifierKind, Prediction, Standardizer
from .container import decode_container, encode_container
from .simulate import DatasetManifest
from .trees import Tree, tree_from_arrays, tree_to_arrays

MODEL_MAGIC = b"DPAN1"
THRESHOLD_EPSILON = 1e-6

DEFAULT_GRIDS: dict[ClassifierKind, dict] = {
    ClassifierKind.LR: {
        "l2": [1e-4, 1e-3, 1e-2, 1e-1],
        "rate": [0.01, 0.1],
        "epochs": [200, 500],
    },
    ClassifierKind.SVM: {"C": [0.1, 1.0, 10.0], "epochs": [200, 500]},
    ClassifierKind.KNN: {"k": [1, 3, 5, 7, 9]},
    ClassifierKind.DT: {"depth": [4, 8, 16, None]},
    ClassifierKind.RF: {"trees": [50, 100, 200], "depth": [8, 16, None]},
    ClassifierKind.GBT: {"rounds": [50, 100], "rate": [0.05, 0.1], "depth": [2, 3]},
}


class NoConfidenceError(ValueError):
    """Raised when an operation needs a confidence the model cannot give."""


# ---------------------------------------------------------------------------
# splits and folds


@dataclass
class DatasetSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    folds: np.ndarray  # fold id per train position
    k: int


def make_stratified_split(labels, test_fraction: float, seed: int):
    """Largest-remainder stratified split; returns (train_idx, test_idx)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    labels = np.asarray([str(v) for v in labels])
    classes = sorted(set(labels))
    members = {c: np.flatnonzero(labels == c) for c in classes}
    for c in classes:
        if len(members[c]) < 2:
            raise ValueError(f"class {c!r} has fewer than 2 samples")
    n = len(labels)
    n_test = int(round(n * test_fraction))
    if n_test < 1 or n_test >= n:
        raise ValueError("test_fraction leaves an empty partition")
    base = {c: int(np.floor(len(members[c]) * test_fraction)) for c in classes}
    remainder = {c: len(members[c]) * test_fraction - base[c] for c in classes}
    extras = n_test - sum(base.values())
    for c in sorted(classes, key=lambda c: (-remainder[c], c)):
        if extras <= 0:
            break
        if base[c] + 1 < len(members[c]):
            base[c] += 1
            extras -= 1
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in classes:
        perm = rng.permutation(members[c])
        test.extend(perm[: base[c]])
        train.extend(perm[base[c] :])
    return np.sort(np.array(train)), np.sort(np.array(test))


def make_stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Round-robin fold ids per class; every class appears in every fold."""
    labels = np.asarray([str(v) for v in labels])
    classes = sorted(set(labels))
    smallest = min((labels == c).sum() for c in classes)
    if k > smallest:
        raise ValueError(f"K={k} exceeds smallest class count {smallest}")
    rng = np.random.default_rng(seed)
    folds = np.empty(len(labels), dtype=np.int64)
    for c in classes:
        perm = rng.permutation(np.flatnonzero(labels == c))
        folds[perm] = np.arange(len(perm)) % k
    return folds


def split(manifest: DatasetManifest, test_fraction: float = 0.2, seed: int = 0,
          k: int = 5) -> DatasetSplit:
    labels = [r.device_id for r in manifest.records]
    train_idx, test_idx = make_stratified_split(labels, test_fraction, seed)
    folds = make_stratified_folds([labels[i] for i in train_idx], k, seed)
    return DatasetSplit(train_idx, test_idx, folds, k)


# ---------------------------------------------------------------------------
# cross-validation and hyperparameter search


def _fit_eval(kind, hyperparams, X_train, y_train, X_test, y_test, seed):
    if kind in clf.NEEDS_STANDARDIZATION:
        std = Standardizer.fit(X_train)
        X_train = std.transform(X_train)
        X_test = std.transform(X_test)
    model = clf.fit(kind, hyperparams, X_train, y_train, seed=seed)
    preds = clf.predict_many(model, X_test)
    return float(np.mean([p.label == t for p, t in zip(preds, y_test)]))


def cross_validate(kind, hyperparams, X, y, k: int = 5, seed: int = 0):
    """K-fold accuracy; returns (mean, population standard deviation)."""
    kind = ClassifierKind(kind)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray([str(v) for v in y])
    folds = make_stratified_folds(y, k, seed)
    accs = []
    for i in range(k):
        hold = folds == i
        accs.append(
            _fit_eval(kind, hyperparams, X[~hold], y[~hold], X[hold], y[hold], seed)
        )
    accs = np.array(accs)
    return float(accs.mean()), float(accs.std())


def enumerate_grid(grid: dict) -> list[dict]:
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def random_search(kind, grid, budget: int, X, y, seed: int = 0, k: int = 5) -> dict:
    """Sample `budget` distinct grid points; best CV mean accuracy wins,
    ties going to the earlier sample."""
    kind = ClassifierKind(kind)
    points = enumerate_grid(grid)
    if budget < 1:
        raise ValueError("search budget must be at least 1")
    if budget > len(points):
        raise ValueError(f"budget {budget} exceeds grid size {len(points)}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(points), size=budget, replace=False)
    best, best_score = None, -1.0
    for idx in chosen:
        params = points[int(idx)]
        mean, _ = cross_validate(kind, params, X, y, k=k, seed=seed)
        if mean > best_score:
            best, best_score = params, mean
    return dict(best)


# ---------------------------------------------------------------------------
# adversaries and the confidence threshold


def gen_adversary(count: int, seed: int) -> list[imgen.Phenotype]:
    """Uniform-random fraudulent phenotype images."""
    if count < 1:
        raise ValueError("adversary count must be at least 1")
    rng = np.random.default_rng(seed)
    return [
        imgen.Phenotype(
            rng.integers(0, 256, size=(imgen.HEIGHT, imgen.WIDTH), dtype=np.uint8),
            meta={"adversary": i},
        )
        for i in range(count)
    ]


@dataclass
class ThresholdResult:
    threshold: float
    tuning_fn_rate: float
    max_adversary_confidence: float
    n_misclassified: int
    clamped: bool


# ---------------------------------------------------------------------------
# the trained authenticator


@dataclass
class TrainedAuthenticator:
    """Extractor weights + standardizer + classifier + labels + threshold."""

    weights: feat.WeightSet
    standardizer: Standardizer | None
    classifier: clf.ClassifierModel
    labels: list[str]
    threshold: float | None
    provenance: dict = field(default_factory=dict)

    @property
    def kind(self) -> ClassifierKind:
        return self.classifier.kind

    def feature_vector(self, p: imgen.Phenotype) -> np.ndarray:
        x = feat.extract_phenotype(self.weights, p)
        if self.standardizer is not None:
            x = self.standardizer.transform(x[None, :])[0]
        return x

    def predict(self, p: imgen.Phenotype) -> Prediction:
        return clf.predict(self.classifier, self.feature_vector(p))

    def predict_many(self, phenotypes) -> list[Prediction]:
        return [self.predict(p) for p in phenotypes]

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        header = {
            "format": "dpan-model-v1",
            "kind": self.kind.value,
            "labels": self.labels,
            "threshold": self.threshold,
            "width_scale": self.weights.width_scale,
            "weight_seed": self.weights.seed,
            "provenance": self.provenance,
        }
        arrays: list[tuple[str, np.ndarray]] = []
        if self.standardizer is not None:
            arrays.append(("std_mean", self.standardizer.mean))
            arrays.append(("std_std", self.standardizer.std))
        header["params"], clf_arrays = _classifier_sections(self.classifier)
        arrays.extend(clf_arrays)
        arrays.extend(
            (f"ext_conv{i:02d}", layer) for i, layer in enumerate(self.weights.layers)
        )
        return encode_container(MODEL_MAGIC, header, arrays)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedAuthenticator":
        header, sections = decode_container(data, MODEL_MAGIC)
        if header.get("format") != "dpan-model-v1":
            raise ValueError("not a dpan model container")
        labels = [str(v) for v in header["labels"]]
        kind = ClassifierKind(header["kind"])
        width_scale = float(header["width_scale"])
        plan = feat.layer_plan(width_scale)
        layers = []
        for i, (cin, cout) in enumerate(plan):
            arr = sections[f"ext_conv{i:02d}"]
            if arr.shape != (3, 3, cin, cout):
                raise ValueError(f"extractor layer {i} has shape {arr.shape}")
            layers.append(arr)
        weights = feat.WeightSet(width_scale, header.get("weight_seed"), layers)
        standardizer = None
        if "std_mean" in sections:
            standardizer = Standardizer(
                mean=np.asarray(sections["std_mean"], dtype=np.float64),
                std=np.asarray(sections["std_std"], dtype=np.float64),
            )
        classifier = _classifier_from_sections(kind, labels, header.get("params", {}), sections)
        threshold = header.get("threshold")
        return cls(
            weights=weights,
            standardizer=standardizer,
            classifier=classifier,
            labels=labels,
            threshold=float(threshold) if threshold is not None else None,
            provenance=header.get("provenance", {}),
        )

    @classmethod
    def load(cls, path) -> "TrainedAuthenticator":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def quantized(self) -> "TrainedAuthenticator":
        """Round trip through the float32 container so tuned thresholds match
        exactly what a reloaded model will produce."""
        return TrainedAuthenticator.from_bytes(self.to_bytes())


def _pack_trees(prefix: str, trees: list[Tree]) -> list[tuple[str, np.ndarray]]:
    fields = ["feature", "threshold", "left", "right", "value"]
    per_tree = [tree_to_arrays(t) for t in trees]
    out = [(f"{prefix}_node_counts", np.array([t.n_nodes for t in trees], dtype=np.float64))]
    for name in fields:
        out.append((f"{prefix}_{name}", np.concatenate([p[name] for p in per_tree])))
    return out


def _unpack_trees(prefix: str, sections: dict) -> list[Tree]:
    counts = np.asarray(sections[f"{prefix}_node_counts"], dtype=np.float64).astype(int)
    bounds = np.concatenate([[0], np.cumsum(counts)])
    trees = []
    for i in range(len(counts)):
        sl = slice(bounds[i], bounds[i + 1])
        trees.append(
            tree_from_arrays(
                {
                    name: sections[f"{prefix}_{name}"][sl]
                    for name in ["feature", "threshold", "left", "right", "value"]
                }
            )
        )
    return trees


def _classifier_sections(model: clf.ClassifierModel):
    if isinstance(model, clf.LRModel):
        return {}, [("clf_weights", model.weights)]
    if isinstance(model, clf.SVMModel):
        return {}, [("clf_weights", model.weights), ("clf_bias", model.bias)]
    if isinstance(model, clf.KNNModel):
        return {"k": model.k}, [
            ("clf_x", model.X),
            ("clf_y", model.y.astype(np.float64)),
        ]
    if isinstance(model, clf.DTModel):
        return {"n_features": model.n_features}, _pack_trees("clf_tree", [model.tree])
    if isinstance(model, clf.RFModel):
        return (
            {"n_features": model.n_features, "tree_seeds": model.tree_seeds},
            _pack_trees("clf_tree", model.trees),
        )
    if isinstance(model, clf.GBTModel):
        flat = [t for round_trees in model.class_trees for t in round_trees]
        return (
            {
                "n_features": model.n_features,
                "learning_rate": model.learning_rate,
                "n_classes": len(model.labels),
            },
            _pack_trees("clf_tree", flat),
        )
    raise ValueError(f"cannot serialize classifier {type(model).__name__}")


def _classifier_from_sections(kind, labels, params, sections):
    if kind is ClassifierKind.LR:
        return clf.LRModel(kind, labels, weights=np.asarray(sections["clf_weights"], dtype=np.float64))
    if kind is ClassifierKind.SVM:
        return clf.SVMModel(
            kind,
            labels,
            weights=np.asarray(sections["clf_weights"], dtype=np.float64),
            bias=np.asarray(sections["clf_bias"], dtype=np.float64),
        )
    if kind is ClassifierKind.KNN:
        return clf.KNNModel(
            kind,
            labels,
            X=np.asarray(sections["clf_x"], dtype=np.float64),
            y=np.asarray(sections["clf_y"], dtype=np.float64).astype(np.int64),
            k=int(params["k"]),
        )
    if kind is ClassifierKind.DT:
        return clf.DTModel(
            kind, labels, tree=_unpack_trees("clf_tree", sections)[0],
            n_features=int(params["n_features"]),
        )
    if kind is ClassifierKind.RF:
        return clf.RFModel(
            kind,
            labels,
            trees=_unpack_trees("clf_tree", sections),
            tree_seeds=[int(s) for s in params.get("tree_seeds", [])],
            n_features=int(params["n_features"]),
        )
    if kind is ClassifierKind.GBT:
        flat = _unpack_trees("clf_tree", sections)
        n_classes = int(params["n_classes"])
        rounds = [flat[i : i + n_classes] for i in range(0, len(flat), n_classes)]
        return clf.GBTModel(
            kind,
            labels,
            class_trees=rounds,
            learning_rate=float(params["learning_rate"]),
            n_features=int(params["n_features"]),
        )
    raise ValueError(f"cannot deserialize classifier kind {kind}")


# ---------------------------------------------------------------------------
# threshold tuning


def tune_threshold(
    model: TrainedAuthenticator,
    legit: list[imgen.Phenotype],
    legit_labels: list[str],
    adversaries: list[imgen.Phenotype],
    legit_features: np.ndarray | None = None,
    adversary_features: np.ndarray | None = None,
) -> ThresholdResult:
    """Smallest threshold with zero false positives on the tuning sets.

    Precomputed *standardized* feature matrices may be passed to skip
    re-extraction.
    """
    if model.kind is ClassifierKind.DT:
        raise NoConfidenceError("decision trees give no confidence; cannot tune")
    if not legit or not adversaries:
        raise ValueError("tuning needs non-empty legitimate and adversary sets")

    if legit_features is None:
        legit_features = np.stack([model.feature_vector(p) for p in legit])
    if adversary_features is None:
        adversary_features = np.stack([model.feature_vector(p) for p in adversaries])

    legit_preds = [clf.predict(model.classifier, x) for x in legit_features]
    adv_confs = [
        clf.predict(model.classifier, x).confidence for x in adversary_features
    ]
    wrong_confs = [
        p.confidence for p, t in zip(legit_preds, legit_labels) if p.label != str(t)
    ]
    worst = max(adv_confs + wrong_confs)
    threshold = worst + THRESHOLD_EPSILON
    clamped = threshold > 1.0
    if clamped:
        threshold = 1.0
        warnings.warn(
            "an adversary reached full confidence; threshold clamped to 1.0 "
            "(everything below certainty will be rejected)",
            stacklevel=2,
        )
    correct_confs = [
        p.confidence for p, t in zip(legit_preds, legit_labels) if p.label == str(t)
    ]
    fn = (
        float(np.mean([c < threshold for c in correct_confs])) if correct_confs else 0.0
    )
    return ThresholdResult(
        threshold=float(threshold),
        tuning_fn_rate=fn,
        max_adversary_confidence=float(max(adv_confs)),
        n_misclassified=len(wrong_confs),
        clamped=clamped,
    )


# ---------------------------------------------------------------------------
# end-to-end enrollment


@dataclass
class TrainOptions:
    width_scale: float = 0.125
    weight_path: str | None = None
    test_fraction: float = 0.2
    val_fraction: float = 0.25
    search_budget: int | None = 8
    hyperparams: dict | None = None
    adversary_count: int = 100
    cv_folds: int = 5


def derive_seeds(seed: int) -> dict[str, int]:
    rng = np.random.default_rng(seed)
    names = ["split", "weights", "folds", "search", "fit", "val", "adversary"]
    return {name: int(rng.integers(0, 2**63)) for name in names}


def train_dpan(
    manifest: DatasetManifest,
    kind: ClassifierKind,
    options: TrainOptions | None = None,
    seed: int = 0,
) -> TrainedAuthenticator:
    """Full enrollment: split, extract, search, fit, tune, package."""
    kind = ClassifierKind(kind)
    opts = options or TrainOptions()
    seeds = derive_seeds(seed)

    labels_all = [r.device_id for r in manifest.records]
    if len(set(labels_all)) < 2:
        raise ValueError("enrollment needs at least 2 device classes")
    ds = split(manifest, opts.test_fraction, seeds["split"], k=opts.cv_folds)

    if opts.weight_path:
        cfg = feat.ExtractorConfig(opts.width_scale, feat.Imported(opts.weight_path))
    else:
        cfg = feat.ExtractorConfig(opts.width_scale, feat.SeededRandom(seeds["weights"]))
    weights = feat.load_weights(cfg)

    phenotypes = [manifest.load_phenotype(r) for r in manifest.records]
    X_all = feat.extract_many(weights, phenotypes)
    y_all = np.asarray(labels_all)

    train_idx = ds.train_indices
    X_train, y_train = X_all[train_idx], y_all[train_idx]

    # carve a validation partition out of the training split for tuning
    fit_pos, val_pos = make_stratified_split(
        y_train, opts.val_fraction, seeds["val"]
    )
    X_fit, y_fit = X_train[fit_pos], y_train[fit_pos]
    X_val, y_val = X_train[val_pos], y_train[val_pos]

    standardizer = None
    X_fit_t, X_val_t = X_fit, X_val
    if kind in clf.NEEDS_STANDARDIZATION:
        standardizer = Standardizer.fit(X_fit)
        X_fit_t = standardizer.transform(X_fit)
        X_val_t = standardizer.transform(X_val)

    if opts.hyperparams is not None:
        hyperparams = dict(opts.hyperparams)
        searched = False
    elif opts.search_budget:
        # some default grids are smaller than the default budget
        budget = min(opts.search_budget, len(enumerate_grid(DEFAULT_GRIDS[kind])))
        hyperparams = random_search(
            kind, DEFAULT_GRIDS[kind], budget, X_fit, y_fit,
            seed=seeds["search"], k=opts.cv_folds,
        )
        searched = True
    else:
        hyperparams = dict(clf.DEFAULT_HYPERPARAMS[kind])
        searched = False

    cv_mean, cv_std = cross_validate(
        kind, hyperparams, X_fit, y_fit, k=opts.cv_folds, seed=seeds["folds"]
    )
    classifier = clf.fit(kind, hyperparams, X_fit_t, y_fit, seed=seeds["fit"])

    provenance = {
        "tool": "dpan",
        "version": "0.1.0",
        "seed": int(seed),
        "sub_seeds": seeds,
        "manifest_sha256": None,
        "options": {
            "width_scale": opts.width_scale,
            "test_fraction": opts.test_fraction,
            "val_fraction": opts.val_fraction,
            "search_budget": opts.search_budget if searched else None,
            "adversary_count": opts.adversary_count,
            "cv_folds": opts.cv_folds,
        },  # cmd_tune recomputes the val partition from these

        "hyperparams": {k: v for k, v in sorted(hyperparams.items())},
        "cv_mean_accuracy": cv_mean,
        "cv_std": cv_std,
    }
    manifest_file = manifest.root / "manifest.json"
    if manifest_file.exists():
        provenance["manifest_sha256"] = DatasetManifest.sha256(manifest_file)

    model = TrainedAuthenticator(
        weights=weights,
        standardizer=standardizer,
        classifier=classifier,
        labels=list(classifier.labels),
        threshold=None,
        provenance=provenance,
    )
    model = model.quantized()  # tune against exactly what reloading will see

    if kind is not ClassifierKind.DT:
        adversaries = gen_adversary(opts.adversary_count, seeds["adversary"])
        val_phen = [phenotypes[train_idx[i]] for i in val_pos]
        tune = tune_threshold(model, val_phen, list(y_val), adversaries)
        model.threshold = tune.threshold
        model.provenance["tuning"] = {
            "threshold": tune.threshold,
            "fn_rate": tune.tuning_fn_rate,
            "max_adversary_confidence": tune.max_adversary_confidence,
            "n_misclassified": tune.n_misclassified,
            "clamped": tune.clamped,
        }
    else:
        model.provenance["tuning"] = None

    return model


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    kind: str
    labels: list[str]
    accuracy: float
    macro_f1: float
    confusion: list[list[int]]  # rows true, cols predicted
    cv_mean: float | None
    cv_std: float | None
    mean_correct_confidence: float | None
    mean_incorrect_confidence: float | None
    max_adversary_confidence: float | None
    fn_rate: float | None
    fp_rate: float | None
    threshold: float | None

    def to_dict(self) -> dict:
        return dict(vars(self))

    def format_table(self) -> str:
        def fmt(v, pct=False):
            if v is None:
                return "-"
            return f"{100 * v:.1f}" if pct else f"{v:.3f}"

        fnfp = "-"
        if self.fn_rate is not None and self.fp_rate is not None:
            fnfp = f"{100 * self.fn_rate:.1f}--{100 * self.fp_rate:g}"
        columns = [
            ("Accuracy", fmt(self.accuracy)),
            ("F1 Score", fmt(self.macro_f1)),
            ("CV Mean Accuracy", fmt(self.cv_mean)),
            ("CV Standard Deviation", fmt(self.cv_std)),
            ("Mean Correct Confidence", fmt(self.mean_correct_confidence)),
            ("Mean Incorrect Confidence", fmt(self.mean_incorrect_confidence)),
            ("Max Adversary Confidence", fmt(self.max_adversary_confidence)),
            ("FN--FP (%)", fnfp),
        ]
        widths = [max(len(h), len(v)) for h, v in columns]
        head = "  ".join(h.ljust(w) for (h, _), w in zip(columns, widths))
        vals = "  ".join(v.ljust(w) for (_, v), w in zip(columns, widths))
        lines = [head, "-" * len(head), vals, ""]
        lines.append("Confusion matrix (rows true, cols predicted):")
        lw = max(len(l) for l in self.labels)
        cw = max(5, lw)
        lines.append(" " * (lw + 2) + " ".join(l.rjust(cw) for l in self.labels))
        for lab, row in zip(self.labels, self.confusion):
            lines.append(lab.ljust(lw + 2) + " ".join(str(v).rjust(cw) for v in row))
        return "\n".join(lines)


def macro_f1_score(confusion: np.ndarray) -> float:
    f1s = []
    for c in range(len(confusion)):
        tp = confusion[c, c]
        fp = confusion[:, c].sum() - tp
        fn = confusion[c].sum() - tp
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(f1s))


def evaluate(
    model: TrainedAuthenticator,
    phenotypes: list[imgen.Phenotype],
    labels: list[str],
    adversaries: list[imgen.Phenotype] | None = None,
) -> EvalReport:
    """Score a model on a labeled test set plus optional adversary images."""
    if not phenotypes:
        raise ValueError("evaluation needs a non-empty test set")
    labels = [str(v) for v in labels]
    preds = model.predict_many(phenotypes)
    lab_index = {lab: i for i, lab in enumerate(model.labels)}
    cm = np.zeros((len(model.labels), len(model.labels)), dtype=np.int64)
    for p, t in zip(preds, labels):
        cm[lab_index[t], lab_index[p.label]] += 1
    accuracy = float(np.trace(cm) / cm.sum())

    has_conf = model.kind is not ClassifierKind.DT
    correct = [p.confidence for p, t in zip(preds, labels) if p.label == t]
    wrong = [p.confidence for p, t in zip(preds, labels) if p.label != t]
    adv_confs = []
    if adversaries:
        adv_confs = [p.confidence for p in model.predict_many(adversaries)]

    fn_rate = fp_rate = None
    if has_conf and model.threshold is not None:
        rejected = [
            p.label != t or p.confidence < model.threshold
            for p, t in zip(preds, labels)
        ]
        fn_rate = float(np.mean(rejected))
        if adv_confs:
            fp_rate = float(np.mean([c >= model.threshold for c in adv_confs]))

    return EvalReport(
        kind=model.kind.value,
        labels=list(model.labels),
        accuracy=accuracy,
        macro_f1=macro_f1_score(cm),
        confusion=cm.tolist(),
        cv_mean=model.provenance.get("cv_mean_accuracy"),
        cv_std=model.provenance.get("cv_std"),
        mean_correct_confidence=float(np.mean(correct)) if has_conf and correct else None,
        mean_incorrect_confidence=float(np.mean(wrong)) if has_conf and wrong else None,
        max_adversary_confidence=float(max(adv_confs)) if has_conf and adv_confs else None,
        fn_rate=fn_rate,
        fp_rate=fp_rate,
        threshold=model.threshold,
    )


def centroid_oracle(
    train_phenotypes: list[imgen.Phenotype],
    train_labels: list[str],
    test_phenotypes: list[imgen.Phenotype],
    test_labels: list[str],
) -> float:
    """Nearest class-mean in raw pixel space: the brute-force baseline."""
    if not train_phenotypes or not test_phenotypes:
        raise ValueError("oracle needs non-empty train and test sets")
    train_labels = [str(v) for v in train_labels]
    classes = sorted(set(train_labels))
    Xtr = np.stack([p.pixels.astype(np.float64).ravel() for p in train_phenotypes])
    centroids = np.stack(
        [Xtr[[i for i, t in enumerate(train_labels) if t == c]].mean(axis=0) for c in classes]
    )
    correct = 0
    for p, t in zip(test_phenotypes, test_labels):
        x = p.pixels.astype(np.float64).ravel()
        d2 = ((centroids - x) ** 2).sum(axis=1)
        if classes[int(d2.argmin())] == str(t):
            correct += 1
    return correct / len(test_phenotypes)
