"""Supervised segmentation from human-labeled pixels.

A labeled pixel expands into the 36 intensities of the 6x6 patch whose
top-left corner sits at (x-2, y-2), clamped to the slice by edge
replication and flattened row-major (y rows, x columns). Training and
whole-volume classification share this geometry exactly.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from sklearn.tree import DecisionTreeClassifier

from .errors import (
    ConditioningError,
    CoordinateError,
    EmptyRegionError,
    ParameterError,
    UndefinedRocError,
)
from .volume import LabelVolume, VoxelVolume

PATCH_SIDE = 6
PATCH_OFFSET = 2  # labeled pixel sits at patch index (2, 2)
N_FEATURES = PATCH_SIDE * PATCH_SIDE


@dataclass(frozen=True)
class TrainingRow:
    class_id: int
    feature_name: str
    x: int
    y: int
    slice: int


@dataclass(frozen=True)
class TrainingTable:
    rows: tuple[TrainingRow, ...]

    def __post_init__(self):
        if not self.rows:
            raise ParameterError("training table needs at least one row")
        for i, r in enumerate(self.rows):
            if r.class_id < 1:
                raise ParameterError(f"row {i}: class_id must be >= 1, got {r.class_id}")

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(sorted({r.class_id for r in self.rows}))

    def validate_against(self, vol: VoxelVolume) -> None:
        for i, r in enumerate(self.rows):
            if not (0 <= r.x < vol.nx and 0 <= r.y < vol.ny):
                raise CoordinateError(
                    f"row {i} (class {r.class_id}, {r.feature_name!r}): "
                    f"coordinate ({r.x},{r.y}) outside slice ({vol.nx}x{vol.ny})"
                )
            if not (0 <= r.slice < vol.nz):
                raise CoordinateError(
                    f"row {i} (class {r.class_id}, {r.feature_name!r}): "
                    f"slice {r.slice} outside stack (nz={vol.nz})"
                )

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "feature", "x", "y", "slice"])
            for r in self.rows:
                w.writerow([r.class_id, r.feature_name, r.x, r.y, r.slice])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> "TrainingTable":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    TrainingRow(
                        class_id=int(rec["class"]),
                        feature_name=rec["feature"],
                        x=int(rec["x"]),
                        y=int(rec["y"]),
                        slice=int(rec["slice"]),
                    )
                )
        return cls(rows=tuple(rows))


@dataclass(frozen=True)
class FeatureMatrix:
    X: np.ndarray  # (n_samples, 36) float64
    y: np.ndarray  # (n_samples,) int class ids
    provenance: tuple[tuple[int, int, int], ...]  # (x, y, slice) per sample

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != N_FEATURES:
            raise ParameterError(f"feature matrix must be (n, {N_FEATURES}), got {self.X.shape}")
        if len(self.y) != len(self.X):
            raise ParameterError("labels length must match sample count")


def patch_vector(vol: VoxelVolume, x: int, y: int, slice_index: int) -> np.ndarray:
    """One 36-value patch read with clamped (edge-replicated) indexing."""
    ys = np.clip(np.arange(y - PATCH_OFFSET, y - PATCH_OFFSET + PATCH_SIDE), 0, vol.ny - 1)
    xs = np.clip(np.arange(x - PATCH_OFFSET, x - PATCH_OFFSET + PATCH_SIDE), 0, vol.nx - 1)
    return vol.data[slice_index][np.ix_(ys, xs)].astype(np.float64).ravel()


def extract_features(vol: VoxelVolume, table: TrainingTable) -> FeatureMatrix:
    """Expand each table row into its labeled 36-value patch vector."""
    table.validate_against(vol)
    X = np.empty((len(table.rows), N_FEATURES), dtype=np.float64)
    y = np.empty(len(table.rows), dtype=np.int64)
    prov = []
    for i, r in enumerate(table.rows):
        X[i] = patch_vector(vol, r.x, r.y, r.slice)
        y[i] = r.class_id
        prov.append((r.x, r.y, r.slice))
    return FeatureMatrix(X=X, y=y, provenance=tuple(prov))


def _slice_patches(slice2d: np.ndarray) -> np.ndarray:
    """(ny, nx, 36) patch vectors for every pixel of a slice."""
    pad = np.pad(
        slice2d,
        ((PATCH_OFFSET, PATCH_SIDE - 1 - PATCH_OFFSET), (PATCH_OFFSET, PATCH_SIDE - 1 - PATCH_OFFSET)),
        mode="edge",
    )
    win = np.lib.stride_tricks.sliding_window_view(pad, (PATCH_SIDE, PATCH_SIDE))
    return win.reshape(slice2d.shape[0], slice2d.shape[1], N_FEATURES).astype(np.float64)


def _rbf(a: np.ndarray, b: np.ndarray, sigma2: float) -> np.ndarray:
    d2 = (
        (a * a).sum(axis=1)[:, None]
        - 2.0 * (a @ b.T)
        + (b * b).sum(axis=1)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-d2 / sigma2)


@dataclass(frozen=True)
class _PairMachine:
    pos: int  # class mapped to +1
    neg: int  # class mapped to -1
    idx: np.ndarray  # indices into the training set
    alphas: np.ndarray
    bias: float
    residual: float


@dataclass(frozen=True)
class LssvmModel:
    """One-vs-one least-squares SVM with an RBF (or linear) kernel."""

    X: np.ndarray  # standardized training features
    classes: tuple[int, ...]
    machines: tuple[_PairMachine, ...]
    gamma: float
    sigma2: float
    kernel: str
    feat_mean: np.ndarray
    feat_scale: np.ndarray

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if self.kernel == "linear":
            return a @ b.T
        return _rbf(a, b, self.sigma2)

    def decision_values(self, X: np.ndarray) -> np.ndarray:
        """(n, n_machines) decision values b + sum_i alpha_i k(x_i, x)."""
        Xs = (X - self.feat_mean) / self.feat_scale
        out = np.empty((len(Xs), len(self.machines)), dtype=np.float64)
        for j, m in enumerate(self.machines):
            K = self._kernel(Xs, self.X[m.idx])
            out[:, j] = K @ m.alphas + m.bias
        return out

    def predict(self, X: np.ndarray) -> np.ndarray:
        dec = self.decision_values(X)
        n = len(X)
        votes = np.zeros((n, len(self.classes)), dtype=np.int64)
        margins = np.zeros((n, len(self.classes)), dtype=np.float64)
        cls_index = {c: i for i, c in enumerate(self.classes)}
        for j, m in enumerate(self.machines):
            pos, neg = cls_index[m.pos], cls_index[m.neg]
            d = dec[:, j]
            win_pos = d > 0
            votes[win_pos, pos] += 1
            votes[~win_pos, neg] += 1
            margins[:, pos] += d
            margins[:, neg] -= d
        # majority vote; ties broken toward the larger summed margin
        best = np.zeros(n, dtype=np.int64)
        top = votes.max(axis=1)
        for i in range(n):
            tied = np.flatnonzero(votes[i] == top[i])
            best[i] = tied[np.argmax(margins[i, tied])] if len(tied) > 1 else tied[0]
        return np.asarray(self.classes)[best]


def train_lssvm(
    f: FeatureMatrix,
    gamma: float = 1.0,
    sigma2: float = 1000.0,
    kernel: str = "rbf",
    standardize: bool = True,
) -> LssvmModel:
    """Solve one LSSVM linear system per class pair.

    Each binary machine solves [0 1^T; 1 Omega + I/gamma][b; alpha] = [0; y]
    with Omega_ij = y_i y_j k(x_i, x_j) and y in {-1, +1}; the stored
    relative residual of that solve must stay tiny for the model to be
    trusted.
    """
    if not gamma > 0 or not sigma2 > 0:
        raise ParameterError(f"gamma and sigma2 must be > 0, got {gamma}, {sigma2}")
    if kernel not in ("rbf", "linear"):
        raise ParameterError(f"kernel must be 'rbf' or 'linear', got {kernel!r}")
    classes = tuple(sorted(set(int(c) for c in f.y)))
    if len(classes) < 2:
        raise ParameterError("need at least 2 classes to train")
    for c in classes:
        if int((f.y == c).sum()) < 2:
            raise ParameterError(f"class {c} has fewer than 2 samples")
    if standardize:
        mean = f.X.mean(axis=0)
        scale = f.X.std(axis=0)
        scale[scale == 0.0] = 1.0
    else:
        mean = np.zeros(f.X.shape[1])
        scale = np.ones(f.X.shape[1])
    Xs = (f.X - mean) / scale
    machines = []
    for ai in range(len(classes)):
        for bi in range(ai + 1, len(classes)):
            pos, neg = classes[ai], classes[bi]
            idx = np.flatnonzero((f.y == pos) | (f.y == neg))
            y = np.where(f.y[idx] == pos, 1.0, -1.0)
            Xp = Xs[idx]
            K = Xp @ Xp.T if kernel == "linear" else _rbf(Xp, Xp, sigma2)
            n = len(idx)
            A = np.zeros((n + 1, n + 1))
            A[0, 1:] = 1.0
            A[1:, 0] = 1.0
            A[1:, 1:] = np.outer(y, y) * K + np.eye(n) / gamma
            rhs = np.concatenate(([0.0], y))
            try:
                sol = np.linalg.solve(A, rhs)
            except np.linalg.LinAlgError as exc:
                raise ConditioningError(
                    f"LSSVM system for classes ({pos},{neg}) is singular; "
                    f"try a larger 1/gamma (smaller gamma={gamma})"
                ) from exc
            residual = float(
                np.linalg.norm(A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
            )
            if not np.isfinite(sol).all() or residual > 1e-6:
                raise ConditioningError(
                    f"LSSVM system for classes ({pos},{neg}) is ill-conditioned "
                    f"(relative residual {residual:.2e}); try a larger 1/gamma"
                )
            machines.append(
                _PairMachine(
                    pos=pos, neg=neg, idx=idx, alphas=sol[1:], bias=float(sol[0]),
                    residual=residual,
                )
            )
    return LssvmModel(
        X=Xs,
        classes=classes,
        machines=tuple(machines),
        gamma=gamma,
        sigma2=sigma2,
        kernel=kernel,
        feat_mean=mean,
        feat_scale=scale,
    )


@dataclass(frozen=True)
class EnsembleModel:
    method: str  # bagging | adaboost
    learners: tuple[DecisionTreeClassifier, ...]
    weights: np.ndarray  # per-learner weights (all 1.0 for bagging)
    classes: tuple[int, ...]
    n_learners: int
    max_depth: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        scores = np.zeros((len(X), len(self.classes)), dtype=np.float64)
        cls_index = {c: i for i, c in enumerate(self.classes)}
        for w, tree in zip(self.weights, self.learners):
            pred = tree.predict(X)
            for c in self.classes:
                scores[pred == c, cls_index[c]] += w
        # ties resolve to the smallest class id (argmax over ascending classes)
        return np.asarray(self.classes)[np.argmax(scores, axis=1)]


def train_ensemble(
    f: FeatureMatrix,
    method: str = "bagging",
    n_learners: int = 50,
    max_depth: int = 3,
    seed: int = 42,
) -> EnsembleModel:
    """Bagging (bootstrap majority vote) or SAMME-style multiclass adaboost.

    Bootstrap samples match the training size. Adaboost learner weight is
    log((1-e)/e) + log(K-1); a round at or beyond chance error (1 - 1/K)
    stops training.
    """
    if method not in ("bagging", "adaboost"):
        raise ParameterError(f"method must be 'bagging' or 'adaboost', got {method!r}")
    if n_learners < 1:
        raise ParameterError(f"n_learners must be >= 1, got {n_learners}")
    classes = tuple(sorted(set(int(c) for c in f.y)))
    if len(classes) < 2:
        raise ParameterError("ensemble training needs at least 2 classes")
    n = len(f.y)
    rng = np.random.default_rng(seed)
    learners: list[DecisionTreeClassifier] = []
    weights: list[float] = []
    if method == "bagging":
        for t in range(n_learners):
            idx = rng.integers(0, n, size=n)
            tree = DecisionTreeClassifier(max_depth=max_depth, random_state=seed + t)
            tree.fit(f.X[idx], f.y[idx])
            learners.append(tree)
            weights.append(1.0)
    else:
        k = len(classes)
        w = np.full(n, 1.0 / n)
        for t in range(n_learners):
            tree = DecisionTreeClassifier(max_depth=max_depth, random_state=seed + t)
            tree.fit(f.X, f.y, sample_weight=w)
            pred = tree.predict(f.X)
            wrong = pred != f.y
            eps = float(w[wrong].sum() / w.sum())
            if eps >= 1.0 - 1.0 / k:
                break  # learner no better than chance; stop accepting rounds
            if eps <= 0.0:
                learners.append(tree)
                weights.append(np.log((1.0 - 1e-10) / 1e-10) + np.log(k - 1.0))
                break  # perfect learner dominates; further rounds are no-ops
            alpha = float(np.log((1.0 - eps) / eps) + np.log(k - 1.0))
            learners.append(tree)
            weights.append(alpha)
            w = w * np.exp(alpha * wrong)
            w /= w.sum()
        if not learners:
            raise ParameterError(
                "adaboost base learner is no better than chance on this data"
            )
    return EnsembleModel(
        method=method,
        learners=tuple(learners),
        weights=np.asarray(weights),
        classes=classes,
        n_learners=len(learners),
        max_depth=max_depth,
    )


def classify_volume(
    model: LssvmModel | EnsembleModel,
    vol: VoxelVolume,
    progress: Callable[[float], None] | None = None,
    cancelled: Callable[[], bool] | None = None,
) -> LabelVolume:
    """Classify every voxel from its own 36-value patch, slice by slice."""
    out = np.zeros(vol.shape, dtype=np.uint8)
    for z in range(vol.nz):
        if cancelled and cancelled():
            break
        feats = _slice_patches(vol.data[z]).reshape(-1, N_FEATURES)
        out[z] = model.predict(feats).reshape(vol.ny, vol.nx).astype(np.uint8)
        if progress:
            progress((z + 1) / vol.nz)
    return LabelVolume(labels=out, k=int(max(model.classes)), voxel_size=vol.voxel_size)


@dataclass(frozen=True)
class CrossValResult:
    fold_accuracies: tuple[float, ...]
    mean: float
    std: float
    fold_assignment: tuple[int, ...]  # test-fold index per sample


def cross_validate(
    f: FeatureMatrix,
    folds: int = 10,
    trainer: Callable[[FeatureMatrix], object] | None = None,
    seed: int = 0,
) -> CrossValResult:
    """Seeded stratified k-fold accuracy for any trainer recipe.

    The trainer takes a FeatureMatrix and returns an object with
    predict(X); it defaults to LSSVM with library defaults.
    """
    n = len(f.y)
    if folds < 2:
        raise ParameterError(f"folds must be >= 2, got {folds}")
    if folds > n:
        raise ParameterError(f"folds={folds} exceeds sample count {n}")
    if trainer is None:
        trainer = lambda fm: train_lssvm(fm)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(n, dtype=np.int64)
    offset = 0  # rotate the round-robin start so remainders spread evenly
    for c in np.unique(f.y):
        idx = np.flatnonzero(f.y == c)
        rng.shuffle(idx)
        fold_of[idx] = (np.arange(len(idx)) + offset) % folds
        offset = (offset + len(idx)) % folds
    accs = []
    for k in range(folds):
        test = fold_of == k
        train = ~test
        sub = FeatureMatrix(
            X=f.X[train],
            y=f.y[train],
            provenance=tuple(p for p, t in zip(f.provenance, train) if t),
        )
        model = trainer(sub)
        pred = model.predict(f.X[test])
        accs.append(float(np.mean(pred == f.y[test])))
    accs_arr = np.asarray(accs)
    return CrossValResult(
        fold_accuracies=tuple(accs),
        mean=float(accs_arr.mean()),
        std=float(accs_arr.std()),
        fold_assignment=tuple(int(v) for v in fold_of),
    )


def roc_curve(scores: Sequence[float], labels: Sequence[int]):
    """Threshold sweep over unique scores; returns (fpr, tpr, auc).

    Labels are binary (0/1 or bool); AUC by the trapezoid rule.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if len(s) != len(y):
        raise ParameterError("scores and labels must have equal length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRocError("ROC needs both positive and negative labels")
    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    tps = np.cumsum(y_sorted)
    fps = np.cumsum(~y_sorted)
    # keep only the last point of each tied-score run
    keep = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tpr = np.r_[0.0, tps[keep] / n_pos]
    fpr = np.r_[0.0, fps[keep] / n_neg]
    auc = float(np.trapezoid(tpr, fpr))
    return fpr, tpr, auc


def segmentation_entropy(labels: LabelVolume) -> float:
    """Shannon entropy (bits) of class proportions over unmasked voxels."""
    lab = labels.labels[labels.labels > 0]
    if lab.size == 0:
        raise EmptyRegionError("entropy undefined: every voxel is masked")
    counts = np.bincount(lab.ravel())
    p = counts[counts > 0] / lab.size
    return float(-(p * np.log2(p)).sum())


MODEL_FORMAT = "tomoseg-model"
MODEL_VERSION = 1


def save_model(model: LssvmModel | EnsembleModel, path: str | os.PathLike) -> None:
    """Persist a trained model as a self-describing versioned blob.

    The envelope records format, version, and model kind so a loader can
    refuse anything it does not understand. Only load blobs you wrote
    yourself: the payload is a pickle.
    """
    import pickle

    kind = "lssvm" if isinstance(model, LssvmModel) else "ensemble"
    blob = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": kind,
        "payload": model,
    }
    with open(path, "wb") as fh:
        pickle.dump(blob, fh)


def load_model(path: str | os.PathLike) -> LssvmModel | EnsembleModel:
    import pickle

    with open(path, "rb") as fh:
        blob = pickle.load(fh)
    if not isinstance(blob, dict) or blob.get("format") != MODEL_FORMAT:
        raise ParameterError(f"{path}: not a saved model blob")
    if blob.get("version") != MODEL_VERSION:
        raise ParameterError(
            f"{path}: model version {blob.get('version')} unsupported "
            f"(expected {MODEL_VERSION})"
        )
    return blob["payload"]
