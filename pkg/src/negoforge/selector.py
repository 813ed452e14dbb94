"""Per-setting strategy selection: fitting, baselines, and scoring.

The selector maps a setting feature vector to a portfolio index. Fitting
searches three method families (nearest-neighbour, random-forest
classification, per-strategy regression with argmax) under seeded
cross-validation, scoring candidates by the utility of their selections on
held-out settings. The returned model always carries the first portfolio
strategy as a fallback and is guaranteed to score at least as well as that
strategy on the training matrix.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np
from sklearn.ensemble import RandomForestClassifier, RandomForestRegressor
from sklearn.neighbors import KNeighborsClassifier

from .features import SettingFeatures
from .portfolio import PerformanceMatrix, Portfolio


class MissingFeaturesError(ValueError):
    def __init__(self, setting_ids: list[str]):
        super().__init__(f"no features for settings: {', '.join(setting_ids[:5])}")
        self.setting_ids = setting_ids


@dataclass(frozen=True)
class SelectorSearchSpec:
    """Candidate methods, hyperparameter grids, and the CV protocol."""

    folds: int = 5
    methods: tuple[str, ...] = (
        "nearest-neighbor",
        "random-forest-classifier",
        "per-strategy-regression",
    )
    knn_neighbors: tuple[int, ...] = (1, 3, 5, 7)
    forest_sizes: tuple[int, ...] = (25, 50, 100)
    max_candidates: int | None = None  # tuning budget

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("cross-validation needs at least 2 folds")

    def candidates(self) -> list[tuple[str, dict]]:
        grid: list[tuple[str, dict]] = []
        for method in self.methods:
            if method == "nearest-neighbor":
                grid.extend((method, {"k": k}) for k in self.knn_neighbors)
            elif method == "random-forest-classifier":
                grid.extend((method, {"n_trees": n}) for n in self.forest_sizes)
            elif method == "per-strategy-regression":
                grid.extend((method, {"n_trees": n}) for n in self.forest_sizes)
            else:
                raise ValueError(f"unknown selector method {method!r}")
        if self.max_candidates is not None:
            grid = grid[: self.max_candidates]
        return grid


class _ArgmaxRegression:
    """One regressor per strategy; selection is the argmax of predictions."""

    def __init__(self, n_trees: int, seed: int):
        self.n_trees = n_trees
        self.seed = seed
        self.models: list[RandomForestRegressor] = []

    def fit(self, X: np.ndarray, performance: np.ndarray) -> None:
        self.models = []
        for column in range(performance.shape[1]):
            forest = RandomForestRegressor(
                n_estimators=self.n_trees, random_state=(self.seed + column) % (2**32)
            )
            forest.fit(X, performance[:, column])
            self.models.append(forest)

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        predictions = np.column_stack([m.predict(X) for m in self.models])
        return np.argmax(predictions, axis=1)


@dataclass
class SelectorModel:
    """Fitted mapping from setting features to a portfolio index.

    Reconstructs its predictor from stored training data, so the JSON form
    is self-describing and refits identically on load.
    """

    method: str  # "constant" or a SelectorSearchSpec method
    hyperparameters: dict
    portfolio_size: int
    feature_dim: int
    fallback_index: int = 0
    seed: int = 0
    scaler_mean: np.ndarray | None = None
    scaler_std: np.ndarray | None = None
    train_X: np.ndarray | None = None
    train_labels: np.ndarray | None = None
    train_performance: np.ndarray | None = None
    _predictor: object = field(default=None, repr=False, compare=False)

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.scaler_mean) / self.scaler_std

    def _ensure_predictor(self):
        if self.method == "constant" or self._predictor is not None:
            return
        X = self._standardize(self.train_X)
        self._predictor = _fit_predictor(
            self.method, self.hyperparameters, X, self.train_labels, self.train_performance, self.seed
        )

    def select(self, features) -> int:
        """Portfolio index for a setting; deterministic. A missing opponent
        block selects the fallback strategy."""
        if isinstance(features, SettingFeatures):
            if features.opponent_missing:
                return self.fallback_index
            features = features.to_vector()
        vector = np.asarray(features, dtype=float)
        if vector.shape != (self.feature_dim,):
            raise ValueError(f"feature vector shape {vector.shape}, expected ({self.feature_dim},)")
        if not np.all(np.isfinite(vector)):
            raise ValueError("feature vector contains non-finite values")
        if self.method == "constant":
            return self.fallback_index
        self._ensure_predictor()
        row = self._standardize(vector[None, :])
        if self.method == "per-strategy-regression":
            return int(self._predictor.predict_index(row)[0])
        return int(self._predictor.predict(row)[0])

    def to_dict(self) -> dict:
        data = {
            "method": self.method,
            "hyperparameters": self.hyperparameters,
            "portfolio_size": self.portfolio_size,
            "feature_dim": self.feature_dim,
            "fallback_index": self.fallback_index,
            "seed": self.seed,
        }
        if self.method != "constant":
            data["standardization"] = {
                "mean": self.scaler_mean.tolist(),
                "std": self.scaler_std.tolist(),
            }
            data["training"] = {
                "X": self.train_X.tolist(),
                "labels": self.train_labels.tolist(),
                "performance": self.train_performance.tolist(),
            }
        return data

    @staticmethod
    def from_dict(raw: dict) -> "SelectorModel":
        model = SelectorModel(
            method=raw["method"],
            hyperparameters=dict(raw.get("hyperparameters", {})),
            portfolio_size=int(raw["portfolio_size"]),
            feature_dim=int(raw["feature_dim"]),
            fallback_index=int(raw.get("fallback_index", 0)),
            seed=int(raw.get("seed", 0)),
        )
        if model.method != "constant":
            model.scaler_mean = np.asarray(raw["standardization"]["mean"], dtype=float)
            model.scaler_std = np.asarray(raw["standardization"]["std"], dtype=float)
            model.train_X = np.asarray(raw["training"]["X"], dtype=float)
            model.train_labels = np.asarray(raw["training"]["labels"], dtype=int)
            model.train_performance = np.asarray(raw["training"]["performance"], dtype=float)
        return model


def _fit_predictor(method, hyperparameters, X, labels, performance, seed):
    if method == "nearest-neighbor":
        predictor = KNeighborsClassifier(n_neighbors=hyperparameters["k"])
        predictor.fit(X, labels)
        return predictor
    if method == "random-forest-classifier":
        predictor = RandomForestClassifier(
            n_estimators=hyperparameters["n_trees"], random_state=seed % (2**32)
        )
        predictor.fit(X, labels)
        return predictor
    if method == "per-strategy-regression":
        predictor = _ArgmaxRegression(hyperparameters["n_trees"], seed)
        predictor.fit(X, performance)
        return predictor
    raise ValueError(f"unknown selector method {method!r}")


def oracle(matrix: PerformanceMatrix, setting_id: str, strategy_ids: list[str] | None = None) -> int:
    """Index of the per-setting best strategy; ties go to the lowest index."""
    column = matrix.column(setting_id, strategy_ids)
    return int(np.argmax(column))


def single_best(
    matrix: PerformanceMatrix,
    strategy_ids: list[str] | None = None,
    setting_ids: list[str] | None = None,
) -> int:
    """Index of the strategy with the best mean over all settings; ties low."""
    strategies = strategy_ids if strategy_ids is not None else matrix.strategy_ids
    settings = setting_ids if setting_ids is not None else matrix.setting_ids
    matrix.require_complete(strategies, settings)
    means = [matrix.strategy_mean(t, settings) for t in strategies]
    return int(np.argmax(means))


def oracle_mean(
    matrix: PerformanceMatrix,
    strategy_ids: list[str] | None = None,
    setting_ids: list[str] | None = None,
) -> float:
    strategies = strategy_ids if strategy_ids is not None else matrix.strategy_ids
    settings = setting_ids if setting_ids is not None else matrix.setting_ids
    return float(np.mean([matrix.column(s, strategies).max() for s in settings]))


def selection_score(
    model: SelectorModel,
    matrix: PerformanceMatrix,
    features: dict[str, np.ndarray],
    strategy_ids: list[str] | None = None,
    setting_ids: list[str] | None = None,
) -> float:
    """Mean utility of the strategies the model picks, looked up in the matrix."""
    strategies = strategy_ids if strategy_ids is not None else matrix.strategy_ids
    settings = setting_ids if setting_ids is not None else matrix.setting_ids
    picks = [model.select(features[s]) for s in settings]
    return float(np.mean([matrix.mean(strategies[p], s) for p, s in zip(picks, settings)]))


def normalized_score(
    model: SelectorModel,
    matrix: PerformanceMatrix,
    features: dict[str, np.ndarray],
    strategy_ids: list[str] | None = None,
    setting_ids: list[str] | None = None,
) -> float:
    """Selector utility rescaled between the single-best baseline (0) and the
    oracle (1); 1.0 when the two coincide."""
    strategies = strategy_ids if strategy_ids is not None else matrix.strategy_ids
    settings = setting_ids if setting_ids is not None else matrix.setting_ids
    matrix.require_complete(strategies, settings)
    best = single_best(matrix, strategies, settings)
    baseline = matrix.strategy_mean(strategies[best], settings)
    upper = oracle_mean(matrix, strategies, settings)
    score = selection_score(model, matrix, features, strategies, settings)
    if upper == baseline:
        return 1.0
    return (score - baseline) / (upper - baseline)


def constant_selector(portfolio_size: int, feature_dim: int) -> SelectorModel:
    return SelectorModel(
        method="constant",
        hyperparameters={},
        portfolio_size=portfolio_size,
        feature_dim=feature_dim,
    )


def fit_selector(
    portfolio: Portfolio,
    matrix: PerformanceMatrix,
    features: dict[str, np.ndarray],
    spec: SelectorSearchSpec,
    seed: int,
) -> SelectorModel:
    """Cross-validated search over the spec's candidates.

    The winning candidate is refit on all settings. If its selections on the
    full training matrix score below the first portfolio strategy, the
    constant fallback model is returned instead, so the training-set score
    can never undercut that strategy.
    """
    strategy_ids = portfolio.ids
    setting_ids = list(matrix.setting_ids)
    matrix.require_complete(strategy_ids, setting_ids)
    missing = [s for s in setting_ids if s not in features]
    if missing:
        raise MissingFeaturesError(missing)

    vectors = {s: np.asarray(features[s], dtype=float) for s in setting_ids}
    feature_dim = len(next(iter(vectors.values())))
    if len(portfolio) == 1 or len(setting_ids) < 2:
        return constant_selector(len(portfolio), feature_dim)

    X = np.stack([vectors[s] for s in setting_ids])
    performance = np.stack([matrix.column(s, strategy_ids) for s in setting_ids])
    labels = np.argmax(performance, axis=1)

    scaler_mean = X.mean(axis=0)
    scaler_std = X.std(axis=0)
    scaler_std[scaler_std == 0.0] = 1.0
    Xz = (X - scaler_mean) / scaler_std

    n = len(setting_ids)
    folds = min(spec.folds, n)
    rng = random.Random(seed)
    order = list(range(n))
    rng.shuffle(order)
    fold_of = {index: position % folds for position, index in enumerate(order)}

    def cv_score(method: str, hyperparameters: dict) -> float:
        total = 0.0
        for fold in range(folds):
            train = [i for i in range(n) if fold_of[i] != fold]
            held = [i for i in range(n) if fold_of[i] == fold]
            if not train or not held:
                return float("-inf")
            if method == "nearest-neighbor" and hyperparameters["k"] > len(train):
                return float("-inf")
            predictor = _fit_predictor(
                method, hyperparameters, Xz[train], labels[train], performance[train], seed
            )
            if method == "per-strategy-regression":
                picks = predictor.predict_index(Xz[held])
            else:
                picks = predictor.predict(Xz[held])
            total += float(np.mean(performance[held, np.asarray(picks, dtype=int)]))
        return total / folds

    best_method, best_hp, best_score = None, None, float("-inf")
    for method, hyperparameters in spec.candidates():
        score = cv_score(method, hyperparameters)
        if score > best_score:
            best_method, best_hp, best_score = method, hyperparameters, score

    if best_method is None:
        return constant_selector(len(portfolio), feature_dim)

    model = SelectorModel(
        method=best_method,
        hyperparameters=best_hp,
        portfolio_size=len(portfolio),
        feature_dim=feature_dim,
        seed=seed,
        scaler_mean=scaler_mean,
        scaler_std=scaler_std,
        train_X=X,
        train_labels=labels,
        train_performance=performance,
    )

    fitted_score = selection_score(model, matrix, vectors, strategy_ids, setting_ids)
    baseline = matrix.strategy_mean(strategy_ids[0], setting_ids)
    if fitted_score < baseline:
        return constant_selector(len(portfolio), feature_dim)
    return model
