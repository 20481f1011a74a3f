"""
Dataset handling for advkern.

This module loads regression datasets from CSV files, standardizes features
with training-split statistics, draws the synthetic one-dimensional targets
used by the rate and noise sweeps, and provides seeded splits and bootstrap
resampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from advkern.core.specs import SyntheticSpec, SyntheticTarget
from advkern.exceptions import ConfigurationError, DataError, DataIOError, DimensionMismatchError
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    """
    Per-feature statistics of a training split.

    Attributes:
        means (np.ndarray): Means of the kept features
        stds (np.ndarray): Standard deviations of the kept features, all > 0
        kept (np.ndarray): Boolean mask over the raw features
        feature_names (Tuple[str, ...]): Names of the raw features
    """
    means: np.ndarray
    stds: np.ndarray
    kept: np.ndarray
    feature_names: Tuple[str, ...]

    def apply(self, X: np.ndarray) -> np.ndarray:
        if X.shape[1] != self.kept.shape[0]:
            raise DimensionMismatchError(
                "Feature count differs from the standardization statistics",
                details={"expected": self.kept.shape[0], "got": X.shape[1]},
            )
        return (X[:, self.kept] - self.means) / self.stds

    @property
    def kept_names(self) -> Tuple[str, ...]:
        return tuple(name for name, keep in zip(self.feature_names, self.kept) if keep)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "feature_names": list(self.feature_names),
            "kept": self.kept.tolist(),
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StandardizationStats":
        try:
            return cls(
                means=np.asarray(data["means"], dtype=float),
                stds=np.asarray(data["stds"], dtype=float),
                kept=np.asarray(data["kept"], dtype=bool),
                feature_names=tuple(data["feature_names"]),
            )
        except KeyError as e:
            raise DataError(f"Standardization data is missing key {e}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    A regression dataset.

    Attributes:
        X (np.ndarray): n x p finite inputs
        y (np.ndarray): n finite targets
        name (str): Dataset name
        feature_names (Tuple[str, ...]): Column names of X
        stats (Optional[StandardizationStats]): Statistics X was standardized with
        f_star (Optional[np.ndarray]): Noise-free target values, for synthetic data
    """
    X: np.ndarray
    y: np.ndarray
    name: str
    feature_names: Tuple[str, ...] = ()
    stats: Optional[StandardizationStats] = None
    f_star: Optional[np.ndarray] = field(default=None)

    def __post_init__(self) -> None:
        if self.X.ndim != 2 or self.y.ndim != 1 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatchError(
                "Dataset shapes are inconsistent",
                details={"X": self.X.shape, "y": self.y.shape},
            )
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise DataError(f"Dataset '{self.name}' contains non-finite values")
        if not self.feature_names:
            object.__setattr__(self, "feature_names", tuple(f"x{i}" for i in range(self.X.shape[1])))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def feature_means(self) -> Optional[np.ndarray]:
        return None if self.stats is None else self.stats.means

    @property
    def feature_stds(self) -> Optional[np.ndarray]:
        return None if self.stats is None else self.stats.stds

    def subset(self, indices: np.ndarray, name: Optional[str] = None) -> "Dataset":
        return replace(
            self,
            X=self.X[indices],
            y=self.y[indices],
            name=name or self.name,
            f_star=None if self.f_star is None else self.f_star[indices],
        )


def _encode_features(features: pd.DataFrame) -> pd.DataFrame:
    categorical = features.select_dtypes(exclude="number").columns.tolist()
    if categorical:
        logger.info(f"One-hot encoding categorical columns: {categorical}")
        features = pd.get_dummies(features, columns=categorical, dtype=float)
    return features


def _read_frame(path: Path, has_header: bool) -> pd.DataFrame:
    if not path.is_file():
        raise DataIOError(f"Data file not found: {path}")
    try:
        frame = pd.read_csv(path, header=0 if has_header else None, skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError, OSError) as e:
        raise DataIOError(f"Failed to parse {path}: {e}")
    frame.columns = [str(c) for c in frame.columns]
    return frame


def load_csv(
    path: Union[str, Path],
    target_column: Union[str, int] = -1,
    has_header: bool = True,
    name: Optional[str] = None,
) -> Dataset:
    """
    Load a regression dataset from a CSV file.

    Rows with missing values are dropped and counted. Non-numeric feature
    columns are one-hot encoded.

    Args:
        path (Union[str, Path]): CSV file
        target_column (Union[str, int]): Target column name, or position (negative counts from the end)
        has_header (bool): Whether the first row holds column names
        name (Optional[str]): Dataset name, defaults to the file stem

    Returns:
        Dataset: Unstandardized dataset

    Raises:
        DataIOError: If the file is missing or cannot be parsed
        DataError: If the target is absent or non-numeric, or nothing is left after cleaning
    """
    path = Path(path)
    frame = _read_frame(path, has_header)
    if isinstance(target_column, int):
        try:
            target = frame.columns[target_column]
        except IndexError:
            raise DataError(f"Target column index {target_column} is out of range", details={"columns": frame.shape[1]})
    else:
        target = str(target_column)
        if target not in frame.columns:
            raise DataError(f"Target column '{target}' not found", details={"columns": list(frame.columns)})

    before = len(frame)
    frame = frame.dropna()
    dropped = before - len(frame)
    if dropped:
        logger.warning(f"Dropped {dropped} rows with missing values from {path.name}")

    try:
        y = pd.to_numeric(frame[target]).to_numpy(dtype=float)
    except (ValueError, TypeError):
        raise DataError(f"Target column '{target}' is not numeric")

    features = _encode_features(frame.drop(columns=[target]))

    if features.shape[0] == 0 or features.shape[1] == 0:
        raise DataError(f"No usable rows or features left in {path}", details={"shape": features.shape})

    dataset = Dataset(
        X=features.to_numpy(dtype=float),
        y=y,
        name=name or path.stem,
        feature_names=tuple(str(c) for c in features.columns),
    )
    logger.info(f"Loaded {dataset.name}: n={dataset.n}, p={dataset.p}")
    return dataset


def load_feature_matrix(
    path: Union[str, Path],
    has_header: bool = True,
    drop_column: Optional[Union[str, int]] = None,
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """
    Load an input matrix without targets, e.g. for prediction.

    Rows with missing values are rejected rather than dropped so output rows
    line up with input rows.

    Args:
        path (Union[str, Path]): CSV file
        has_header (bool): Whether the first row holds column names
        drop_column (Optional[Union[str, int]]): Column to ignore, such as a target present in the file

    Returns:
        Tuple[np.ndarray, Tuple[str, ...]]: Inputs and their column names
    """
    path = Path(path)
    frame = _read_frame(path, has_header)
    if drop_column is not None:
        name = frame.columns[drop_column] if isinstance(drop_column, int) else str(drop_column)
        if name not in frame.columns:
            raise DataError(f"Column '{name}' not found", details={"columns": list(frame.columns)})
        frame = frame.drop(columns=[name])
    if frame.isna().to_numpy().any():
        bad_rows = frame.index[frame.isna().any(axis=1)].tolist()[:10]
        raise DataError(f"{path.name} has missing values", details={"rows": bad_rows})
    features = _encode_features(frame)
    return features.to_numpy(dtype=float), tuple(str(c) for c in features.columns)


def align_columns(X: np.ndarray, names: Sequence[str], expected: Sequence[str]) -> np.ndarray:
    """
    Reorder columns of X to the expected names.

    One-hot columns absent from X are filled with zeros; extra columns are
    dropped with a warning. Headerless inputs (positional names) are only
    checked for width.
    """
    names, expected = list(names), list(expected)
    if names == expected:
        return X
    if not set(names) & set(expected):
        if X.shape[1] != len(expected):
            raise DimensionMismatchError(
                "Input columns do not match the training features",
                details={"expected": len(expected), "got": X.shape[1]},
            )
        return X
    extra = [n for n in names if n not in expected]
    if extra:
        logger.warning(f"Ignoring columns unknown to the model: {extra}")
    return pd.DataFrame(X, columns=names).reindex(columns=expected, fill_value=0.0).to_numpy(dtype=float)


def fit_standardization(train: Dataset) -> StandardizationStats:
    """Compute train-split statistics; zero-variance features are marked dropped."""
    if train.n == 0:
        raise DataError("Cannot standardize an empty training split")
    means = train.X.mean(axis=0)
    stds = train.X.std(axis=0)
    kept = stds > 0
    if not kept.all():
        dropped = [name for name, keep in zip(train.feature_names, kept) if not keep]
        logger.warning(f"Dropping zero-variance features: {dropped}")
    if not kept.any():
        raise DataError("Every feature has zero variance on the training split")
    return StandardizationStats(means=means[kept], stds=stds[kept], kept=kept, feature_names=train.feature_names)


def apply_standardization(ds: Dataset, stats: StandardizationStats) -> Dataset:
    """Transform a raw dataset with given statistics; y is left unscaled."""
    return replace(ds, X=stats.apply(ds.X), feature_names=stats.kept_names, stats=stats)


def standardize(train: Dataset, others: Sequence[Dataset] = ()) -> Tuple[Dataset, List[Dataset]]:
    """
    Standardize features with statistics of the training split.

    A training set that already carries statistics is returned unchanged and
    its stored statistics are applied to the other splits.

    Args:
        train (Dataset): Training split
        others (Sequence[Dataset]): Further splits, transformed with the training statistics

    Returns:
        Tuple[Dataset, List[Dataset]]: Standardized training split and other splits
    """
    if train.stats is not None:
        stats = train.stats
        train_std = train
    else:
        stats = fit_standardization(train)
        train_std = apply_standardization(train, stats)

    transformed = []
    for ds in others:
        transformed.append(ds if ds.stats is stats else apply_standardization(ds, stats))
    return train_std, transformed


def target_function(target: SyntheticTarget, x: np.ndarray) -> np.ndarray:
    """Noise-free synthetic target on [0, 1]."""
    if target == SyntheticTarget.SINE:
        return np.sin(2.0 * np.pi * x)
    if target == SyntheticTarget.SQUARE:
        return np.sign(np.sin(2.0 * np.pi * x))
    return 2.0 * x - 1.0


def synthesize(spec: SyntheticSpec) -> Dataset:
    """
    Draw x ~ U[0, 1] and y = f_star(x) + noise_sigma * N(0, 1).

    The inputs are drawn before the noise from one generator seeded with spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(0.0, 1.0, size=spec.n)
    f_star = target_function(spec.target, x)
    y = f_star + spec.noise_sigma * rng.standard_normal(spec.n)
    return Dataset(
        X=x[:, None],
        y=y,
        name=f"synthetic-{spec.target.value}",
        feature_names=("x",),
        f_star=f_star,
    )


def split_indices(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Seeded shuffle split into (train, test) index arrays.

    Raises:
        ConfigurationError: If test_fraction is outside (0, 1)
        DataError: If either side would be empty
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigurationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise DataError(
            "Split would leave an empty side",
            details={"n": n, "test_fraction": test_fraction, "n_test": n_test},
        )
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


def split(ds: Dataset, test_fraction: float = 0.2, seed: int = 0) -> Tuple[Dataset, Dataset]:
    """Seeded shuffle split of a dataset into train and test parts."""
    train_idx, test_idx = split_indices(ds.n, test_fraction, seed)
    return ds.subset(train_idx, f"{ds.name}-train"), ds.subset(test_idx, f"{ds.name}-test")


def bootstrap_indices(n: int, reps: int, seed: int) -> np.ndarray:
    """reps x n matrix of indices drawn with replacement."""
    if reps < 1:
        raise ConfigurationError(f"reps must be >= 1, got {reps}")
    if n < 1:
        raise DataError("Cannot bootstrap an empty set")
    return np.random.default_rng(seed).integers(0, n, size=(reps, n))


def bootstrap_quartiles(values) -> Tuple[float, float, float]:
    """(median, Q1, Q3) of bootstrap replicate scores."""
    median, q1, q3 = np.percentile(np.asarray(values, dtype=float), [50, 25, 75])
    return float(median), float(q1), float(q3)
