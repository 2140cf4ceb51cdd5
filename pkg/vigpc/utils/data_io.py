"""
Datasets: libsvm and CSV loading, label mapping, feature normalization
and seeded train / test splits. Data are stored densely.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np

from vigpc.utils import utils, validation
from vigpc.utils.custom_exceptions import DatasetError

DataFormat = Literal["libsvm", "csv"]

DEFAULT_TEST_FRACTION = 0.2
MAX_SPLIT_ATTEMPTS = 10


# -----------------------------------------------------------------------------
# Types
# -----------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    """
    x : (n, d) features.
    y : (n,) labels in {-1, +1}.
    feature_means, feature_stds : training statistics, set once the
        dataset has been normalized.
    name : used for output file names.
    """

    x: np.ndarray
    y: np.ndarray
    feature_means: Optional[np.ndarray] = None
    feature_stds: Optional[np.ndarray] = None
    name: str = "dataset"

    def __post_init__(self):
        x = validation.check_matrix(self.x, "x")
        y = np.asarray(self.y, dtype=float).ravel()
        if y.size:
            y = validation.check_labels(y)
        validation.check_length(y, x.shape[0], "y")

        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def num_data(self) -> int:
        return self.x.shape[0]

    @property
    def num_features(self) -> int:
        return self.x.shape[1]

    @property
    def is_normalized(self) -> bool:
        return self.feature_means is not None

    def take(self, idx: np.ndarray) -> Dataset:
        return dataclasses.replace(self, x=self.x[idx], y=self.y[idx])


@dataclasses.dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = DEFAULT_TEST_FRACTION
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            utils.log_and_raise_error(
                f"'test_fraction' must be in (0, 1), got "
                f"{self.test_fraction}.",
                ValueError,
            )


# -----------------------------------------------------------------------------
# Loading
# -----------------------------------------------------------------------------


def load_dataset(
    path: Union[str, Path],
    data_format: str = "libsvm",
    label_map: Optional[Dict[Union[float, str], int]] = None,
    delimiter: str = ",",
    num_features: Optional[int] = None,
) -> Dataset:
    """
    Load a binary-classification dataset.

    Parameters
    ----------

    path : file to read.

    data_format : "libsvm" lines "label idx:value ..." with 1-based
        indices and missing entries zero, or "csv" with the label in
        the last column and an optional header row. CSV labels may
        be numbers or class names.

    label_map : raw label -> -1 / +1. By default 0 and -1 map to -1
        and 1 to +1; any other pair of labels, numeric or names, maps
        the smaller to -1.

    delimiter : CSV delimiter.

    num_features : pad libsvm rows to this many features. By default
        d is the largest index seen.
    """
    path = Path(path)
    if not path.is_file():
        utils.log_and_raise_error(
            f"Dataset file {path} does not exist.", FileNotFoundError
        )

    if data_format == "libsvm":
        x, raw_labels = _parse_libsvm(path, num_features)
    elif data_format == "csv":
        x, raw_labels = _parse_csv(path, delimiter)
    else:
        utils.log_and_raise_error(
            f"Unknown data format '{data_format}', use 'libsvm' or 'csv'.",
            ValueError,
        )

    y = map_labels(raw_labels, label_map)

    utils.log(
        f"Loaded {x.shape[0]} rows with {x.shape[1]} features from {path}."
    )
    return Dataset(x=x, y=y, name=path.stem)


def map_labels(
    raw_labels: np.ndarray,
    label_map: Optional[Dict[Union[float, str], int]] = None,
) -> np.ndarray:
    """
    Map raw labels to -1 / +1.

    Without a label map, labels within {-1, 0, 1} map by sign. Any
    other pair, such as {1, 2} or class names, maps in sorted order:
    the smaller label to -1 and the larger to +1.
    """
    raw_labels = np.asarray(raw_labels)
    if raw_labels.dtype.kind not in "US":
        raw_labels = raw_labels.astype(float)
    distinct = np.unique(raw_labels)

    if label_map is not None:
        unknown = [lab for lab in distinct if lab not in label_map]
        if unknown:
            utils.log_and_raise_error(
                f"Labels {unknown} are missing from the label map.",
                DatasetError,
            )
        mapped = np.array([label_map[lab] for lab in raw_labels], float)
        return validation.check_labels(mapped)

    if distinct.size > 2:
        utils.log_and_raise_error(
            f"Expected at most two distinct labels, found "
            f"{distinct.size}: {distinct[:5].tolist()}.",
            DatasetError,
        )

    numeric = raw_labels.dtype.kind == "f"
    if numeric and np.all(np.isin(distinct, [-1.0, 0.0, 1.0])):
        if np.all(np.isin([-1.0, 0.0], distinct)):
            utils.log_and_raise_error(
                "Labels 0 and -1 both appear; supply a label map.",
                DatasetError,
            )
        return np.where(raw_labels > 0, 1.0, -1.0)

    if distinct.size == 1:
        utils.log_and_raise_error(
            f"Cannot map the single label {distinct[0]} without a "
            f"label map.",
            DatasetError,
        )

    # Sorted order, e.g. skin_nonskin {1, 2} gives 1 -> -1 and 2 -> +1.
    utils.log(f"Mapping label {distinct[0]} to -1 and {distinct[1]} to +1.")
    return np.where(raw_labels == distinct[1], 1.0, -1.0)


def _parse_libsvm(
    path: Path, num_features: Optional[int]
) -> Tuple[np.ndarray, np.ndarray]:
    labels: List[float] = []
    rows: List[Dict[int, float]] = []
    max_index = 0

    with open(path, "r") as file:
        for line_num, line in enumerate(file, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue

            words = line.split()
            try:
                labels.append(float(words[0]))
                row = {}
                for word in words[1:]:
                    idx_str, value_str = word.split(":", 1)
                    idx = int(idx_str)
                    if idx < 1:
                        raise ValueError("indices are 1-based")
                    row[idx - 1] = float(value_str)
            except ValueError as e:
                utils.log_and_raise_error(
                    f"Malformed libsvm line {line_num} in {path}: {e}",
                    DatasetError,
                )

            if row:
                max_index = max(max_index, max(row) + 1)
            rows.append(row)

    if not rows:
        utils.log_and_raise_error(f"No data found in {path}.", DatasetError)

    if num_features is None:
        num_features = max_index
    elif num_features < max_index:
        utils.log_and_raise_error(
            f"Found feature index {max_index} but num_features is "
            f"{num_features}.",
            DatasetError,
        )

    x = np.zeros((len(rows), num_features))
    for i, row in enumerate(rows):
        for j, value in row.items():
            x[i, j] = value

    _check_finite_rows(x, path)
    return x, np.array(labels)


def _parse_csv(path: Path, delimiter: str) -> Tuple[np.ndarray, np.ndarray]:
    with open(path, "r", newline="") as file:
        lines = [
            (line_num, row)
            for line_num, row in enumerate(
                csv.reader(file, delimiter=delimiter), start=1
            )
            if row and any(cell.strip() for cell in row)
        ]

    if lines and not _is_numeric_row(lines[0][1][:-1]):
        lines = lines[1:]

    if not lines:
        utils.log_and_raise_error(f"No data found in {path}.", DatasetError)

    num_cols = len(lines[0][1])
    if num_cols < 2:
        utils.log_and_raise_error(
            f"CSV file {path} needs at least one feature column and a "
            f"label column.",
            DatasetError,
        )

    table = np.empty((len(lines), num_cols - 1))
    labels: List[str] = []
    for i, (line_num, row) in enumerate(lines):
        if len(row) != num_cols:
            utils.log_and_raise_error(
                f"Malformed CSV line {line_num} in {path}: expected "
                f"{num_cols} columns, found {len(row)}.",
                DatasetError,
            )
        try:
            table[i] = [float(cell) for cell in row[:-1]]
        except ValueError as e:
            utils.log_and_raise_error(
                f"Malformed CSV line {line_num} in {path}: {e}",
                DatasetError,
            )

        labels.append(row[-1].strip())

    _check_finite_rows(table, path)
    return table, _label_column(labels)


def _label_column(labels: List[str]) -> np.ndarray:
    """
    Numeric labels as floats, otherwise class names as strings.
    """
    if _is_numeric_row(labels):
        return np.array([float(label) for label in labels])
    return np.array(labels, dtype=str)


def _is_numeric_row(row: List[str]) -> bool:
    try:
        [float(cell) for cell in row]
    except ValueError:
        return False
    return True


def _check_finite_rows(x: np.ndarray, path: Path) -> None:
    bad_rows = np.flatnonzero(~np.all(np.isfinite(x), axis=1))
    if bad_rows.size:
        utils.log_and_raise_error(
            f"Non-finite feature values in {path}, data row "
            f"{bad_rows[0] + 1}.",
            DatasetError,
        )


def write_libsvm(dataset: Dataset, path: Union[str, Path]) -> None:
    """
    Write in libsvm format, omitting zero entries. Values are written
    with repr so they reload bit-exactly.
    """
    with open(path, "w") as file:
        for row, label in zip(dataset.x, dataset.y):
            entries = " ".join(
                f"{j + 1}:{utils.format_float(value)}"
                for j, value in enumerate(row)
                if value != 0
            )
            file.write(f"{int(label)} {entries}".rstrip() + "\n")


# -----------------------------------------------------------------------------
# Normalization and splits
# -----------------------------------------------------------------------------


def normalize_features(
    train: Dataset, others: Optional[List[Dataset]] = None
) -> Tuple[Dataset, List[Dataset]]:
    """
    Center and scale every feature with statistics of train only.
    Constant features are centered but not scaled.
    Datasets that are already normalized are rejected.
    """
    if train.num_data == 0:
        utils.log_and_raise_error(
            "Cannot normalize with an empty training set.", ValueError
        )

    means = train.x.mean(axis=0)
    stds = train.x.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)

    normalized = [
        apply_normalization(data, means, stds)
        for data in [train] + list(others or [])
    ]
    return normalized[0], normalized[1:]


def apply_normalization(
    dataset: Dataset, means: np.ndarray, stds: np.ndarray
) -> Dataset:
    """
    Normalize with stored statistics, e.g. those saved with a model.
    """
    if dataset.is_normalized:
        utils.log_and_raise_error(
            f"Dataset '{dataset.name}' is already normalized.", ValueError
        )
    if dataset.num_features != means.size:
        utils.log_and_raise_error(
            f"Dimension mismatch: the dataset has {dataset.num_features} "
            f"features but the normalization statistics have "
            f"{means.size}.",
            ValueError,
        )
    return dataclasses.replace(
        dataset,
        x=(dataset.x - means) / stds,
        feature_means=np.array(means, dtype=float),
        feature_stds=np.array(stds, dtype=float),
    )


def train_test_split(
    data: Dataset, spec: Optional[SplitSpec] = None
) -> Tuple[Dataset, Dataset]:
    """
    Seeded shuffle and split. The test part holds
    floor(n * test_fraction) points, at least one and at most n - 1.
    The split is redrawn (up to MAX_SPLIT_ATTEMPTS times) while the
    training part misses a class.
    """
    spec = spec or SplitSpec()
    num_data = data.num_data

    if num_data < 2:
        utils.log_and_raise_error(
            f"Need at least two points to split, got {num_data}.",
            ValueError,
        )
    if np.unique(data.y).size < 2:
        utils.log_and_raise_error(
            "The dataset contains a single class.", DatasetError
        )

    num_test = int(np.floor(num_data * spec.test_fraction))
    num_test = min(max(num_test, 1), num_data - 1)

    rng = np.random.default_rng(spec.seed)
    for _ in range(MAX_SPLIT_ATTEMPTS):
        order = rng.permutation(num_data)
        test_idx, train_idx = order[:num_test], order[num_test:]

        if np.unique(data.y[train_idx]).size == 2:
            return data.take(train_idx), data.take(test_idx)

    utils.log_and_raise_error(
        f"Could not draw a training split containing both classes in "
        f"{MAX_SPLIT_ATTEMPTS} attempts.",
        DatasetError,
    )
