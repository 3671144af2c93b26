"""
Crash data processing utilities.
Handles the categorical schema, CSV loading, one-hot encoding, stratified
splitting, class weights and the synthetic crash generator.
"""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils.errors import ConfigError, DataError, ShapeError

logger = logging.getLogger(__name__)

LABEL_COLUMN = 'Severity'
LABEL_LEVELS = ('KA', 'BC', 'O')
OTHER_LEVEL = 'Other'
PROFILE_VERSION = 1


def clean_value(value):
    """Clean a raw CSV cell"""
    if value is None:
        return None
    value = str(value)
    if not value.strip() or value.strip().upper() == 'N/A':
        return None

    # Remove BOM if present
    if value.startswith('﻿'):
        value = value[1:]

    return value.strip()


def clean_column_name(column_name):
    """Strip BOM and surrounding whitespace from a header cell"""
    if column_name.startswith('﻿'):
        column_name = column_name[1:]
    return column_name.strip()


@dataclass(frozen=True)
class FieldSpec:
    name: str
    levels: tuple
    description: str = ''

    def level_index(self, text):
        """Map level text to its index, falling back to the Other level"""
        if text is not None:
            if text in self.levels:
                return self.levels.index(text)
            lowered = [level.lower() for level in self.levels]
            if text.lower() in lowered:
                return lowered.index(text.lower())
        if OTHER_LEVEL in self.levels:
            return self.levels.index(OTHER_LEVEL)
        raise DataError(f"Unknown level {text!r} for field {self.name} and no {OTHER_LEVEL!r} fallback")


@dataclass(frozen=True)
class Schema:
    """Ordered categorical fields plus the fixed severity label levels"""
    fields: tuple
    label_levels: tuple = LABEL_LEVELS

    def __post_init__(self):
        names = [f.name for f in self.fields]
        if not names:
            raise DataError("Schema needs at least one field")
        if len(set(names)) != len(names):
            raise DataError(f"Duplicate field names in schema: {names}")
        for spec in self.fields:
            if len(spec.levels) < 2:
                raise DataError(f"Field {spec.name} needs at least 2 levels")
            if len(set(spec.levels)) != len(spec.levels):
                raise DataError(f"Duplicate levels in field {spec.name}")
        if tuple(self.label_levels) != LABEL_LEVELS:
            raise DataError(f"Label levels must be {list(LABEL_LEVELS)}, got {list(self.label_levels)}")

    @property
    def field_names(self):
        return [f.name for f in self.fields]

    @property
    def n_columns(self):
        return sum(len(f.levels) for f in self.fields)

    def get(self, name):
        for spec in self.fields:
            if spec.name == name:
                return spec
        raise DataError(f"Field {name} is not in the schema")

    def column_map(self):
        """Field name -> (start, stop) column range of its one-hot block"""
        mapping = {}
        start = 0
        for spec in self.fields:
            mapping[spec.name] = (start, start + len(spec.levels))
            start += len(spec.levels)
        return mapping

    def column_names(self):
        return [f"{spec.name}={level}" for spec in self.fields for level in spec.levels]

    def restrict(self, names):
        """Sub-schema with the given fields, in the given order"""
        return Schema(fields=tuple(self.get(name) for name in names), label_levels=self.label_levels)

    def to_dict(self):
        return {
            'label_levels': list(self.label_levels),
            'fields': [
                {'name': f.name, 'levels': list(f.levels), 'description': f.description}
                for f in self.fields
            ],
        }

    def schema_hash(self):
        """sha256 over field names, levels and label levels"""
        canonical = {
            'label_levels': list(self.label_levels),
            'fields': [[f.name, list(f.levels)] for f in self.fields],
        }
        payload = json.dumps(canonical, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def schema_from_dict(data):
    """Build a Schema from its JSON form"""
    try:
        fields = tuple(
            FieldSpec(name=item['name'], levels=tuple(item['levels']), description=item.get('description', ''))
            for item in data['fields']
        )
    except (KeyError, TypeError) as e:
        raise DataError(f"Malformed schema document: {e}")
    return Schema(fields=fields, label_levels=tuple(data.get('label_levels', LABEL_LEVELS)))


def load_schema(path):
    """Load a schema JSON file (a bare schema or a generator profile)"""
    data = read_json(path)
    if 'profile_version' in data:
        return profile_from_dict(data).schema
    return schema_from_dict(data)


def write_schema(schema, path):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(schema.to_dict(), f, indent=2, sort_keys=True)
        f.write('\n')


@dataclass
class Dataset:
    """Rows of level indices (one per field) plus severity label indices"""
    schema: Schema
    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64).reshape(-1, len(self.schema.fields))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.values.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.values.shape[0]} rows but {self.labels.shape[0]} labels")
        for j, spec in enumerate(self.schema.fields):
            column = self.values[:, j]
            if column.size and (column.min() < 0 or column.max() >= len(spec.levels)):
                raise DataError(f"Level index out of range in field {spec.name}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(LABEL_LEVELS)):
            raise DataError("Label index out of range")

    @property
    def n_rows(self):
        return int(self.labels.shape[0])

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.schema, self.values[indices], self.labels[indices])

    def class_counts(self):
        return np.bincount(self.labels, minlength=len(LABEL_LEVELS))

    def select_fields(self, names):
        columns = [self.schema.field_names.index(name) for name in names]
        return Dataset(self.schema.restrict(names), self.values[:, columns], self.labels)


@dataclass
class EncodedMatrix:
    """Dense one-hot design matrix with its field-to-column map"""
    data: np.ndarray
    column_map: dict
    labels: np.ndarray
    schema: Schema = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.data.ndim != 2:
            raise ShapeError(f"Encoded data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.data.shape[0]} rows but {self.labels.shape[0]} labels")
        covered = sorted(self.column_map.values())
        expected_start = 0
        for start, stop in covered:
            if start != expected_start or stop <= start:
                raise ShapeError(f"Column map does not partition the columns: {self.column_map}")
            expected_start = stop
        if expected_start != self.data.shape[1]:
            raise ShapeError(f"Column map covers {expected_start} columns, data has {self.data.shape[1]}")

    @property
    def n_rows(self):
        return int(self.data.shape[0])

    @property
    def n_columns(self):
        return int(self.data.shape[1])

    @property
    def field_names(self):
        return list(self.column_map.keys())

    def take(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return EncodedMatrix(self.data[indices], dict(self.column_map), self.labels[indices], self.schema)

    def with_rows(self, data, labels):
        return EncodedMatrix(data, dict(self.column_map), labels, self.schema)

    def class_counts(self):
        return np.bincount(self.labels, minlength=len(LABEL_LEVELS))


@dataclass
class GeneratorProfile:
    """Class-conditional per-field level distributions plus class counts"""
    schema: Schema
    per_class_marginals: list
    class_counts: tuple

    def __post_init__(self):
        if len(self.per_class_marginals) != len(self.schema.fields):
            raise DataError("Profile needs one marginal table per field")
        tables = []
        for spec, table in zip(self.schema.fields, self.per_class_marginals):
            table = np.asarray(table, dtype=np.float64)
            if table.shape != (len(LABEL_LEVELS), len(spec.levels)):
                raise DataError(f"Marginals for {spec.name} must have shape {(len(LABEL_LEVELS), len(spec.levels))}")
            if np.any(table < 0):
                raise DataError(f"Negative probability in field {spec.name}")
            if np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
                raise DataError(f"Probabilities for {spec.name} do not sum to 1")
            tables.append(table)
        self.per_class_marginals = tables
        self.class_counts = tuple(int(c) for c in self.class_counts)
        if len(self.class_counts) != len(LABEL_LEVELS) or min(self.class_counts) < 0:
            raise DataError(f"class_counts must be {len(LABEL_LEVELS)} nonnegative integers")


def profile_from_dict(data):
    """Build a GeneratorProfile from its versioned JSON form"""
    version = data.get('profile_version')
    if version != PROFILE_VERSION:
        raise DataError(f"Unsupported profile_version {version!r}, expected {PROFILE_VERSION}")
    label_levels = tuple(data.get('label_levels', LABEL_LEVELS))
    schema = schema_from_dict({'label_levels': label_levels, 'fields': data['fields']})
    marginals = []
    for item in data['fields']:
        if 'probabilities' in item:
            rows = [item['probabilities'][label] for label in label_levels]
            table = np.asarray(rows, dtype=np.float64)
        elif 'counts' in item:
            counts = np.asarray([item['counts'][label] for label in label_levels], dtype=np.float64)
            totals = counts.sum(axis=1, keepdims=True)
            if np.any(totals <= 0):
                raise DataError(f"Field {item['name']} has a class with zero total count")
            table = counts / totals
        else:
            raise DataError(f"Field {item['name']} needs 'counts' or 'probabilities'")
        marginals.append(table)
    class_counts = [data['class_counts'][label] for label in label_levels]
    return GeneratorProfile(schema=schema, per_class_marginals=marginals, class_counts=class_counts)


def load_profile(path):
    """Load the versioned generator profile JSON"""
    return profile_from_dict(read_json(path))


def with_distractors(profile, n_fields, n_levels=5):
    """Append class-independent uniform fields to a profile"""
    if n_fields <= 0:
        return profile
    extra_fields = []
    extra_tables = []
    for i in range(n_fields):
        levels = tuple(f"Level{j + 1}" for j in range(n_levels - 1)) + (OTHER_LEVEL,)
        extra_fields.append(FieldSpec(name=f"Distractor{i + 1:02d}", levels=levels, description='uniform distractor'))
        extra_tables.append(np.full((len(LABEL_LEVELS), n_levels), 1.0 / n_levels))
    schema = Schema(fields=profile.schema.fields + tuple(extra_fields), label_levels=profile.schema.label_levels)
    return GeneratorProfile(schema, list(profile.per_class_marginals) + extra_tables, profile.class_counts)


def read_json(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"Invalid JSON in {path}: {e}")


def write_json(payload, path):
    """Sorted, indented JSON with a trailing newline; parent directories are created"""
    try:
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write('\n')
    except OSError as e:
        raise DataError(f"Cannot write {path}: {e}")


def load_dataset(path, schema):
    """Load a categorical crash CSV against a schema"""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataError(f"Empty file: {path}")

    frame.columns = [clean_column_name(str(c)) for c in frame.columns]
    missing = [name for name in schema.field_names + [LABEL_COLUMN] if name not in frame.columns]
    if missing:
        raise DataError(f"Header mismatch in {path}: missing columns {missing}")
    extra = [c for c in frame.columns if c not in schema.field_names and c != LABEL_COLUMN]
    if extra:
        logger.info("Ignoring %d extra columns in %s: %s", len(extra), path, extra)
    if frame.empty:
        raise DataError(f"Empty file: {path}")

    values = np.empty((len(frame), len(schema.fields)), dtype=np.int64)
    fallbacks = 0
    for j, spec in enumerate(schema.fields):
        cells = [clean_value(v) for v in frame[spec.name].tolist()]
        lookup = {}
        for cell in set(cells):
            lookup[cell] = spec.level_index(cell)
        for cell in cells:
            if cell is None or cell.lower() != spec.levels[lookup[cell]].lower():
                fallbacks += 1
        values[:, j] = [lookup[cell] for cell in cells]
    if fallbacks:
        logger.info("Mapped %d unlisted cells to the %s level", fallbacks, OTHER_LEVEL)

    labels = []
    for i, cell in enumerate(clean_value(v) for v in frame[LABEL_COLUMN].tolist()):
        if cell not in LABEL_LEVELS:
            raise DataError(f"Row {i + 1}: severity {cell!r} is not one of {list(LABEL_LEVELS)}")
        labels.append(LABEL_LEVELS.index(cell))

    logger.info("Loaded %d rows from %s", len(labels), path)
    return Dataset(schema=schema, values=values, labels=np.asarray(labels, dtype=np.int64))


def write_dataset_csv(ds, path):
    """Write a categorical dataset as level text plus the Severity column"""
    columns = {}
    for j, spec in enumerate(ds.schema.fields):
        levels = np.asarray(spec.levels, dtype=object)
        columns[spec.name] = levels[ds.values[:, j]]
    columns[LABEL_COLUMN] = np.asarray(LABEL_LEVELS, dtype=object)[ds.labels]
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator='\n')


def encode_onehot(ds):
    """One-hot encode a dataset; each field becomes a contiguous column block"""
    if ds.n_rows == 0:
        raise DataError("Cannot encode an empty dataset")
    column_map = ds.schema.column_map()
    data = np.zeros((ds.n_rows, ds.schema.n_columns), dtype=np.float64)
    rows = np.arange(ds.n_rows)
    for j, spec in enumerate(ds.schema.fields):
        start, _ = column_map[spec.name]
        data[rows, start + ds.values[:, j]] = 1.0
    return EncodedMatrix(data=data, column_map=column_map, labels=ds.labels.copy(), schema=ds.schema)


def decode_onehot(enc):
    """Per-field argmax back to level indices (first maximum wins)"""
    schema = enc.schema or schema_from_columns(_default_column_names(enc))
    values = np.empty((enc.n_rows, len(schema.fields)), dtype=np.int64)
    for j, spec in enumerate(schema.fields):
        start, stop = enc.column_map[spec.name]
        values[:, j] = np.argmax(enc.data[:, start:stop], axis=1)
    return Dataset(schema=schema, values=values, labels=enc.labels.copy())


def _default_column_names(enc):
    names = []
    for name, (start, stop) in enc.column_map.items():
        names.extend(f"{name}=L{i}" for i in range(stop - start))
    return names


def schema_from_columns(column_names):
    """Recover a schema from encoded 'Field=Level' headers"""
    fields = {}
    for column in column_names:
        if '=' not in column:
            raise DataError(f"Encoded column {column!r} is not of the form Field=Level")
        name, level = column.split('=', 1)
        fields.setdefault(name, []).append(level)
    return Schema(fields=tuple(FieldSpec(name=n, levels=tuple(levels)) for n, levels in fields.items()))


def write_encoded_csv(enc, path):
    """Write an encoded matrix with Field=Level headers and text labels"""
    schema = enc.schema or schema_from_columns(_default_column_names(enc))
    frame = pd.DataFrame(enc.data, columns=schema.column_names())
    frame[LABEL_COLUMN] = np.asarray(LABEL_LEVELS, dtype=object)[enc.labels]
    frame.to_csv(path, index=False, lineterminator='\n', float_format='%.17g')


def read_encoded_csv(path):
    """Read an encoded matrix CSV; the header determines the schema"""
    try:
        frame = pd.read_csv(path, encoding='utf-8', keep_default_na=False)
    except FileNotFoundError:
        raise DataError(f"File not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataError(f"Empty file: {path}")
    frame.columns = [clean_column_name(str(c)) for c in frame.columns]
    if LABEL_COLUMN not in frame.columns:
        raise DataError(f"Header mismatch in {path}: missing {LABEL_COLUMN} column")
    if frame.empty:
        raise DataError(f"Empty file: {path}")
    feature_columns = [c for c in frame.columns if c != LABEL_COLUMN]
    schema = schema_from_columns(feature_columns)
    labels = frame[LABEL_COLUMN].astype(str).map(clean_value)
    bad = labels[~labels.isin(LABEL_LEVELS)]
    if len(bad):
        raise DataError(f"Unknown severity values in {path}: {sorted({str(v) for v in bad})[:5]}")
    label_index = labels.map(LABEL_LEVELS.index).to_numpy(dtype=np.int64)
    try:
        data = frame[feature_columns].to_numpy(dtype=np.float64)
    except ValueError as e:
        raise DataError(f"Non-numeric cell in encoded CSV {path}: {e}")
    return EncodedMatrix(data=data, column_map=schema.column_map(), labels=label_index, schema=schema)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        is_valid, error = validate_split_fractions(self.train_frac, self.val_frac, self.test_frac)
        if not is_valid:
            raise ConfigError(error)


def validate_split_fractions(train_frac, val_frac, test_frac):
    """
    Validate split fractions.
    Returns (is_valid, error_message)
    """
    fractions = (train_frac, val_frac, test_frac)
    if any(f <= 0 for f in fractions):
        return False, f"Split fractions must be positive, got {fractions}"
    if abs(sum(fractions) - 1.0) > 1e-12:
        return False, f"Split fractions must sum to 1, got {sum(fractions)!r}"
    return True, None


def _allocate(n, spec):
    n_train = int(math.floor(spec.train_frac * n + 1e-9))
    n_val = int(math.floor(spec.val_frac * n + 1e-9))
    return n_train, n_val


def split_indices(labels, spec):
    """Row indices of the train, validation and test partitions"""
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    parts = ([], [], [])
    if spec.stratified:
        for c in range(len(LABEL_LEVELS)):
            members = np.flatnonzero(labels == c)
            if members.size == 0:
                continue
            if members.size < 3:
                raise DataError(f"Class {LABEL_LEVELS[c]} has {members.size} rows; stratified split needs at least 3")
            members = rng.permutation(members)
            n_train, n_val = _allocate(members.size, spec)
            parts[0].append(members[:n_train])
            parts[1].append(members[n_train:n_train + n_val])
            parts[2].append(members[n_train + n_val:])
    else:
        members = rng.permutation(labels.size)
        n_train, n_val = _allocate(members.size, spec)
        parts[0].append(members[:n_train])
        parts[1].append(members[n_train:n_train + n_val])
        parts[2].append(members[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) if p else np.empty(0, dtype=np.int64) for p in parts)


def stratified_split(data, spec):
    """Split a Dataset or EncodedMatrix into (train, val, test)"""
    if data.n_rows == 0:
        raise DataError("Cannot split an empty dataset")
    train_idx, val_idx, test_idx = split_indices(data.labels, spec)
    logger.info("Split %d rows into %d/%d/%d", data.n_rows, train_idx.size, val_idx.size, test_idx.size)
    return data.take(train_idx), data.take(val_idx), data.take(test_idx)


def class_weights(labels, k=len(LABEL_LEVELS)):
    """Balanced class weights n / (k * n_c)"""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=k)[:k]
    absent = [c for c in range(k) if counts[c] == 0]
    if absent:
        raise DataError(f"Class weights need every class present; missing {absent}")
    return labels.size / (k * counts.astype(np.float64))


def synth_generate(profile, seed):
    """Draw a dataset class by class, each field independent given the class"""
    rng = np.random.default_rng(seed)
    blocks = []
    labels = []
    for c, n_c in enumerate(profile.class_counts):
        block = np.empty((n_c, len(profile.schema.fields)), dtype=np.int64)
        for j, table in enumerate(profile.per_class_marginals):
            block[:, j] = rng.choice(table.shape[1], size=n_c, p=table[c])
        blocks.append(block)
        labels.append(np.full(n_c, c, dtype=np.int64))
    values = np.concatenate(blocks) if blocks else np.empty((0, len(profile.schema.fields)), dtype=np.int64)
    logger.info("Generated %d synthetic rows (class counts %s)", values.shape[0], list(profile.class_counts))
    return Dataset(schema=profile.schema, values=values, labels=np.concatenate(labels))
