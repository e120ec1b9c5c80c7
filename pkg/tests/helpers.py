import numpy as np

from impute_forge.dataset import ColumnKind, ColumnRole, ColumnSchema, Dataset


def make_dataset(columns: dict, kinds: dict, target: str, descriptions=None) -> Dataset:
    """Small in-memory dataset; ``None``/NaN cells are missing."""
    names = list(columns)
    n = len(columns[names[0]])
    schema, cols, mask = [], [], []
    for name in names:
        kind = ColumnKind(kinds.get(name, "categorical"))
        role = ColumnRole.TARGET if name == target else ColumnRole.FEATURE
        desc = (descriptions or {}).get(name, f"the {name} column")
        schema.append(ColumnSchema(name, kind, desc, role))
        raw = columns[name]
        miss = np.array([v is None or (isinstance(v, float) and np.isnan(v)) for v in raw])
        if kind is ColumnKind.NUMERICAL:
            col = np.array([np.nan if m else float(v) for v, m in zip(raw, miss)])
        else:
            col = np.array([None if m else str(v) for v, m in zip(raw, miss)], dtype=object)
        cols.append(col)
        mask.append(miss)
    return Dataset(tuple(schema), tuple(cols), np.column_stack(mask), np.arange(n), "<test>")
