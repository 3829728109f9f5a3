import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lattice_ohm.io import PROVENANCE, read_csv, to_jsonable, write_csv, write_json


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=5))
def test_csv_floats_roundtrip_exactly(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "t.csv"
    cols = list(PROVENANCE) + [f"v{i}" for i in range(len(xs))]
    write_csv(path, cols, [[1, -1, 4, 1.0, 0.5, 0.0] + xs])
    header, rows = read_csv(path)
    assert header == cols
    assert [float(v) for v in rows[0][6:]] == xs


def test_csv_requires_provenance_and_consistent_rows(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ["t", "value"], [])
    with pytest.raises(ValueError):
        write_csv(tmp_path / "b.csv", list(PROVENANCE) + ["x"], [[0] * 6])


def test_csv_cell_formatting(tmp_path):
    path = write_csv(tmp_path / "c.csv", list(PROVENANCE) + ["flag", "k"],
                     [[np.int64(3), -1, 2, np.float64(0.1), 1.0, 0.0, True, "x"]])
    assert path.read_text().splitlines()[1] == "3,-1,2,0.1,1.0,0.0,true,x"


def test_json_handles_numpy_and_non_finite(tmp_path):
    obj = {"a": np.arange(3), "b": np.float64(math.inf), "c": (np.bool_(True), np.int32(4)), 5: math.nan}
    assert to_jsonable(obj) == {"a": [0, 1, 2], "b": "inf", "c": [True, 4], "5": "nan"}
    path = write_json(tmp_path / "x.json", obj)
    assert json.loads(path.read_text())["b"] == "inf"
