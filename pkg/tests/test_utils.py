import gzip
import json

import numpy as np
import pytest

from beeflow.utils import (InputFormatError, dumps_json, ids_key, natural_key, overlap_length, read_json,
                           window_index, write_json)


def test_natural_key_orders_numbers_by_value():
    assert sorted(['f10', 'f2', 'f1'], key=natural_key) == ['f1', 'f2', 'f10']
    assert sorted(['sp3', 'sp1', 'sp12'], key=natural_key) == ['sp1', 'sp3', 'sp12']
    assert ids_key(['f2', 'f10']) < ids_key(['f10'])


def test_read_json_reports_position(tmp_path):
    path = tmp_path / 'bad.json'
    path.write_text('{"a": 1,\n  oops}')
    with pytest.raises(InputFormatError, match=r'bad.json:2:'):
        read_json(path)


def test_read_json_missing_file(tmp_path):
    with pytest.raises(InputFormatError, match='not found'):
        read_json(tmp_path / 'nope.json')


def test_read_json_gzip(tmp_path):
    path = tmp_path / 'doc.json.gz'
    with gzip.open(path, 'wt', encoding='utf-8') as f:
        json.dump({'k': [1, 2]}, f)
    assert read_json(path) == {'k': [1, 2]}


def test_write_json_is_byte_stable(tmp_path):
    a = write_json({'b': 1, 'a': {'z': 2, 'y': 3}}, tmp_path / 'a.json')
    b = write_json({'a': {'y': 3, 'z': 2}, 'b': 1}, tmp_path / 'sub' / 'b.json')
    assert a.read_bytes() == b.read_bytes()
    assert dumps_json({}).endswith('\n')


def test_window_index():
    idx = window_index([0.0, 4.999, 5.0, 12.0], 5.0)
    assert list(idx) == [0, 0, 1, 2]
    assert window_index([], 5.0).size == 0
    assert window_index(np.array([0.5]), 1.0).tolist() == [0]


def test_overlap_length():
    assert overlap_length(0, 2, 1, 3) == 1
    assert overlap_length(0, 1, 1, 2) == 0
    assert overlap_length(0, 1, 5, 6) == 0
