import threading

import pytest

from beeflow.dataplane import DataId, DataStore, StoreClosed, UnknownDataId, check_payload, payload_size


def test_put_get_and_ids():
    store = DataStore('n0')
    a = store.put(b'hello')
    b = store.put(b'hello')
    assert a != b
    assert isinstance(a, DataId) and a.node_id == 'n0'
    assert store.get(a) == b'hello'
    assert store.stats() == (2, 10)


def test_ids_do_not_cross_stores():
    one, two = DataStore('n0'), DataStore('n1')
    data_id = one.put(b'x')
    with pytest.raises(UnknownDataId):
        two.get(data_id)


def test_closed_store():
    with DataStore('n0') as store:
        data_id = store.put(b'x')
    with pytest.raises(StoreClosed):
        store.get(data_id)
    with pytest.raises(StoreClosed):
        store.put(b'y')


def test_directory_mirror(tmp_path):
    store = DataStore('n0', directory=tmp_path)
    store.put(b'abc')
    assert (tmp_path / 'n0' / '0.bin').read_bytes() == b'abc'


def test_concurrent_puts_get_unique_ids():
    store = DataStore('n0')
    ids = []
    lock = threading.Lock()

    def worker():
        for _ in range(200):
            data_id = store.put(b'.')
            with lock:
                ids.append(data_id)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(ids)) == 800
    assert store.stats().bytes == 800


def test_payload_check_counts_references_not_objects():
    store = DataStore('n0')
    big = store.put(b'0' * (4 * 1024 * 1024))
    check = check_payload({'PROGRAM': big}, limit_bytes=1024)
    assert check.ok
    assert check.size == payload_size({'PROGRAM': big})
    assert not check_payload({'blob': 'x' * 2048}, limit_bytes=1024).ok
