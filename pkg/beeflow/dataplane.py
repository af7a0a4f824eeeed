"""
Payload channel and per-worker data store.

Small key-value payloads travel with the workflow and must stay under the broker size
limit; anything large is put into the worker's store and only its DataId rides along.
"""
import json
import logging as log
import threading
from collections import namedtuple
from pathlib import Path

from beeflow.utils import DomainError

DEFAULT_PAYLOAD_LIMIT = 1024 * 1024


class StoreClosed(DomainError):
    pass

class UnknownDataId(DomainError):
    def __init__(self, data_id):
        super().__init__(f"unknown data id {data_id!r}")
        self.data_id = data_id


class DataId(str):
    """Opaque `<node>/<counter>` reference to a stored object. Serializes as a plain string."""

    @property
    def node_id(self):
        return self.rsplit('/', 1)[0]


StoreStats = namedtuple('StoreStats', ['objects', 'bytes'])
PayloadCheck = namedtuple('PayloadCheck', ['ok', 'size', 'limit'])


class DataStore:
    """
    In-memory object store of one worker node.

    Ids are unique per instance and never reused; a get from another instance's id fails
    even when the counter matches, because the node part differs. With `directory` set,
    every object is also written to <directory>/<node>/<counter>.bin for inspection.
    """

    def __init__(self, node_id, directory=None):
        self.node_id = node_id
        self.directory = Path(directory) if directory else None
        self._objects = {}
        self._counter = 0
        self._bytes = 0
        self._closed = False
        self._lock = threading.Lock()
        if self.directory:
            (self.directory / node_id).mkdir(parents=True, exist_ok=True)

    def put(self, data):
        data = bytes(data)
        with self._lock:
            if self._closed:
                raise StoreClosed(f"store {self.node_id} is closed")
            data_id = DataId(f"{self.node_id}/{self._counter}")
            self._counter += 1
            self._objects[data_id] = data
            self._bytes += len(data)
        if self.directory:
            (self.directory / self.node_id / f"{data_id.rsplit('/', 1)[1]}.bin").write_bytes(data)
        return data_id

    def get(self, data_id):
        with self._lock:
            if self._closed:
                raise StoreClosed(f"store {self.node_id} is closed")
            try:
                return self._objects[data_id]
            except KeyError:
                raise UnknownDataId(data_id) from None

    def stats(self):
        with self._lock:
            return StoreStats(len(self._objects), self._bytes)

    def close(self):
        with self._lock:
            self._closed = True
        log.debug(f"store {self.node_id} closed with {len(self._objects)} objects")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def payload_size(payload):
    return len(json.dumps(payload, sort_keys=True, separators=(',', ':'), ensure_ascii=False).encode('utf-8'))


def check_payload(payload, limit_bytes=DEFAULT_PAYLOAD_LIMIT):
    """
    Checks a payload against the broker size limit.

    Only the serialized payload counts: a DataId costs its own few bytes no matter how
    large the referenced object is.

    Returns:
        PayloadCheck: ok is False iff the serialized size exceeds limit_bytes.
    """
    size = payload_size(payload)
    return PayloadCheck(size <= limit_bytes, size, limit_bytes)
