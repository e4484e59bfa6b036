"""
Test utilities and fixtures
"""

from pathlib import Path

import pytest

from lookalike.cluster.config import ClusterConfig
from lookalike.core.accounts import SeededEntropy, generate_account
from lookalike.core.config import Config
from lookalike.storage.base import ShardFile
from lookalike.storage.shard_store import open_shard

# Well-known vectors: private keys 1 and 2 and their addresses.
KEY_ONE_ADDRESS = "7e5f4552091a69125d5dfcb7b8c2659029395bdf"
KEY_ONE_CHECKSUM = "0x7E5F4552091A69125d5DfCb7b8C2659029395Bdf"
KEY_TWO_CHECKSUM = "0x2B5AD5c4795c026514f8317c7a215E218DcCD6cF"
KEY_THREE_CHECKSUM = "0x6813Eb9362372EEF6200f3b1dbC3f819671cBA69"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-scale acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale acceptance run, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def config():
    """Small config so tests exercise striping and periodic metadata syncs"""
    return Config(lock_stripes=16, metadata_sync_interval=50, transfer_flush_threshold=8, transfer_buffer_capacity=32)


@pytest.fixture
def entropy():
    return SeededEntropy(1234)


@pytest.fixture
def make_store(tmp_path, config):
    """Factory for shard stores under tmp_path; closes them afterwards"""
    stores = []

    def _make(n_match=2, a0=0, a1=None, name="shard.dat", paranoid=None):
        shard = ShardFile(tmp_path / name, a0, 16**n_match if a1 is None else a1, n_match)
        store = open_shard(shard, config=config, paranoid=paranoid)
        stores.append(store)
        return store

    yield _make
    for store in stores:
        store.close()


@pytest.fixture
def accounts():
    """A deterministic pool of generated accounts"""
    source = SeededEntropy(42)
    return [generate_account(source) for _ in range(64)]


@pytest.fixture
def two_shard_cluster(tmp_path) -> ClusterConfig:
    """N=2 space split evenly across two shards on loopback, ports picked at bind time"""
    return ClusterConfig.split_evenly(2, 2, tmp_path / "cluster")


def write_cluster_file(directory: Path, text: str) -> Path:
    path = directory / "cluster.conf"
    path.write_text(text, encoding="utf-8")
    return path
