"""
Fixed-field shard file: one 104-octet record per slot, addressed by arithmetic
"""

import fcntl
import os
import re
import threading
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np

from ..core.accounts import ADDRESS_HEX_LENGTH, RECORD_SIZE, SECP256K1_ORDER, Account
from ..core.config import Config
from ..core.errors import StoreCorruptionError, StoreIOError
from ..utils.logging import LoggerMixin, format_kv
from .base import InsertResult, ShardFile, SlotStore
from .slots import SlotKey, check_n_match, slot_digits, slot_key

EMPTY_MARKER = 0x00
SCAN_CHUNK_RECORDS = 65536
_RECORD_SYNTAX = re.compile(rb"[0-9a-f]{%d}" % RECORD_SIZE)


def metadata_path(path: Path) -> Path:
    """Sidecar file holding n_match, range and occupancy"""
    return path.with_name(path.name + ".meta")


class ShardStore(SlotStore, LoggerMixin):
    """Record file for one shard.

    Record i lives at offset 104 * i and holds the address hex followed by the
    private key hex. A record whose first octet is 0x00 is an empty slot, so
    sparse zero-filled regions read as empty.
    """

    def __init__(self, shard: ShardFile, config: Optional[Config] = None, paranoid: Optional[bool] = None):
        super().__init__(shard)
        self.config = config or Config()
        check_n_match(shard.n_match, self.config.max_match)
        self.paranoid = self.config.paranoid_reads if paranoid is None else paranoid
        self.read_count = 0

        self._locks = [threading.Lock() for _ in range(self.config.lock_stripes)]
        self._counter_lock = threading.Lock()
        self._meta_lock = threading.Lock()
        self._occupancy = 0
        self._inserts_since_sync = 0
        self._fd: Optional[int] = None
        self._open()

    # ------------------------------------------------------------------
    # file lifecycle

    @property
    def path(self) -> Path:
        return self.shard.path

    @property
    def expected_size(self) -> int:
        return RECORD_SIZE * self.shard.slots

    def _open(self) -> None:
        path = self.path
        created = not path.exists()
        try:
            if created:
                path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
        except OSError as e:
            raise StoreIOError(f"cannot open shard file {path}: {e}") from e

        # one writer per file: slot locks and the occupancy counter are per process
        try:
            fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as e:
            os.close(fd)
            raise StoreIOError(f"{path} is already open by another store handle or process: {e}") from e

        try:
            size = os.fstat(fd).st_size
            if created:
                os.ftruncate(fd, self.expected_size)
            elif size != self.expected_size:
                raise StoreCorruptionError(
                    f"{path} is {size} octets but range [{self.shard.a0:#x}, {self.shard.a1:#x}) "
                    f"needs {self.expected_size}; refusing to open"
                )
        except OSError as e:
            os.close(fd)
            raise StoreIOError(f"cannot size shard file {path}: {e}") from e
        except StoreCorruptionError:
            os.close(fd)
            raise

        self._fd = fd
        self._load_metadata(created)
        self.logger.debug(format_kv({"event": "shard_open", "path": path, "created": created, "occupancy": self._occupancy}))

    def _load_metadata(self, created: bool) -> None:
        meta = metadata_path(self.path)
        if created or not meta.exists():
            if not created:
                self.logger.warning(f"{meta} missing, rebuilding occupancy by scan")
                self._occupancy = self._scan_occupancy()
            self._write_metadata()
            return

        fields = self._read_metadata(meta)
        for key, expected in (("n_match", self.shard.n_match), ("a0", self.shard.a0), ("a1", self.shard.a1)):
            if fields.get(key) != expected:
                self._close_fd()
                raise StoreCorruptionError(f"{meta} has {key}={fields.get(key)}, shard expects {expected}")
        if fields.get("clean") == 1:
            self._occupancy = fields.get("occupancy", 0)
        else:
            self.logger.warning(f"{self.path} was not closed cleanly, rebuilding occupancy by scan")
            self._occupancy = self._scan_occupancy()
        # marked dirty until close()
        self._write_metadata()

    @staticmethod
    def _read_metadata(meta: Path) -> Dict[str, int]:
        fields: Dict[str, int] = {}
        try:
            for line in meta.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                key, _, value = line.partition("=")
                fields[key.strip()] = int(value.strip(), 0)
        except (OSError, ValueError) as e:
            raise StoreCorruptionError(f"unreadable metadata {meta}: {e}") from e
        return fields

    def _write_metadata(self, clean: bool = False) -> None:
        meta = metadata_path(self.path)
        with self._meta_lock:
            with self._counter_lock:
                occupancy = self._occupancy
                self._inserts_since_sync = 0
            text = (
                f"n_match={self.shard.n_match}\n"
                f"a0={self.shard.a0:#x}\n"
                f"a1={self.shard.a1:#x}\n"
                f"occupancy={occupancy}\n"
                f"clean={int(clean)}\n"
            )
            tmp = meta.with_name(meta.name + ".tmp")
            try:
                tmp.write_text(text, encoding="utf-8")
                os.replace(tmp, meta)
            except OSError as e:
                raise StoreIOError(f"cannot write metadata {meta}: {e}") from e

    def sync(self, clean: bool = False) -> None:
        """Flush records and persist the occupancy counter"""
        try:
            os.fsync(self._require_fd())
        except OSError as e:
            raise StoreIOError(f"fsync failed on {self.path}: {e}") from e
        self._write_metadata(clean=clean)

    def _close_fd(self) -> None:
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None

    def close(self) -> None:
        if self._fd is None:
            return
        self.sync(clean=True)
        self._close_fd()
        self.logger.debug(format_kv({"event": "shard_close", "path": self.path, "occupancy": self._occupancy}))

    @property
    def closed(self) -> bool:
        return self._fd is None

    def _require_fd(self) -> int:
        if self._fd is None:
            raise StoreIOError(f"shard {self.path} is closed")
        return self._fd

    # ------------------------------------------------------------------
    # record access

    def offset_of(self, slot: Union[SlotKey, int]) -> int:
        """File offset of a slot's record: 104 * (slot - a0)"""
        value = slot.value if isinstance(slot, SlotKey) else slot
        if not self.shard.owns(value):
            raise ValueError(f"slot {value:#x} outside [{self.shard.a0:#x}, {self.shard.a1:#x})")
        return RECORD_SIZE * (value - self.shard.a0)

    def insert(self, account: Account) -> InsertResult:
        slot = slot_key(account.address, self.n_match, self.config.max_match).value
        if not self.shard.owns(slot):
            return InsertResult.OUT_OF_RANGE
        return self._insert_at(slot, account.to_record())

    def insert_record(self, record: bytes) -> InsertResult:
        """Insert an already-encoded record, as received from a peer"""
        record = bytes(record)
        slot = record_slot(record, self.n_match)
        if not self.shard.owns(slot):
            return InsertResult.OUT_OF_RANGE
        return self._insert_at(slot, record)

    def _insert_at(self, slot: int, record: bytes) -> InsertResult:
        fd = self._require_fd()
        offset = RECORD_SIZE * (slot - self.shard.a0)
        with self._locks[slot % len(self._locks)]:
            try:
                head = os.pread(fd, 1, offset)
                if head and head[0] != EMPTY_MARKER:
                    return InsertResult.SLOT_OCCUPIED
                written = os.pwrite(fd, record, offset)
            except OSError as e:
                raise StoreIOError(f"write failed at slot {slot:#x} in {self.path}: {e}") from e
            if written != RECORD_SIZE:
                # a torn record must read as empty
                try:
                    os.pwrite(fd, bytes(RECORD_SIZE), offset)
                except OSError:
                    pass
                raise StoreIOError(f"short write ({written} octets) at slot {slot:#x} in {self.path}")
            with self._counter_lock:
                self._occupancy += 1
                self._inserts_since_sync += 1
                sync_due = self._inserts_since_sync >= self.config.metadata_sync_interval
        if sync_due:
            self._write_metadata()
        return InsertResult.INSERTED

    def lookup(self, slot: Union[SlotKey, int]) -> Optional[Account]:
        """One positioned read at 104 * (slot - a0)"""
        value = slot.value if isinstance(slot, SlotKey) else slot
        offset = self.offset_of(value)
        try:
            data = os.pread(self._require_fd(), RECORD_SIZE, offset)
        except OSError as e:
            raise StoreIOError(f"read failed at slot {value:#x} in {self.path}: {e}") from e
        self.read_count += 1

        if len(data) != RECORD_SIZE:
            raise StoreCorruptionError(f"short read of {len(data)} octets", slot=value)
        if data[0] == EMPTY_MARKER:
            return None
        try:
            account = Account.from_record(data, verify=self.paranoid)
        except ValueError as e:
            raise StoreCorruptionError(str(e), slot=value) from e
        if int(slot_digits(account.address, self.n_match), 16) != value:
            raise StoreCorruptionError(f"record address {account.address} belongs to another slot", slot=value)
        return account

    # ------------------------------------------------------------------
    # scanning

    def _iter_chunks(self) -> Iterator[Tuple[int, bytes]]:
        fd = self._require_fd()
        chunk = RECORD_SIZE * SCAN_CHUNK_RECORDS
        for offset in range(0, self.expected_size, chunk):
            try:
                data = os.pread(fd, min(chunk, self.expected_size - offset), offset)
            except OSError as e:
                raise StoreIOError(f"scan failed in {self.path}: {e}") from e
            yield offset // RECORD_SIZE, data

    def _scan_occupancy(self) -> int:
        total = 0
        for _, data in self._iter_chunks():
            heads = np.frombuffer(data, dtype=np.uint8)[::RECORD_SIZE]
            total += int(np.count_nonzero(heads))
        return total

    def occupancy(self, audit: bool = False) -> int:
        """Persisted counter; audit=True re-counts by full scan and cross-checks"""
        with self._counter_lock:
            counted = self._occupancy
        if audit:
            scanned = self._scan_occupancy()
            if scanned != counted:
                raise StoreCorruptionError(f"occupancy counter {counted} disagrees with scan {scanned} in {self.path}")
        return counted

    def iter_records(self) -> Iterator[Tuple[int, Account]]:
        for first_index, data in self._iter_chunks():
            heads = np.frombuffer(data, dtype=np.uint8)[::RECORD_SIZE]
            for index in np.flatnonzero(heads):
                start = int(index) * RECORD_SIZE
                slot = self.shard.a0 + first_index + int(index)
                try:
                    account = Account.from_record(data[start:start + RECORD_SIZE], verify=self.paranoid)
                except ValueError as e:
                    raise StoreCorruptionError(str(e), slot=slot) from e
                yield slot, account

    def fill_synthetic(self, count: int, seed: int = 0) -> int:
        """Fill up to ``count`` slots with synthetic records.

        Addresses carry the right slot digits but do not derive from their keys,
        so paranoid reads reject them. Used to build large stores quickly for
        latency measurements. Returns the number of records inserted.
        """
        target = min(count, self.shard.slots - self.occupancy())
        rng = np.random.default_rng(seed)
        inserted = 0
        while inserted < target:
            batch = rng.integers(self.shard.a0, self.shard.a1, size=min(65536, 2 * (target - inserted)))
            for slot in batch.tolist():
                if self._insert_at(slot, synthetic_record(slot, self.n_match, rng)) is InsertResult.INSERTED:
                    inserted += 1
                    if inserted == target:
                        break
        return inserted


def open_shard(shard: ShardFile, config: Optional[Config] = None, paranoid: Optional[bool] = None) -> ShardStore:
    """Create or open the record file for a shard"""
    return ShardStore(shard, config=config, paranoid=paranoid)


def synthetic_record(slot: int, n_match: int, rng: np.random.Generator) -> bytes:
    """A well-formed record for ``slot`` whose address is not derived from its key"""
    digits = f"{slot:0{n_match}x}"
    prefix_len = (n_match + 1) // 2
    middle_len = ADDRESS_HEX_LENGTH - n_match
    middle = rng.bytes((middle_len + 1) // 2).hex()[:middle_len]
    key = 0
    while not 1 <= key < SECP256K1_ORDER:
        key = int.from_bytes(rng.bytes(32), "big")
    address = digits[:prefix_len] + middle + digits[prefix_len:]
    return (address + f"{key:064x}").encode("ascii")


def record_slot(record: bytes, n_match: int) -> int:
    """Slot of an encoded record; ValueError unless it is 104 lowercase hex octets with a valid key"""
    if len(record) != RECORD_SIZE or not _RECORD_SYNTAX.fullmatch(record):
        raise ValueError(f"record must be {RECORD_SIZE} lowercase hex octets")
    if not 1 <= int(record[ADDRESS_HEX_LENGTH:], 16) < SECP256K1_ORDER:
        raise ValueError("record key outside [1, group order)")
    prefix_len, suffix_len = (n_match + 1) // 2, n_match // 2
    return int(record[:prefix_len] + record[ADDRESS_HEX_LENGTH - suffix_len:ADDRESS_HEX_LENGTH], 16)
