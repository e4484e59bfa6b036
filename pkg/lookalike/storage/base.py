"""
Base interface for slot stores
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Optional, Tuple, Union

from ..core.accounts import Account, AddressLike
from ..core.errors import ConfigurationError
from .slots import SlotKey, check_n_match, slot_count, slot_key


class InsertResult(Enum):
    """Outcome of a store insert"""

    INSERTED = "inserted"
    SLOT_OCCUPIED = "slot_occupied"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class ShardFile:
    """A contiguous slot range [a0, a1) and the file holding it"""

    path: Path
    a0: int
    a1: int
    n_match: int

    def __post_init__(self):
        object.__setattr__(self, "path", Path(self.path))
        check_n_match(self.n_match, max_match=40)
        if not 0 <= self.a0 < self.a1 <= slot_count(self.n_match):
            raise ConfigurationError(
                f"slot range [{self.a0:#x}, {self.a1:#x}) must satisfy 0 <= a0 < a1 <= 16^{self.n_match}"
            )

    @property
    def slots(self) -> int:
        return self.a1 - self.a0

    def owns(self, slot: int) -> bool:
        return self.a0 <= slot < self.a1


class SlotStore(ABC):
    """Base class for stores that hold one account per slot"""

    def __init__(self, shard: ShardFile):
        self.shard = shard

    @property
    def n_match(self) -> int:
        return self.shard.n_match

    @abstractmethod
    def insert(self, account: Account) -> InsertResult:
        """Store an account unless its slot is taken or foreign"""

    @abstractmethod
    def insert_record(self, record: bytes) -> InsertResult:
        """Store an encoded record; ValueError if it is malformed"""

    @abstractmethod
    def lookup(self, slot: Union[SlotKey, int]) -> Optional[Account]:
        """Return the account in a slot, or None for an empty slot"""

    @abstractmethod
    def occupancy(self, audit: bool = False) -> int:
        """Number of occupied slots"""

    @abstractmethod
    def iter_records(self) -> Iterator[Tuple[int, Account]]:
        """Yield (slot, account) for every occupied slot"""

    @abstractmethod
    def close(self) -> None:
        """Release the store"""

    def lookup_address(self, address: AddressLike) -> Optional[Account]:
        """Look up the slot an address maps to"""
        return self.lookup(slot_key(address, self.n_match, max_match=40))

    def coverage(self) -> float:
        """Occupied fraction of the owned range"""
        return self.occupancy() / self.shard.slots

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
