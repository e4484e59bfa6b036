"""
Slot keys: the integer index formed from an address's prefix and suffix digits
"""

from dataclasses import dataclass
from typing import Tuple

from ..core.accounts import ADDRESS_HEX_LENGTH, AddressLike, normalize_address
from ..core.errors import ConfigurationError

DEFAULT_MAX_MATCH = 16


@dataclass(frozen=True, order=True)
class SlotKey:
    """Slot index in [0, 16^n_match)"""

    n_match: int
    value: int

    def __post_init__(self):
        if not 0 <= self.value < 16 ** self.n_match:
            raise ValueError(f"slot {self.value:#x} outside [0, 16^{self.n_match})")

    def __str__(self) -> str:
        return f"{self.value:0{self.n_match}x}"


def split_lengths(n_match: int) -> Tuple[int, int]:
    """Prefix and suffix digit counts: ceil(N/2) and floor(N/2)"""
    return (n_match + 1) // 2, n_match // 2


def check_n_match(n_match: int, max_match: int = DEFAULT_MAX_MATCH) -> None:
    if not 1 <= n_match <= min(max_match, ADDRESS_HEX_LENGTH):
        raise ConfigurationError(f"n_match must be between 1 and {min(max_match, ADDRESS_HEX_LENGTH)}, got {n_match}")


def slot_digits(address: AddressLike, n_match: int) -> str:
    """The matched prefix digits followed by the matched suffix digits"""
    text = normalize_address(address).value
    prefix_len, suffix_len = split_lengths(n_match)
    return text[:prefix_len] + (text[-suffix_len:] if suffix_len else "")


def slot_key(address: AddressLike, n_match: int, max_match: int = DEFAULT_MAX_MATCH) -> SlotKey:
    """Slot index of an address at N matched symbols (case-insensitive)"""
    check_n_match(n_match, max_match)
    return SlotKey(n_match, int(slot_digits(address, n_match), 16))


def matches(original: AddressLike, candidate: AddressLike, n_match: int) -> bool:
    """True iff both addresses agree on the first ceil(N/2) and last floor(N/2) digits"""
    return slot_digits(original, n_match) == slot_digits(candidate, n_match)


def slot_count(n_match: int) -> int:
    return 16 ** n_match
