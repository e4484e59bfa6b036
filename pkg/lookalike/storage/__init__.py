"""
Storage package initialization
"""

from .base import InsertResult, ShardFile, SlotStore
from .shard_store import ShardStore, open_shard
from .slots import SlotKey, matches, slot_key

__all__ = ["InsertResult", "ShardFile", "SlotStore", "ShardStore", "open_shard", "SlotKey", "matches", "slot_key"]
