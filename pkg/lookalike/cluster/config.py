"""
Cluster layout: which shard owns which slot range, and where it listens
"""

from bisect import bisect_right
from pathlib import Path
from typing import Iterable, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from ..core.errors import ConfigurationError
from ..storage.base import ShardFile
from ..storage.slots import SlotKey

DEFAULT_HIT_LOG = "hits.log"


class ShardSpec(BaseModel):
    """One shard: its endpoints, slot range and record file"""

    model_config = ConfigDict(frozen=True)

    shard_id: int = Field(ge=0)
    host: str = "127.0.0.1"
    query_port: int = Field(ge=0, le=65535)
    transfer_port: int = Field(ge=0, le=65535)
    a0: int = Field(ge=0)
    a1: int = Field(ge=1)
    path: Path

    def shard_file(self, n_match: int) -> ShardFile:
        return ShardFile(path=self.path, a0=self.a0, a1=self.a1, n_match=n_match)

    def owns(self, slot: int) -> bool:
        return self.a0 <= slot < self.a1

    def to_line(self) -> str:
        return f"{self.shard_id} {self.host} {self.query_port} {self.transfer_port} {self.a0:x} {self.a1:x} {self.path}"


class ClusterConfig(BaseModel):
    """Shards whose ranges partition [0, 16^N) exactly"""

    n_match: int = Field(ge=1, le=40)
    shards: List[ShardSpec]
    hit_log: Path = Path(DEFAULT_HIT_LOG)

    _starts: List[int] = PrivateAttr(default_factory=list)

    @model_validator(mode="after")
    def _check_partition(self) -> "ClusterConfig":
        if not self.shards:
            raise ValueError("cluster needs at least one shard")
        ids = [s.shard_id for s in self.shards]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate shard ids: {ids}")

        ordered = sorted(self.shards, key=lambda s: s.a0)
        expected = 0
        for shard in ordered:
            if shard.a0 >= shard.a1:
                raise ValueError(f"shard {shard.shard_id} has empty range [{shard.a0:#x}, {shard.a1:#x})")
            if shard.a0 > expected:
                raise ValueError(f"gap in slot space: [{expected:#x}, {shard.a0:#x}) has no owner")
            if shard.a0 < expected:
                raise ValueError(f"shard {shard.shard_id} overlaps the range ending at {expected:#x}")
            expected = shard.a1
        if expected != 16**self.n_match:
            raise ValueError(f"shards cover up to {expected:#x}, slot space ends at {16 ** self.n_match:#x}")

        self.shards = ordered
        self._starts = [s.a0 for s in ordered]
        return self

    # ------------------------------------------------------------------

    def route(self, slot: Union[SlotKey, int]) -> ShardSpec:
        """The unique shard whose [a0, a1) contains the slot"""
        value = slot.value if isinstance(slot, SlotKey) else slot
        if not 0 <= value < 16**self.n_match:
            raise ValueError(f"slot {value:#x} outside [0, 16^{self.n_match})")
        return self.shards[bisect_right(self._starts, value) - 1]

    def shard(self, shard_id: int) -> ShardSpec:
        for spec in self.shards:
            if spec.shard_id == shard_id:
                return spec
        raise ConfigurationError(f"no shard with id {shard_id}")

    def peers(self, shard_id: int) -> List[ShardSpec]:
        return [s for s in self.shards if s.shard_id != shard_id]

    def with_ports(self, shard_id: int, query_port: Optional[int] = None, transfer_port: Optional[int] = None) -> "ClusterConfig":
        """Copy with a shard's ports replaced, e.g. after binding port 0"""
        update = {}
        if query_port is not None:
            update["query_port"] = query_port
        if transfer_port is not None:
            update["transfer_port"] = transfer_port
        shards = [s.model_copy(update=update) if s.shard_id == shard_id else s for s in self.shards]
        return ClusterConfig.build(self.n_match, shards, hit_log=self.hit_log)

    # ------------------------------------------------------------------

    @classmethod
    def build(cls, n_match: int, shards: Iterable[ShardSpec], hit_log: Union[str, Path] = DEFAULT_HIT_LOG) -> "ClusterConfig":
        try:
            return cls(n_match=n_match, shards=list(shards), hit_log=Path(hit_log))
        except ValidationError as e:
            raise ConfigurationError(_describe(e)) from e

    @classmethod
    def single(cls, n_match: int, path: Union[str, Path], host: str = "127.0.0.1", query_port: int = 0, transfer_port: int = 0) -> "ClusterConfig":
        """One shard owning the whole slot space"""
        spec = ShardSpec(shard_id=0, host=host, query_port=query_port, transfer_port=transfer_port, a0=0, a1=16**n_match, path=Path(path))
        return cls.build(n_match, [spec], hit_log=Path(path).with_name(DEFAULT_HIT_LOG))

    @classmethod
    def split_evenly(
        cls,
        n_match: int,
        count: int,
        directory: Union[str, Path],
        host: str = "127.0.0.1",
        base_port: int = 0,
    ) -> "ClusterConfig":
        """``count`` shards with near-equal contiguous ranges; ports 0 mean pick at bind time"""
        directory = Path(directory)
        space = 16**n_match
        if not 1 <= count <= space:
            raise ConfigurationError(f"cannot split {space} slots into {count} shards")
        bounds = [space * i // count for i in range(count + 1)]
        specs = [
            ShardSpec(
                shard_id=i,
                host=host,
                query_port=base_port + 2 * i if base_port else 0,
                transfer_port=base_port + 2 * i + 1 if base_port else 0,
                a0=bounds[i],
                a1=bounds[i + 1],
                path=directory / f"shard{i}.dat",
            )
            for i in range(count)
        ]
        return cls.build(n_match, specs, hit_log=directory / DEFAULT_HIT_LOG)

    @classmethod
    def parse(cls, text: str, base_dir: Optional[Path] = None) -> "ClusterConfig":
        """Parse the line format.

        ``N <n>`` header, optional ``hitlog <path>``, then one shard per line:
        ``id host query_port transfer_port a0_hex a1_hex path``. ``#`` starts a comment.
        """
        base_dir = base_dir or Path(".")
        n_match: Optional[int] = None
        hit_log = Path(DEFAULT_HIT_LOG)
        specs: List[ShardSpec] = []

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                if fields[0] == "N":
                    if len(fields) != 2:
                        raise ValueError("header must be 'N <n_match>'")
                    n_match = int(fields[1])
                elif fields[0] == "hitlog":
                    if len(fields) != 2:
                        raise ValueError("expected 'hitlog <path>'")
                    hit_log = Path(fields[1])
                else:
                    if len(fields) != 7:
                        raise ValueError("shard line needs: id host query_port transfer_port a0_hex a1_hex path")
                    shard_id, host, qport, tport, a0, a1, path = fields
                    specs.append(
                        ShardSpec(
                            shard_id=int(shard_id),
                            host=host,
                            query_port=int(qport),
                            transfer_port=int(tport),
                            a0=int(a0, 16),
                            a1=int(a1, 16),
                            path=_resolve(Path(path), base_dir),
                        )
                    )
            except (ValueError, ValidationError) as e:
                detail = _describe(e) if isinstance(e, ValidationError) else str(e)
                raise ConfigurationError(f"line {lineno}: {detail}") from e

        if n_match is None:
            raise ConfigurationError("missing 'N <n_match>' header line")
        return cls.build(n_match, specs, hit_log=_resolve(hit_log, base_dir))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ClusterConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read cluster config {path}: {e}") from e
        return cls.parse(text, base_dir=path.parent)

    def dump(self) -> str:
        lines = [f"N {self.n_match}", f"hitlog {self.hit_log}"]
        lines.extend(spec.to_line() for spec in self.shards)
        return "\n".join(lines) + "\n"

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.dump(), encoding="utf-8")


def _resolve(path: Path, base_dir: Path) -> Path:
    return path if path.is_absolute() else base_dir / path


def _describe(error: ValidationError) -> str:
    return "; ".join(err["msg"] for err in error.errors())
