"""Hybrid volatile / non-volatile memory with capacity accounting."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import OutOfMemory


class RegionKind(str, Enum):
    VM = "VM"
    NVM = "NVM"


PURPOSES = frozenset({
    "stack", "heap", "working_copy", "temporary_copy",
    "persistent_copy", "shadow_copy", "metadata",
})
NVM_ONLY = frozenset({"persistent_copy", "shadow_copy", "metadata"})


@dataclass
class Region:
    kind: RegionKind
    capacity_bytes: int
    used_bytes: int = 0
    time_multiplier: float = 1.0
    energy_multiplier: float = 1.0


@dataclass
class Allocation:
    id: int
    region: RegionKind
    size_bytes: int
    owner: object
    purpose: str


class Memory:
    """Allocation bookkeeping plus the byte contents of each allocation.

    VM contents and allocations vanish on power failure; NVM survives.
    """

    def __init__(self, vm_bytes=8192, nvm_bytes=262144):
        self.regions = {
            RegionKind.VM: Region(RegionKind.VM, vm_bytes),
            RegionKind.NVM: Region(RegionKind.NVM, nvm_bytes),
        }
        self.allocs: dict[int, Allocation] = {}
        self.contents: dict[int, bytes] = {}
        self._next_id = 1

    def allocate(self, region, size, owner, purpose) -> Allocation:
        region = RegionKind(region)
        if size <= 0:
            raise ValueError("allocation size must be positive")
        if purpose not in PURPOSES:
            raise ValueError(f"unknown allocation purpose {purpose!r}")
        if purpose in NVM_ONLY and region is not RegionKind.NVM:
            raise ValueError(f"{purpose} allocations must live in NVM")
        reg = self.regions[region]
        if reg.used_bytes + size > reg.capacity_bytes:
            raise OutOfMemory(
                f"{region.value}: {size} bytes requested, "
                f"{reg.capacity_bytes - reg.used_bytes} free of {reg.capacity_bytes}")
        a = Allocation(self._next_id, region, size, owner, purpose)
        self._next_id += 1
        reg.used_bytes += size
        self.allocs[a.id] = a
        return a

    def free(self, alloc_id: int) -> None:
        a = self.allocs.pop(alloc_id, None)
        if a is None:
            return
        self.regions[a.region].used_bytes -= a.size_bytes
        self.contents.pop(alloc_id, None)

    def is_live(self, alloc_id) -> bool:
        return alloc_id in self.allocs

    def write(self, alloc_id: int, data: bytes) -> None:
        a = self.allocs[alloc_id]
        if len(data) > a.size_bytes:
            raise ValueError("write exceeds allocation size")
        self.contents[alloc_id] = bytes(data)

    def read(self, alloc_id: int) -> bytes:
        if alloc_id not in self.allocs:
            raise KeyError(f"allocation {alloc_id} is not live")
        return self.contents.get(alloc_id, b"")

    def set_owner(self, alloc_id: int, owner, purpose=None) -> None:
        a = self.allocs[alloc_id]
        a.owner = owner
        if purpose is not None:
            a.purpose = purpose

    def on_power_failure(self) -> None:
        for aid in [a.id for a in self.allocs.values() if a.region is RegionKind.VM]:
            del self.allocs[aid]
            self.contents.pop(aid, None)
        self.regions[RegionKind.VM].used_bytes = 0

    def nvm_image(self) -> dict[int, bytes]:
        return {aid: self.contents.get(aid, b"") for aid, a in self.allocs.items()
                if a.region is RegionKind.NVM}

    def check_accounting(self) -> None:
        for kind, reg in self.regions.items():
            live = sum(a.size_bytes for a in self.allocs.values() if a.region is kind)
            assert live == reg.used_bytes, (kind, live, reg.used_bytes)
            assert reg.used_bytes <= reg.capacity_bytes
