"""Fork tree with cumulative-weight fork choice."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator


@dataclass(frozen=True)
class ChainBlock:
    block_hash: bytes
    parent: bytes | None
    height: int
    weight: int = 1
    producer: str = ""
    timestamp: int = 0
    payload: Any = None


@dataclass
class TreeNode:
    block: ChainBlock
    cumulative: int
    children: list[bytes]
    votes: int = 0


class ForkTree:
    """All blocks ever seen, including losing branches (kept for audit)."""

    def __init__(self, genesis: ChainBlock):
        if genesis.parent is not None:
            raise ValueError("genesis has no parent")
        self.genesis = genesis.block_hash
        self.nodes: dict[bytes, TreeNode] = {genesis.block_hash: TreeNode(genesis, genesis.weight, [])}
        self.tips: set[bytes] = {genesis.block_hash}

    def __contains__(self, h: bytes) -> bool:
        return h in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)

    def add(self, block: ChainBlock) -> bool:
        """Insert ``block``; returns False if already present."""
        if block.block_hash in self.nodes:
            return False
        parent = self.nodes.get(block.parent)
        if parent is None:
            raise KeyError(f"unknown parent {block.parent!r}")
        if block.height != parent.block.height + 1:
            raise ValueError("height must be parent height + 1")
        self.nodes[block.block_hash] = TreeNode(block, parent.cumulative + block.weight, [])
        parent.children.append(block.block_hash)
        parent.votes += 1
        self.tips.discard(block.parent)
        self.tips.add(block.block_hash)
        return True

    def block(self, h: bytes) -> ChainBlock:
        return self.nodes[h].block

    def cumulative(self, h: bytes) -> int:
        return self.nodes[h].cumulative

    def height(self, h: bytes) -> int:
        return self.nodes[h].block.height

    def chain(self, tip: bytes) -> Iterator[ChainBlock]:
        """Blocks from ``tip`` back to genesis."""
        h: bytes | None = tip
        while h is not None:
            b = self.nodes[h].block
            yield b
            h = b.parent

    @property
    def main_tip(self) -> bytes:
        return fork_choice(self)

    def main_chain(self) -> set[bytes]:
        return {b.block_hash for b in self.chain(self.main_tip)}

    def discarded(self) -> set[bytes]:
        return set(self.nodes) - self.main_chain()

    def competing_tips(self, lead: int) -> set[bytes]:
        """Tips whose cumulative weight is within ``lead`` of the main tip."""
        best = self.cumulative(self.main_tip)
        return {t for t in self.tips if best - self.cumulative(t) < lead}


def fork_choice(tree: ForkTree) -> bytes:
    """Tip with the greatest cumulative weight; ties go to the lowest hash."""
    return min(tree.tips, key=lambda h: (-tree.nodes[h].cumulative, h))
