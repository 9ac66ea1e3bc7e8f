"""Block-spec ladders such as "32x10,16x10,8x10,4x10,1x10"."""
from __future__ import annotations

from dataclasses import dataclass

from ..errors import BlockSpecError


@dataclass(frozen=True)
class BlockSpec:
    """Ordered (resolution, block_count) ladder."""
    ladder: tuple[tuple[int, int], ...]

    @property
    def resolutions(self) -> list[int]:
        return [res for res, _ in self.ladder]

    @property
    def total_blocks(self) -> int:
        return sum(count for _, count in self.ladder)

    @property
    def layer_resolutions(self) -> list[int]:
        """Resolution of every block, in execution order."""
        return [res for res, count in self.ladder for _ in range(count)]

    @property
    def increasing(self) -> bool:
        return len(self.ladder) < 2 or self.ladder[1][0] > self.ladder[0][0]

    def count_at(self, resolution: int) -> int:
        return dict(self.ladder).get(resolution, 0)

    def __str__(self) -> str:
        return ",".join(f"{res}x{count}" for res, count in self.ladder)

    def __len__(self) -> int:
        return len(self.ladder)


def _parse_token(token: str) -> tuple[int, int]:
    parts = token.strip().split("x")
    if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
        raise BlockSpecError(f"Malformed block-spec token: {token!r} (expected RxC)")
    res, count = int(parts[0]), int(parts[1])
    if res < 1:
        raise BlockSpecError(f"Resolution must be >= 1 in {token!r}")
    if count < 1:
        raise BlockSpecError(f"Block count must be >= 1 in {token!r}")
    return res, count


def parse_block_spec(text: str) -> BlockSpec:
    """Parse and validate a comma-separated ladder.

    Resolutions must be strictly monotone (either direction) and each must
    divide its coarser neighbour so pooling/upsampling factors are integers.
    """
    if not text or not text.strip():
        raise BlockSpecError("Empty block spec")
    ladder = tuple(_parse_token(tok) for tok in text.split(","))
    if len(ladder) > 1:
        increasing = ladder[1][0] > ladder[0][0]
        for (prev, _), (nxt, _) in zip(ladder, ladder[1:]):
            if (nxt > prev) != increasing or nxt == prev:
                raise BlockSpecError(f"Resolutions not strictly monotone in {text!r}: {prev} -> {nxt}")
            fine, coarse = max(prev, nxt), min(prev, nxt)
            if fine % coarse:
                raise BlockSpecError(f"Non-integer scale factor {prev} -> {nxt} in {text!r}")
    return BlockSpec(ladder=ladder)
