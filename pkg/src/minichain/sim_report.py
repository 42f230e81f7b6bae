"""
This file is part of the minichain distribution.

Copyright (C) 2026 minichain contributors

This program is free software: you can redistribute it and/or modify it under the terms of the
GNU General Public License as published by the Free Software Foundation, version 3.

This program is distributed in the hope that it will be useful, but WITHOUT ANY WARRANTY;
without even the implied warranty of MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.
See the GNU General Public License for more details.

You should have received a copy of the GNU General Public License along with this program.
If not, see <http://www.gnu.org/licenses/>.
"""

from dataclasses import dataclass, field

from minichain.crypto import Digest32, hash256

# Decimal places for simulated times in text records
TIME_DECIMALS = 6


def format_value(value) -> str:
    """Stable text form of a record value"""
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{TIME_DECIMALS}f}"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(item) for item in value)
    return str(value)


def _tree_value(value):
    if isinstance(value, float):
        return round(value, TIME_DECIMALS)
    if isinstance(value, (list, tuple)):
        return [_tree_value(item) for item in value]
    return value


@dataclass(frozen=True)
class NodeSummary:
    node_id: int
    role: str
    tip_hash: str
    height: int
    utxo_digest: str
    mempool_size: int
    blocks_mined: int

    # Simulated time of the last tip change
    tip_changed_at: float

    def to_tree(self) -> dict:
        return {
            "node_id": self.node_id,
            "role": self.role,
            "tip_hash": self.tip_hash,
            "height": self.height,
            "utxo_digest": self.utxo_digest,
            "mempool_size": self.mempool_size,
            "blocks_mined": self.blocks_mined,
            "tip_changed_at": _tree_value(self.tip_changed_at),
        }


@dataclass(frozen=True)
class RetargetRecord:
    height: int
    time: int

    # Time of the first block in the measured window
    window_start: int
    old_target: int
    new_target: int

    @property
    def difficulty_ratio(self) -> float:
        """
        Returns:
            float: new difficulty / old difficulty (old_target / new_target)
        """
        return self.old_target / self.new_target


@dataclass
class SimReport:
    seed: int
    duration: float
    end_time: float
    nodes: list[NodeSummary]
    blocks_mined: int
    active_height: int
    orphan_count: int

    # Simulated time between consecutive active-chain blocks, from height 1
    block_intervals: list[float]

    # txid hex -> seconds from broadcast to the confirming block
    confirmation_times: dict[str, float]
    retargets: list[RetargetRecord]
    converged: bool
    last_block_time: float
    adversary: dict = field(default_factory=dict)

    @property
    def mean_interval(self) -> float:
        return sum(self.block_intervals) / len(self.block_intervals) if self.block_intervals else 0.0

    @property
    def converged_at(self) -> float:
        """
        Returns:
            float: latest tip change among honest nodes
        """
        return max((node.tip_changed_at for node in self.nodes if node.role == "honest"), default=0.0)

    def to_records(self) -> list[str]:
        """key=value lines in a fixed order"""
        records = [
            f"seed={self.seed}",
            f"duration={format_value(self.duration)}",
            f"end_time={format_value(self.end_time)}",
            f"blocks_mined={self.blocks_mined}",
            f"active_height={self.active_height}",
            f"orphan_count={self.orphan_count}",
            f"mean_interval={format_value(self.mean_interval)}",
            f"converged={format_value(self.converged)}",
            f"converged_at={format_value(self.converged_at)}",
            f"last_block_time={format_value(self.last_block_time)}",
        ]
        for node in self.nodes:
            prefix = f"node.{node.node_id}"
            records.extend(
                [
                    f"{prefix}.role={node.role}",
                    f"{prefix}.tip={node.tip_hash}",
                    f"{prefix}.height={node.height}",
                    f"{prefix}.utxo_digest={node.utxo_digest}",
                    f"{prefix}.mempool_size={node.mempool_size}",
                    f"{prefix}.blocks_mined={node.blocks_mined}",
                    f"{prefix}.tip_changed_at={format_value(node.tip_changed_at)}",
                ]
            )
        records.append(f"block_intervals={format_value(self.block_intervals)}")
        for txid, seconds in self.confirmation_times.items():
            records.append(f"confirmation.{txid}={format_value(seconds)}")
        for retarget in self.retargets:
            records.append(
                f"retarget.{retarget.height}=time:{retarget.time},window_start:{retarget.window_start}"
                f",old:{retarget.old_target:064x},new:{retarget.new_target:064x}"
            )
        for key, value in self.adversary.items():
            records.append(f"adversary.{key}={format_value(value)}")
        return records

    def to_tree(self) -> dict:
        return {
            "seed": self.seed,
            "duration": _tree_value(self.duration),
            "end_time": _tree_value(self.end_time),
            "blocks_mined": self.blocks_mined,
            "active_height": self.active_height,
            "orphan_count": self.orphan_count,
            "mean_interval": _tree_value(self.mean_interval),
            "converged": self.converged,
            "converged_at": _tree_value(self.converged_at),
            "last_block_time": _tree_value(self.last_block_time),
            "nodes": [node.to_tree() for node in self.nodes],
            "block_intervals": _tree_value(self.block_intervals),
            "confirmation_times": {txid: _tree_value(seconds) for txid, seconds in self.confirmation_times.items()},
            "retargets": [
                {
                    "height": retarget.height,
                    "time": retarget.time,
                    "window_start": retarget.window_start,
                    "difficulty_ratio": _tree_value(retarget.difficulty_ratio),
                    "old_target": f"{retarget.old_target:064x}",
                    "new_target": f"{retarget.new_target:064x}",
                }
                for retarget in self.retargets
            ],
            "adversary": {key: _tree_value(value) for key, value in self.adversary.items()},
        }

    def digest(self) -> Digest32:
        return hash256("\n".join(self.to_records()).encode("utf-8"))


@dataclass
class AttackReport:
    """Outcome of one double-spend attempt"""

    seed: int
    confirmations: int
    attacker_rate: float
    success: bool

    # "success", "failed" or "undecided" (duration ran out)
    outcome: str

    # "merchant", "attacker" or "none": whose transaction the final honest chain holds
    confirmed_spender: str
    merchant_txid: str
    attacker_txid: str

    # Blocks mined on each branch after the fork point
    honest_length: int
    private_length: int
    merchant_accepted_at: float | None
    released_at: float | None
    end_time: float
    active_height: int

    def to_records(self) -> list[str]:
        return [f"{key}={format_value(value)}" for key, value in self._fields()]

    def _fields(self) -> list[tuple[str, object]]:
        return [
            ("seed", self.seed),
            ("confirmations", self.confirmations),
            ("attacker_rate", self.attacker_rate),
            ("success", self.success),
            ("outcome", self.outcome),
            ("confirmed_spender", self.confirmed_spender),
            ("merchant_txid", self.merchant_txid),
            ("attacker_txid", self.attacker_txid),
            ("honest_length", self.honest_length),
            ("private_length", self.private_length),
            ("merchant_accepted_at", self.merchant_accepted_at),
            ("released_at", self.released_at),
            ("end_time", self.end_time),
            ("active_height", self.active_height),
        ]

    def to_tree(self) -> dict:
        return {key: _tree_value(value) for key, value in self._fields()}

    def digest(self) -> Digest32:
        return hash256("\n".join(self.to_records()).encode("utf-8"))
