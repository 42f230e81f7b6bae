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

import copy
import heapq
import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum

import networkx as nx
import numpy as np

from minichain.block_tree import AcceptResult, AcceptStatus, BlockTree, accept_block
from minichain.chain_model import (
    SIMNET_PARAMS,
    Block,
    ChainParams,
    Script,
    Transaction,
    bits_to_target,
    make_genesis,
    params_by_name,
)
from minichain.consensus import (
    BlockValidationError,
    ChainState,
    TxValidationError,
    next_bits,
    validate_and_connect,
)
from minichain.crypto import Digest32
from minichain.errors import ValidationError
from minichain.mempool import Mempool
from minichain.miner import build_block
from minichain.sim_report import AttackReport, NodeSummary, RetargetRecord, SimReport
from minichain.wallet import InsufficientFundsError, Wallet

# Mining tick as a fraction of target_spacing
TICK_FRACTION = 0.1

# After duration, honest miners keep going (at most this many spacings) until every node shares one tip
SETTLE_SPACINGS = 100

# Initial difficulty above this makes nonce search too slow for a simulation
MAX_SIM_DIFFICULTY = 1 << 20

TOPOLOGIES = ("complete", "ring", "star")
ADVERSARIES = ("none", "double-spend", "withhold", "sybil")

# Wallet labels used by simulated nodes
MINER_LABEL = "miner"
LOOT_LABEL = "loot"


class EventKind(Enum):
    TICK = "tick"
    BLOCK = "block"
    TX = "tx"
    TRAFFIC = "traffic"
    RATE_CHANGE = "rate-change"


@dataclass(frozen=True)
class SimEvent:
    deliver_at: float

    # Insertion sequence, breaks ties between equal deliver_at
    seq: int
    target: int
    kind: EventKind
    payload: Block | Transaction | None = None
    sender: int | None = None
    tick_index: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    nodes: int = 4
    topology: str = "complete"
    latency: float = 0.1

    # Attempts per second, one per honest node. Empty: equal shares of one block per target_spacing at max_target
    hash_rates: tuple[float, ...] = ()
    duration: float = 100.0
    params: ChainParams = SIMNET_PARAMS
    adversary: str = "none"

    # double-spend
    confirmations: int = 1
    give_up_lead: int = 6

    # double-spend and withhold: adversary share of the total hash rate
    attacker_rate: float = 0.1

    # withhold
    lead: int = 2

    # sybil
    identities: int = 5

    # Background payments, 0 disables them
    tx_interval: float = 0.0
    fee: int = 1000
    rate_change_time: float | None = None
    rate_change_factor: float = 2.0

    @property
    def tick_len(self) -> float:
        return TICK_FRACTION * self.params.target_spacing

    @property
    def honest_rates(self) -> tuple[float, ...]:
        if self.hash_rates:
            return self.hash_rates
        total = (1 << 256) / (self.params.max_target + 1) / self.params.target_spacing
        return tuple(total / self.nodes for _ in range(self.nodes))

    @property
    def adversary_hash_rate(self) -> float:
        """
        Returns:
            float: rate giving the adversary attacker_rate of the total
        """
        return sum(self.honest_rates) * self.attacker_rate / (1.0 - self.attacker_rate)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)

    def validate(self) -> None:
        """
        Raises:
            ValidationError: invalid topology, adversary, rates or durations
        """
        if not 0 <= self.seed < 1 << 64:
            raise ValidationError(f"Seed must fit into 64 bits, got {self.seed}")
        if self.nodes < 1:
            raise ValidationError("At least one node is required")
        if self.topology not in TOPOLOGIES:
            raise ValidationError(f"Unknown topology {self.topology!r}. Available: {', '.join(TOPOLOGIES)}")
        if self.adversary not in ADVERSARIES:
            raise ValidationError(f"Unknown adversary {self.adversary!r}. Available: {', '.join(ADVERSARIES)}")
        if self.latency < 0:
            raise ValidationError("Latency must not be negative")
        if self.duration <= 0:
            raise ValidationError("Duration must be positive")
        if len(self.honest_rates) != self.nodes:
            raise ValidationError(f"{len(self.honest_rates)} hash rates given for {self.nodes} nodes")
        if any(rate <= 0 for rate in self.honest_rates):
            raise ValidationError("Hash rates must be positive")
        if (1 << 256) // (self.params.max_target + 1) > MAX_SIM_DIFFICULTY:
            raise ValidationError("max_target is too small to simulate, use simnet parameters")
        if self.adversary in ("double-spend", "withhold") and not 0 < self.attacker_rate < 1:
            raise ValidationError("attacker_rate is a share of total hash rate, must be in (0, 1)")
        if self.confirmations < 0 or self.give_up_lead < 1 or self.lead < 1 or self.identities < 0:
            raise ValidationError("confirmations, give_up_lead, lead and identities are out of range")
        if self.tx_interval < 0 or self.fee < 0:
            raise ValidationError("tx_interval and fee must not be negative")
        if self.rate_change_factor <= 0:
            raise ValidationError("rate_change_factor must be positive")

        rates = list(self.honest_rates)
        if self.adversary in ("double-spend", "withhold"):
            rates.append(self.adversary_hash_rate)
        factor = max(1.0, self.rate_change_factor) if self.rate_change_time is not None else 1.0
        for rate in rates:
            if success_probability(rate * factor, self.tick_len, self.params.max_target) >= 1.0:
                raise ValidationError(f"Hash rate {rate * factor} is too high for a {self.tick_len}s tick")

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "ScenarioConfig":
        """Builds config from scenario file key=value pairs

        Raises:
            ValidationError: unknown key or malformed value
        """
        values = dict(values)
        params = params_by_name(values.pop("params", "simnet"))
        overrides = {}
        for param in fields(ChainParams):
            if param.name != "network_magic" and param.name in values:
                overrides[param.name] = _parse_number(param.name, values.pop(param.name), lambda text: int(text, 0))
        if overrides:
            params = replace(params, **overrides)

        converters = {
            "seed": int,
            "nodes": int,
            "topology": str,
            "latency": float,
            "hash_rates": lambda text: tuple(float(item) for item in text.split(",") if item.strip()),
            "duration": float,
            "adversary": str,
            "confirmations": int,
            "give_up_lead": int,
            "attacker_rate": float,
            "lead": int,
            "identities": int,
            "tx_interval": float,
            "fee": int,
            "rate_change_time": float,
            "rate_change_factor": float,
        }
        kwargs = {}
        for key, text in values.items():
            if key not in converters:
                raise ValidationError(f"Unknown scenario key {key!r}")
            kwargs[key] = _parse_number(key, text, converters[key])
        return cls(params=params, **kwargs)


def _parse_number(key: str, text: str, converter):
    try:
        return converter(text.strip())
    except ValueError as e:
        raise ValidationError(f"Bad value {text!r} for {key}") from e


def success_probability(hash_rate: float, tick_len: float, target: int) -> float:
    """Chance that one tick finds a block: hash_rate * tick_len * (target + 1) / 2^256"""
    return hash_rate * tick_len * (target + 1) / (1 << 256)


def catch_up_probability(attacker_share: float, confirmations: int) -> float:
    """Chance that an attacker with attacker_share of the hash rate ever draws level with the honest
    chain once the payment has confirmations blocks on top of it. The attacker's progress while the
    honest chain mines those blocks is taken as Poisson

    Raises:
        ValidationError: attacker_share outside (0, 1) or negative confirmations
    """
    if not 0 < attacker_share < 1 or confirmations < 0:
        raise ValidationError(f"Bad attacker share {attacker_share} or confirmations {confirmations}")
    honest_share = 1.0 - attacker_share
    if attacker_share >= honest_share:
        return 1.0
    ratio = attacker_share / honest_share
    expected = confirmations * ratio
    poisson = math.exp(-expected)
    probability = 1.0
    for progress in range(confirmations + 1):
        if progress:
            poisson *= expected / progress
        probability -= poisson * (1.0 - ratio ** (confirmations - progress))
    return probability


def build_topology(kind: str, count: int) -> nx.Graph:
    """
    Args:
        kind (str): "complete", "ring" or "star" (node 0 is the hub)
        count (int): number of nodes

    Returns:
        nx.Graph: undirected graph over nodes 0..count-1
    """
    if kind == "complete" or count < 3:
        return nx.complete_graph(count)
    if kind == "ring":
        return nx.cycle_graph(count)
    if kind == "star":
        return nx.star_graph(count - 1)
    raise ValidationError(f"Unknown topology {kind!r}")


class SimNode:
    def __init__(self, node_id: int, genesis: Block, params: ChainParams, hash_rate: float, wallet: Wallet, role: str):
        """Full node (and miner if hash_rate > 0) inside the simulator"""
        self.node_id = node_id
        self.role = role
        self.hash_rate = hash_rate
        self.wallet = wallet
        self.state = ChainState(params, genesis)
        self.tree = BlockTree(genesis)
        self.mempool = Mempool()
        self.peers: list[int] = []

        # Inventory: items seen, items relayed, items each peer is known to have
        self.known: set[Digest32] = {genesis.hash}
        self.relayed: set[Digest32] = set()
        self.peer_known: dict[int, set[Digest32]] = {}

        self.blocks_mined = 0
        self.tip_changed_at = 0.0

    @property
    def relays(self) -> bool:
        return self.role == "honest"

    @property
    def mining_state(self) -> ChainState:
        return self.state

    @property
    def script_pubkey(self) -> Script:
        return self.wallet.script_pubkey(MINER_LABEL)

    def candidates(self) -> list[Transaction]:
        return self.mempool.transactions()

    def receive_block(self, block: Block, now: float) -> AcceptResult | None:
        """
        Returns:
            AcceptResult | None: None if the block was rejected
        """
        try:
            result = accept_block(self.tree, self.state, block, int(now))
        except BlockValidationError as e:
            logging.debug(f"Node {self.node_id} rejected block {block.hash.hex()}: {e}")
            return None
        if result.connected or result.disconnected:
            self.mempool.reconcile(self.state, int(now), result.disconnected, result.connected)
            self.tip_changed_at = now
        return result

    def receive_tx(self, tx: Transaction, now: float) -> bool:
        try:
            self.mempool.accept(tx, self.state, int(now))
        except TxValidationError as e:
            logging.debug(f"Node {self.node_id} rejected tx {tx.txid.hex()}: {e}")
            return False
        return True

    def tx_depth(self, txid: Digest32, floor_height: int = 0) -> int:
        """
        Returns:
            int: confirmations of txid on the active chain above floor_height (0 if absent)
        """
        for height in range(self.state.height, floor_height, -1):
            entry = self.tree.get(self.state.hash_at(height))
            if entry is not None and any(tx.txid == txid for tx in entry.block.transactions):
                return self.state.height - height + 1
        return 0


class PrivateMiner(SimNode):
    """Adversary that can mine on a private copy of its chain"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.private_state: ChainState | None = None
        self.private_blocks: list[Block] = []
        self.private_txs: list[Transaction] = []
        self.fork_height = 0

    @property
    def mining_state(self) -> ChainState:
        return self.private_state if self.private_state is not None else self.state

    @property
    def is_private(self) -> bool:
        return self.private_state is not None

    @property
    def private_length(self) -> int:
        return len(self.private_blocks)

    @property
    def public_length(self) -> int:
        """
        Returns:
            int: blocks on the public active chain above the fork point
        """
        return self.state.height - self.fork_height

    def candidates(self) -> list[Transaction]:
        return list(self.private_txs) if self.is_private else self.mempool.transactions()

    def begin_private(self, transactions: list[Transaction] | None = None) -> None:
        self.private_state = copy.deepcopy(self.state)
        self.private_blocks = []
        self.private_txs = list(transactions or [])
        self.fork_height = self.state.height

    def add_private(self, block: Block, now: float) -> None:
        validate_and_connect(self.private_state, block, int(now))
        self.private_blocks.append(block)
        included = {tx.txid for tx in block.transactions}
        self.private_txs = [tx for tx in self.private_txs if tx.txid not in included]

    def end_private(self) -> list[Block]:
        """Leaves private mode

        Returns:
            list[Block]: private blocks (not yet published)
        """
        blocks = self.private_blocks
        self.private_state = None
        self.private_blocks = []
        self.private_txs = []
        return blocks


def miner_tick(node: SimNode, rng: np.random.Generator, now: float, tick_len: float) -> Block | None:
    """One Bernoulli mining trial on node's mining chain. Always draws exactly one number from rng

    Args:
        node (SimNode): miner
        rng (np.random.Generator): simulation RNG
        now (float): simulated time (block time is its floor)
        tick_len (float): tick length in seconds

    Returns:
        Block | None: solved block (not yet connected anywhere) or None
    """
    state = node.mining_state
    target = bits_to_target(next_bits(state))
    probability = min(1.0, success_probability(node.hash_rate, tick_len, target))
    if rng.random() >= probability:
        return None
    return build_block(state, node.candidates(), node.script_pubkey, int(now))


class AttackPhase(Enum):
    WAITING = "waiting"
    MINING_PRIVATE = "mining-private"
    GAVE_UP = "gave-up"
    RELEASED = "released"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


@dataclass
class DoubleSpendAttack:
    phase: AttackPhase = AttackPhase.WAITING
    merchant_tx: Transaction | None = None
    attacker_tx: Transaction | None = None
    fork_height: int = 0
    merchant_accepted_at: float | None = None
    released_at: float | None = None
    honest_length: int = 0
    private_length: int = 0

    @property
    def resolved(self) -> bool:
        return self.phase in (AttackPhase.SUCCEEDED, AttackPhase.FAILED)


@dataclass
class WithholdStats:
    publications: int = 0
    abandoned: int = 0


class Simulator:
    def __init__(self, config: ScenarioConfig) -> None:
        """Discrete-event network simulation. Events run in (deliver_at, seq) order, so the
        report is a pure function of config

        Args:
            config (ScenarioConfig): scenario

        Raises:
            ValidationError: invalid scenario
        """
        config.validate()
        self._config = config
        self._params = config.params
        self._rng = np.random.default_rng(config.seed)
        self._tick_len = config.tick_len
        self._queue: list[tuple[float, int, SimEvent]] = []
        self._seq = 0
        self._stopped = False
        self._blocks_in_flight = 0
        self.now = 0.0

        # Block hash -> (creation time, miner id), genesis included
        self._created: dict[Digest32, tuple[float, int]] = {}
        self._published: set[Digest32] = set()
        self._tx_created: dict[Digest32, float] = {}

        self.graph = build_topology(config.topology, config.nodes)
        honest_count = config.nodes
        adversary_id = honest_count if config.adversary in ("double-spend", "withhold") else None
        sybil_ids = (
            list(range(honest_count, honest_count + config.identities)) if config.adversary == "sybil" else []
        )

        wallets = [self._make_wallet(node_id) for node_id in range(honest_count)]
        adversary_wallet = self._make_wallet(adversary_id) if adversary_id is not None else None
        if adversary_wallet is not None:
            adversary_wallet.add_key(LOOT_LABEL, f"minichain-sim:{config.seed}:loot".encode())

        # Genesis output funds the double-spend, otherwise node 0
        genesis_owner = adversary_wallet if config.adversary == "double-spend" else wallets[0]
        self.genesis = make_genesis(self._params, timestamp=0, script_pubkey=genesis_owner.script_pubkey(MINER_LABEL))
        self._created[self.genesis.hash] = (0.0, -1)

        self.nodes: list[SimNode] = [
            SimNode(node_id, self.genesis, self._params, rate, wallets[node_id], "honest")
            for node_id, rate in enumerate(config.honest_rates)
        ]
        self.adversary: PrivateMiner | None = None
        if adversary_id is not None:
            self.adversary = PrivateMiner(
                adversary_id, self.genesis, self._params, config.adversary_hash_rate, adversary_wallet, config.adversary
            )
            self.nodes.append(self.adversary)
        for sybil_id in sybil_ids:
            self.nodes.append(SimNode(sybil_id, self.genesis, self._params, 0.0, self._make_wallet(sybil_id), "sybil"))

        extra_ids = ([adversary_id] if adversary_id is not None else []) + sybil_ids
        for node in self.nodes[:honest_count]:
            node.peers = sorted(self.graph.neighbors(node.node_id)) + extra_ids
        for node in self.nodes[honest_count:]:
            node.peers = list(range(honest_count))

        self._attack = DoubleSpendAttack() if config.adversary == "double-spend" else None
        self._withhold = WithholdStats() if config.adversary == "withhold" else None
        if self.adversary is not None and config.adversary == "withhold":
            self.adversary.begin_private()

        for node in self.nodes:
            if node.hash_rate > 0:
                self._schedule(self._tick_len, node.node_id, EventKind.TICK, tick_index=1)
        if config.tx_interval > 0:
            self._schedule(config.tx_interval, 0, EventKind.TRAFFIC)
        if config.rate_change_time is not None:
            self._schedule(config.rate_change_time, 0, EventKind.RATE_CHANGE)
        logging.debug(
            f"Simulation seed {config.seed}: {honest_count} {config.topology} nodes,"
            f" adversary {config.adversary}, genesis {self.genesis.hash.hex()}"
        )

    def _make_wallet(self, node_id: int) -> Wallet:
        wallet = Wallet()
        wallet.add_key(MINER_LABEL, f"minichain-sim:{self._config.seed}:{node_id}".encode())
        return wallet

    @property
    def config(self) -> ScenarioConfig:
        return self._config

    @property
    def honest_nodes(self) -> list[SimNode]:
        return [node for node in self.nodes if node.role == "honest"]

    @property
    def diameter(self) -> int:
        return nx.diameter(self.graph) if self._config.nodes > 1 else 0

    @property
    def converged(self) -> bool:
        return len({node.state.tip_hash for node in self.honest_nodes}) == 1

    def _schedule(
        self,
        deliver_at: float,
        target: int,
        kind: EventKind,
        payload: Block | Transaction | None = None,
        sender: int | None = None,
        tick_index: int = 0,
    ) -> SimEvent:
        event = SimEvent(deliver_at, self._seq, target, kind, payload, sender, tick_index)
        self._seq += 1
        heapq.heappush(self._queue, (deliver_at, event.seq, event))
        if kind == EventKind.BLOCK:
            self._blocks_in_flight += 1
        return event

    def gossip(self, node: SimNode, item: Block | Transaction) -> list[SimEvent]:
        """Sends item to every peer not known to have it, arriving after one link latency

        Returns:
            list[SimEvent]: scheduled deliveries (empty if node already relayed item)
        """
        is_block = isinstance(item, Block)
        item_id = item.hash if is_block else item.txid
        node.known.add(item_id)
        if item_id in node.relayed:
            return []
        node.relayed.add(item_id)
        if is_block:
            self._published.add(item_id)

        events = []
        for peer in node.peers:
            peer_known = node.peer_known.setdefault(peer, set())
            if item_id in peer_known:
                continue
            peer_known.add(item_id)
            events.append(
                self._schedule(
                    self.now + self._config.latency,
                    peer,
                    EventKind.BLOCK if is_block else EventKind.TX,
                    item,
                    node.node_id,
                )
            )
        return events

    def broadcast_tx(self, node_id: int, tx: Transaction) -> bool:
        """Submits tx at node and gossips it if accepted"""
        node = self.nodes[node_id]
        if not node.receive_tx(tx, self.now):
            return False
        self._tx_created.setdefault(tx.txid, self.now)
        self.gossip(node, tx)
        return True

    def _publish_block(self, node: SimNode, block: Block) -> None:
        node.known.add(block.hash)
        node.receive_block(block, self.now)
        self.gossip(node, block)

    def _mining_allowed(self, node: SimNode) -> bool:
        if self._stopped:
            return False
        if self.now < self._config.duration:
            return True
        if self.now >= self._config.duration + SETTLE_SPACINGS * self._params.target_spacing:
            return False

        # Double-spend runs go on until resolved, other runs until honest nodes agree
        if self._attack is not None:
            return True
        if node.role != "honest":
            return False
        return not (self._blocks_in_flight == 0 and self.converged)

    def _on_tick(self, event: SimEvent) -> None:
        node = self.nodes[event.target]
        if not self._mining_allowed(node):
            return
        if node is self.adversary and self._attack is not None and self._attack.phase == AttackPhase.WAITING:
            self._start_double_spend()

        block = miner_tick(node, self._rng, self.now, self._tick_len)
        if block is not None:
            self._created[block.hash] = (self.now, node.node_id)
            node.blocks_mined += 1
            if isinstance(node, PrivateMiner) and node.is_private:
                node.add_private(block, self.now)
                logging.debug(f"Adversary mined private block {node.private_length} at {self.now:.1f}s")
            else:
                self._publish_block(node, block)
        self._schedule(
            (event.tick_index + 1) * self._tick_len, node.node_id, EventKind.TICK, tick_index=event.tick_index + 1
        )

    def _on_block(self, event: SimEvent) -> None:
        self._blocks_in_flight -= 1
        node = self.nodes[event.target]
        block = event.payload
        node.peer_known.setdefault(event.sender, set()).add(block.hash)
        if block.hash in node.known:
            return
        node.known.add(block.hash)
        result = node.receive_block(block, self.now)
        if result is None or result.status == AcceptStatus.ORPHAN or not node.relays:
            return
        self.gossip(node, block)
        for adopted in result.connected:
            if adopted.hash not in node.relayed:
                self.gossip(node, adopted)

    def _on_tx(self, event: SimEvent) -> None:
        node = self.nodes[event.target]
        tx = event.payload
        node.peer_known.setdefault(event.sender, set()).add(tx.txid)
        if tx.txid in node.known:
            return
        node.known.add(tx.txid)
        if node.receive_tx(tx, self.now) and node.relays:
            self.gossip(node, tx)

    def _on_traffic(self) -> None:
        """One payment between random honest nodes with mature coins"""
        honest = self.honest_nodes
        amount = self._params.initial_subsidy // 100
        start = int(self._rng.integers(len(honest)))
        receiver_offset = int(self._rng.integers(1, len(honest))) if len(honest) > 1 else 0
        for offset in range(len(honest)):
            sender = honest[(start + offset) % len(honest)]
            receiver = honest[(sender.node_id + receiver_offset) % len(honest)]
            exclude = {input_.prevout for tx in sender.mempool.transactions() for input_ in tx.inputs}
            try:
                unsigned = sender.wallet.build_payment(
                    sender.state, receiver.wallet.address(MINER_LABEL), amount, self._config.fee, exclude=exclude
                )
            except InsufficientFundsError:
                continue
            tx = sender.wallet.sign_all(unsigned, sender.state)
            if self.broadcast_tx(sender.node_id, tx):
                logging.debug(f"Node {sender.node_id} pays {amount} to node {receiver.node_id}: {tx.txid.hex()}")
            break

        if self.now + self._config.tx_interval < self._config.duration:
            self._schedule(self.now + self._config.tx_interval, 0, EventKind.TRAFFIC)

    def _on_rate_change(self) -> None:
        for node in self.nodes:
            node.hash_rate *= self._config.rate_change_factor
        logging.debug(f"Hash rates multiplied by {self._config.rate_change_factor} at {self.now:.1f}s")

    def _start_double_spend(self) -> None:
        """Pays the merchant (node 0) publicly and prepares the conflicting payment for the private branch"""
        attack = self._attack
        attacker = self.adversary
        merchant = self.nodes[0]
        state = attacker.state
        spendable = attacker.wallet.spendable_utxos(state)
        if not spendable:
            return

        amount = max(utxo.amount for utxo in spendable) // 2
        fee = self._config.fee
        merchant_tx = attacker.wallet.sign_all(
            attacker.wallet.build_payment(state, merchant.wallet.address(MINER_LABEL), amount, fee, MINER_LABEL),
            state,
        )
        attacker_tx = attacker.wallet.sign_all(
            attacker.wallet.build_payment(state, attacker.wallet.address(LOOT_LABEL), amount, fee, MINER_LABEL),
            state,
        )
        attack.merchant_tx = merchant_tx
        attack.attacker_tx = attacker_tx
        attack.fork_height = state.height
        attacker.begin_private([attacker_tx])
        attack.phase = AttackPhase.MINING_PRIVATE

        # Public announcement, then relay from the attacker only
        attacker.receive_tx(merchant_tx, self.now)
        self._tx_created.setdefault(merchant_tx.txid, self.now)
        self.gossip(attacker, merchant_tx)
        logging.debug(f"Double-spend started at {self.now:.1f}s, fork at height {attack.fork_height}")

    def _update_double_spend(self) -> None:
        attack = self._attack
        attacker = self.adversary
        if attack.phase == AttackPhase.WAITING or attack.resolved:
            return
        honest = self.honest_nodes
        merchant = honest[0]

        if attack.phase == AttackPhase.MINING_PRIVATE:
            attack.honest_length = attacker.public_length
            attack.private_length = attacker.private_length
            if attack.merchant_accepted_at is None:
                depth = merchant.tx_depth(attack.merchant_tx.txid, attack.fork_height)
                in_pool = attack.merchant_tx.txid in merchant.mempool
                if depth >= self._config.confirmations and (depth > 0 or in_pool):
                    attack.merchant_accepted_at = self.now
                    logging.debug(f"Merchant accepted payment at {self.now:.1f}s with {depth} confirmations")

            if attack.merchant_accepted_at is not None and attack.private_length > attack.honest_length:
                attack.phase = AttackPhase.RELEASED
                attack.released_at = self.now
                for block in attacker.end_private():
                    self._publish_block(attacker, block)
                logging.debug(f"Attacker released {attack.private_length} blocks at {self.now:.1f}s")
            elif attack.honest_length - attack.private_length >= self._config.give_up_lead:
                attack.phase = AttackPhase.GAVE_UP
                attacker.end_private()
                logging.debug(f"Attacker gave up at {self.now:.1f}s")

        if attack.phase == AttackPhase.RELEASED:
            if all(node.tx_depth(attack.attacker_tx.txid, attack.fork_height) > 0 for node in honest):
                attack.phase = AttackPhase.SUCCEEDED
        if attack.phase in (AttackPhase.RELEASED, AttackPhase.GAVE_UP):
            if all(
                node.tx_depth(attack.merchant_tx.txid, attack.fork_height) >= self._config.give_up_lead
                for node in honest
            ):
                attack.phase = AttackPhase.FAILED
        if attack.resolved:
            logging.debug(f"Double-spend {attack.phase.value} at {self.now:.1f}s")
            self._stopped = True

    def _update_withhold(self) -> None:
        adversary = self.adversary
        if not adversary.is_private:
            return
        if self.now >= self._config.duration:
            blocks = adversary.end_private()
            for block in blocks:
                self._publish_block(adversary, block)
            if blocks:
                self._withhold.publications += 1
            return

        lead_now = adversary.private_length - adversary.public_length
        if adversary.private_length == 0:
            if adversary.public_length > 0:
                adversary.begin_private()
        elif lead_now < 0:
            self._withhold.abandoned += 1
            adversary.end_private()
            adversary.begin_private()
        elif lead_now >= self._config.lead or (adversary.public_length > 0 and lead_now <= 1):
            self._withhold.publications += 1
            for block in adversary.end_private():
                self._publish_block(adversary, block)
            adversary.begin_private()

    def _handle(self, event: SimEvent) -> None:
        if event.kind == EventKind.TICK:
            self._on_tick(event)
        elif event.kind == EventKind.BLOCK:
            self._on_block(event)
        elif event.kind == EventKind.TX:
            self._on_tx(event)
        elif event.kind == EventKind.TRAFFIC:
            self._on_traffic()
        elif event.kind == EventKind.RATE_CHANGE:
            self._on_rate_change()

        if self._attack is not None:
            self._update_double_spend()
        elif self._withhold is not None:
            self._update_withhold()

    def run_until(self, until: float) -> None:
        """Processes events with deliver_at <= until"""
        while self._queue and not self._stopped and self._queue[0][0] <= until:
            deliver_at, _, event = heapq.heappop(self._queue)
            self.now = deliver_at
            self._handle(event)

    def run(self) -> SimReport:
        """Runs until the event queue is empty (or the attack resolves)"""
        while self._queue and not self._stopped:
            deliver_at, _, event = heapq.heappop(self._queue)
            self.now = deliver_at
            self._handle(event)
        logging.debug(f"Simulation seed {self._config.seed} finished at {self.now:.1f}s")
        return self.report()

    def _active_hashes(self, node: SimNode) -> list[Digest32]:
        return [node.state.hash_at(height) for height in range(node.state.height + 1)]

    def report(self) -> SimReport:
        observer = self.nodes[0]
        state = observer.state
        active = self._active_hashes(observer)
        active_set = set(active)

        intervals = [
            self._created[active[height]][0] - self._created[active[height - 1]][0] for height in range(1, len(active))
        ]
        confirmation_times = {}
        for block_hash in active[1:]:
            block = observer.tree.get(block_hash).block
            for tx in block.transactions[1:]:
                if tx.txid in self._tx_created:
                    confirmation_times[tx.txid.hex()] = self._created[block_hash][0] - self._tx_created[tx.txid]

        retargets = []
        interval = self._params.retarget_interval
        for height in range(interval, state.height + 1, interval):
            retargets.append(
                RetargetRecord(
                    height=height,
                    time=state.header_at(height).time,
                    window_start=state.header_at(max(height - interval - 1, 0)).time,
                    old_target=bits_to_target(state.header_at(height - 1).bits),
                    new_target=bits_to_target(state.header_at(height).bits),
                )
            )

        nodes = [
            NodeSummary(
                node_id=node.node_id,
                role=node.role,
                tip_hash=node.state.tip_hash.hex(),
                height=node.state.height,
                utxo_digest=node.state.utxo_digest().hex(),
                mempool_size=len(node.mempool),
                blocks_mined=node.blocks_mined,
                tip_changed_at=node.tip_changed_at,
            )
            for node in self.nodes
        ]
        published_times = [self._created[block_hash][0] for block_hash in self._published]
        return SimReport(
            seed=self._config.seed,
            duration=float(self._config.duration),
            end_time=self.now,
            nodes=nodes,
            blocks_mined=len(self._created) - 1,
            active_height=state.height,
            orphan_count=len(self._published - active_set),
            block_intervals=intervals,
            confirmation_times=confirmation_times,
            retargets=retargets,
            converged=self.converged,
            last_block_time=max(published_times, default=0.0),
            adversary=self._adversary_summary(active),
        )

    def _mined_by(self, active: list[Digest32], node_ids: set[int]) -> int:
        return sum(1 for block_hash in active[1:] if self._created[block_hash][1] in node_ids)

    def _adversary_summary(self, active: list[Digest32]) -> dict:
        config = self._config
        if config.adversary == "double-spend":
            return self.attack_report().to_tree()
        if config.adversary == "withhold":
            adversary_ids = {self.adversary.node_id}
            return {
                "lead": config.lead,
                "attacker_rate": config.attacker_rate,
                "blocks_mined": self.adversary.blocks_mined,
                "blocks_in_chain": self._mined_by(active, adversary_ids),
                "honest_blocks_in_chain": self._mined_by(active, {node.node_id for node in self.honest_nodes}),
                "publications": self._withhold.publications,
                "abandoned": self._withhold.abandoned,
            }
        if config.adversary == "sybil":
            sybil_ids = {node.node_id for node in self.nodes if node.role == "sybil"}
            in_chain = self._mined_by(active, sybil_ids)
            return {
                "identities": len(sybil_ids),
                "blocks_in_chain": in_chain,
                "block_share": in_chain / max(len(active) - 1, 1),
                "converged": self.converged,
            }
        return {}

    def attack_report(self) -> AttackReport:
        """
        Raises:
            ValidationError: scenario has no double-spend adversary
        """
        attack = self._attack
        if attack is None:
            raise ValidationError("Scenario has no double-spend adversary")
        merchant = self.nodes[0]
        spender = "none"
        if attack.merchant_tx is not None:
            if merchant.tx_depth(attack.attacker_tx.txid, attack.fork_height) > 0:
                spender = "attacker"
            elif merchant.tx_depth(attack.merchant_tx.txid, attack.fork_height) > 0:
                spender = "merchant"
        if attack.phase == AttackPhase.SUCCEEDED:
            outcome = "success"
        elif attack.phase == AttackPhase.FAILED:
            outcome = "failed"
        else:
            outcome = "undecided"
        return AttackReport(
            seed=self._config.seed,
            confirmations=self._config.confirmations,
            attacker_rate=self._config.attacker_rate,
            success=attack.phase == AttackPhase.SUCCEEDED,
            outcome=outcome,
            confirmed_spender=spender,
            merchant_txid=attack.merchant_tx.txid.hex() if attack.merchant_tx else "",
            attacker_txid=attack.attacker_tx.txid.hex() if attack.attacker_tx else "",
            honest_length=attack.honest_length,
            private_length=attack.private_length,
            merchant_accepted_at=attack.merchant_accepted_at,
            released_at=attack.released_at,
            end_time=self.now,
            active_height=merchant.state.height,
        )


def run(config: ScenarioConfig) -> SimReport:
    """Runs scenario to the end

    Raises:
        ValidationError: invalid scenario (checked before the first event)
    """
    return Simulator(config).run()


def run_double_spend(config: ScenarioConfig) -> AttackReport:
    """
    Raises:
        ValidationError: scenario adversary isn't double-spend
    """
    if config.adversary != "double-spend":
        raise ValidationError(f"Scenario adversary is {config.adversary!r}, not 'double-spend'")
    simulator = Simulator(config)
    simulator.run()
    return simulator.attack_report()
