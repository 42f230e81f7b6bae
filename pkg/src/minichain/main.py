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

import argparse
import json
import logging
import multiprocessing
import os
import sys
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from typing import TextIO

from dateutil import parser as date_parser
from dateutil import tz

from minichain._version import __version__
from minichain.channel import (
    Channel,
    ChannelError,
    ChannelState,
    channel_close,
    channel_confirm,
    channel_open,
    channel_pay,
    channel_refund,
)
from minichain.chain_model import COIN, GENESIS_TIME_DEFAULT, OutPoint, make_genesis, params_by_name
from minichain.config_manager import CONFIG_DEFAULT, CONFIG_FILE_NAME, ConfigManager, parse_kv_file, resolve_datadir
from minichain.consensus import supply_cap, supply_schedule
from minichain.errors import MinichainError, NotFoundError, StorageError, ValidationError
from minichain.kv_store import KvStore
from minichain.logging_handler import LoggingHandler
from minichain.netsim import ScenarioConfig
from minichain.node import BLOCKS_FILE, WALLET_FILE, FullNode
from minichain.sim_report import AttackReport, format_value
from minichain.sweep_process import run_scenario
from minichain.sweep_runner import SweepRunner
from minichain.wallet import Wallet, script_for_address

EXAMPLE_USAGE = """examples:
  minichain init --message "Chancellor on brink" --time 2009-01-03T18:15:05Z
  minichain address --label alice
  minichain mine --blocks 12
  minichain send --to 1BoatSLRHtKNngkdXEeobR76b53LETtpyT --amount 1.5 --fee 0.0001
  minichain multisig --m 2 --keys alice,bob,carol
  minichain channel open --payee bob --capacity 10
  minichain channel pay --amount 0.25
  minichain channel close
  minichain explore 3
  minichain explore --latest 5
  minichain supply --params mainnet-like
  minichain simulate --scenario double-spend.conf --sweep 200 --json
"""

# Wallet label used when --label / --to is omitted
DEFAULT_LABEL = "default"

# Wallet record holding the current payment channel
CHANNEL_RECORD = "channel"

# Refund lock_time of a new channel, in target spacings after now, when --refund-time is omitted
REFUND_SPACINGS_DEFAULT = 10

# Hex digits of a block hash or txid
HASH_HEX_LEN = 64


def parse_amount(text: str) -> int:
    """Converts coins (up to 8 decimals) into base units

    Raises:
        ValidationError: not a number, negative or too many decimals
    """
    try:
        value = Decimal(text.strip())
    except InvalidOperation as e:
        raise ValidationError(f"Invalid amount {text!r}") from e
    base_units = value * COIN
    if not value.is_finite() or value < 0 or base_units != base_units.to_integral_value():
        raise ValidationError(f"Invalid amount {text!r}, expected coins with at most 8 decimals")
    return int(base_units)


def format_amount(base_units: int) -> str:
    """Base units as coins with 8 decimals"""
    sign = "-" if base_units < 0 else ""
    whole, fraction = divmod(abs(base_units), COIN)
    return f"{sign}{whole}.{fraction:08d}"


def parse_time(text: str) -> int:
    """
    Raises:
        ValidationError: not an ISO-8601 timestamp or before 1970

    Returns:
        int: Unix seconds (naive timestamps are UTC)
    """
    try:
        moment = date_parser.isoparse(text)
    except ValueError as e:
        raise ValidationError(f"Invalid timestamp {text!r}, expected ISO-8601") from e
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=tz.UTC)
    timestamp = int(moment.timestamp())
    if timestamp < 0:
        raise ValidationError(f"Timestamp {text!r} is before 1970")
    return timestamp


def parse_args(argv: list[str]) -> argparse.Namespace:
    """Parses cli arguments

    Returns:
        argparse.Namespace: parsed arguments
    """
    # --json is accepted before and after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="machine-readable output")

    parser = argparse.ArgumentParser(
        prog="minichain",
        description="Miniature UTXO blockchain with a wallet, payment channels and a network simulator",
        epilog=EXAMPLE_USAGE,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "-d",
        "--datadir",
        type=str,
        default=None,
        help="data directory (Default: $MINICHAIN_DATADIR or ./minichain-data)",
    )
    parser.add_argument(
        "-c",
        "--config",
        type=str,
        default=None,
        help=f"path to config file (Default: <datadir>/{CONFIG_FILE_NAME})",
    )
    parser.add_argument("--json", action="store_true", default=False, help="machine-readable output")
    parser.add_argument("--seed", type=int, default=None, help=f"wallet / simulation seed (Default: {CONFIG_DEFAULT['seed']})")
    parser.add_argument("--verbose", action="store_true", default=False, help="debug logs")
    parser.add_argument(
        "--version",
        action="version",
        version=__version__,
        help="show minichain's version number and exit",
    )

    subparsers = parser.add_subparsers(dest="command", required=True, metavar="command")

    init_parser = subparsers.add_parser("init", parents=[common], help="create genesis block and wallet")
    init_parser.add_argument("--message", type=str, default=None, help="message embedded into the genesis block")
    init_parser.add_argument("--time", type=str, default=None, help="genesis timestamp, ISO-8601 (Default: 2009-01-03T18:15:05Z)")
    init_parser.add_argument("--params", type=str, default=None, help="simnet or mainnet-like (Default: simnet)")

    mine_parser = subparsers.add_parser("mine", parents=[common], help="mine blocks on the tip")
    mine_parser.add_argument("--blocks", type=int, default=1, help="number of blocks (Default: 1)")
    mine_parser.add_argument("--to", type=str, default=None, help="coinbase address (Default: wallet's default key)")

    send_parser = subparsers.add_parser("send", parents=[common], help="pay to an address")
    send_parser.add_argument("--to", type=str, required=True, help="destination address")
    send_parser.add_argument("--amount", type=str, required=True, help="coins to send")
    send_parser.add_argument("--fee", type=str, default=None, help="fee in coins (Default: config fee)")

    multisig_parser = subparsers.add_parser("multisig", parents=[common], help="create M-of-N P2SH address")
    multisig_parser.add_argument("--m", type=int, required=True, help="required signatures")
    multisig_parser.add_argument(
        "--keys",
        type=str,
        required=True,
        help="comma separated wallet labels or hex public keys (missing labels are created)",
    )

    channel_parser = subparsers.add_parser("channel", parents=[common], help="payment channel between wallet keys")
    channel_subparsers = channel_parser.add_subparsers(dest="channel_command", required=True, metavar="action")
    open_parser = channel_subparsers.add_parser("open", parents=[common], help="fund a channel")
    open_parser.add_argument("--payee", type=str, required=True, help="payee wallet label (created if missing)")
    open_parser.add_argument("--capacity", type=str, required=True, help="coins locked into the channel")
    open_parser.add_argument("--refund-time", type=int, default=None, help="refund lock_time in simulated seconds")
    open_parser.add_argument("--fee", type=str, default=None, help="fee of every channel tx in coins")
    pay_parser = channel_subparsers.add_parser("pay", parents=[common], help="move coins to the payee")
    pay_parser.add_argument("--amount", type=str, required=True, help="coins to add to the payee's side")
    channel_subparsers.add_parser("close", parents=[common], help="broadcast the latest commitment")
    channel_subparsers.add_parser("refund", parents=[common], help="broadcast the refund (after refund time)")
    channel_subparsers.add_parser("status", parents=[common], help="print channel state")

    explore_parser = subparsers.add_parser("explore", parents=[common], help="block and transaction lookup")
    explore_parser.add_argument("target", nargs="?", default=None, help="block hash or height")
    explore_parser.add_argument("--latest", type=int, default=None, help="newest N blocks")
    explore_parser.add_argument("--tx", type=str, default=None, help="find transaction by txid")

    supply_parser = subparsers.add_parser("supply", parents=[common], help="subsidy schedule and supply cap")
    supply_parser.add_argument("--params", type=str, default=None, help="simnet or mainnet-like")

    simulate_parser = subparsers.add_parser("simulate", parents=[common], help="run network simulation")
    simulate_parser.add_argument("--scenario", type=str, required=True, help="scenario file (key=value lines)")
    simulate_parser.add_argument("--sweep", type=int, default=None, help="run N seeds starting at the scenario seed")
    simulate_parser.add_argument(
        "--sweep-processes",
        type=int,
        default=None,
        help=f"worker processes for --sweep (Default: {CONFIG_DEFAULT['sweep_processes']})",
    )

    address_parser = subparsers.add_parser("address", parents=[common], help="print wallet address")
    address_parser.add_argument("--label", type=str, default=DEFAULT_LABEL, help="key label (created if missing)")

    subparsers.add_parser("balance", parents=[common], help="wallet balance")

    return parser.parse_args(argv)


@dataclass
class CommandContext:
    args: argparse.Namespace
    config: ConfigManager
    datadir: str
    stdout: TextIO
    logging_queue: multiprocessing.Queue

    @property
    def as_json(self) -> bool:
        return bool(self.args.json) or self.config.get("output", ignore_args=True) == "json"

    @property
    def seed(self) -> int:
        return self.config.get_int("seed")

    def emit(self, tree, lines: list[str]) -> None:
        """Prints tree as JSON or lines as text"""
        if self.as_json:
            self.stdout.write(json.dumps(tree, indent=2, ensure_ascii=False) + "\n")
        else:
            for line in lines:
                self.stdout.write(line + "\n")
        self.stdout.flush()

    def open_node(self) -> FullNode:
        """
        Raises:
            NotFoundError: no chain in datadir
        """
        if not os.path.exists(os.path.join(self.datadir, BLOCKS_FILE)):
            raise NotFoundError(f"No chain in {self.datadir}, run init first")
        return FullNode(self.datadir, self.config.chain_params())

    def open_wallet(self) -> tuple[Wallet, KvStore]:
        store = KvStore(os.path.join(self.datadir, WALLET_FILE))
        return Wallet(store), store

    def ensure_key(self, wallet: Wallet, label: str) -> bytes:
        """Public key of label. Missing labels get a key derived from the seed"""
        if label not in wallet.labels:
            wallet.add_key(label, f"minichain:{self.seed}:{label}".encode("utf-8"))
            logging.info(f"Created wallet key {label!r}")
        return wallet.public_key(label)


def command_init(ctx: CommandContext) -> None:
    args = ctx.args
    try:
        os.makedirs(ctx.datadir, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Unable to create {ctx.datadir}: {e}") from e
    if args.params:
        params_by_name(args.params)
        ctx.config.set("params", args.params)
    params = ctx.config.chain_params()

    message = args.message if args.message is not None else ctx.config.get("message")
    timestamp = parse_time(args.time) if args.time else GENESIS_TIME_DEFAULT
    genesis = make_genesis(params, message, timestamp)

    wallet, store = ctx.open_wallet()
    with store, FullNode(ctx.datadir, params) as node:
        ctx.ensure_key(wallet, DEFAULT_LABEL)
        node.initialize(genesis)
        address = wallet.address(DEFAULT_LABEL).text
        store.sync()

    ctx.emit(
        {"genesis": genesis.hash.hex(), "time": timestamp, "message": message, "address": address},
        [f"genesis={genesis.hash.hex()}", f"time={timestamp}", f"message={message}", f"address={address}"],
    )


def command_mine(ctx: CommandContext) -> None:
    with ctx.open_node() as node:
        if ctx.args.to:
            script_pubkey = script_for_address(ctx.args.to)
        else:
            wallet, store = ctx.open_wallet()
            with store:
                ctx.ensure_key(wallet, DEFAULT_LABEL)
                script_pubkey = wallet.script_pubkey(DEFAULT_LABEL)
        blocks = node.mine(ctx.args.blocks, script_pubkey)
        first_height = node.state.height - len(blocks) + 1

    rows = [
        {"height": first_height + offset, "hash": block.hash.hex(), "tx_count": len(block.transactions)}
        for offset, block in enumerate(blocks)
    ]
    ctx.emit(rows, [f"{row['height']} {row['hash']} txs={row['tx_count']}" for row in rows])


def _load_channel(wallet: Wallet) -> Channel | None:
    stored = wallet.load_record(CHANNEL_RECORD)
    if not stored:
        return None
    try:
        return Channel.from_dict(json.loads(stored.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ChannelError(f"Malformed channel record: {e}") from e


def _save_channel(wallet: Wallet, channel: Channel) -> None:
    wallet.save_record(CHANNEL_RECORD, json.dumps(channel.to_dict()).encode("utf-8"))


def _reserved_outpoints(node: FullNode, wallet: Wallet) -> set[OutPoint]:
    """Outpoints spent in the mempool plus a live channel's funding output"""
    reserved = node.mempool_spent()
    channel = _load_channel(wallet)
    if channel is not None and channel.state in (ChannelState.PENDING, ChannelState.OPEN):
        reserved.add(channel.funding_outpoint)
    return reserved


def command_send(ctx: CommandContext) -> None:
    args = ctx.args
    amount = parse_amount(args.amount)
    fee = parse_amount(args.fee) if args.fee is not None else ctx.config.get_int("fee")
    wallet, store = ctx.open_wallet()
    with store, ctx.open_node() as node:
        ctx.ensure_key(wallet, DEFAULT_LABEL)
        unsigned = wallet.build_payment(
            node.state, args.to, amount, fee, DEFAULT_LABEL, exclude=_reserved_outpoints(node, wallet)
        )
        tx = wallet.sign_all(unsigned, node.state)
        node.submit_tx(tx)

    ctx.emit(
        {"txid": tx.txid.hex(), "amount": amount, "fee": fee},
        [f"txid={tx.txid.hex()}", f"amount={format_amount(amount)}", f"fee={format_amount(fee)}"],
    )


def command_multisig(ctx: CommandContext) -> None:
    items = [item.strip() for item in ctx.args.keys.split(",") if item.strip()]
    wallet, store = ctx.open_wallet()
    with store:
        pubkeys = []
        for item in items:
            if len(item) == 66 and all(char in "0123456789abcdefABCDEF" for char in item):
                pubkeys.append(bytes.fromhex(item))
            else:
                pubkeys.append(ctx.ensure_key(wallet, item))
        redeem, address = wallet.create_multisig(ctx.args.m, pubkeys)
        store.sync()

    ctx.emit(
        {"address": address.text, "redeem_script": redeem.hex(), "m": ctx.args.m, "n": len(pubkeys)},
        [f"address={address.text}", f"redeem_script={redeem.hex()}", f"m={ctx.args.m}", f"n={len(pubkeys)}"],
    )


def _channel_summary(channel: Channel) -> dict:
    return {
        "state": channel.state.value,
        "capacity": channel.capacity,
        "funder_amount": channel.funder_amount,
        "payee_amount": channel.payee_amount,
        "fee": channel.fee,
        "commitment_index": channel.commitment_index,
        "refund_time": channel.refund_time,
        "funding_txid": channel.funding_tx.txid.hex(),
        "refund_txid": channel.refund_tx.txid.hex(),
    }


def _channel_lines(summary: dict, txid: str | None = None) -> list[str]:
    lines = []
    for key, value in summary.items():
        if key in ("capacity", "funder_amount", "payee_amount", "fee"):
            value = format_amount(value)
        lines.append(f"{key}={value}")
    if txid is not None:
        lines.append(f"txid={txid}")
    return lines


def command_channel(ctx: CommandContext) -> None:
    args = ctx.args
    action = args.channel_command
    wallet, store = ctx.open_wallet()
    with store, ctx.open_node() as node:
        channel = _load_channel(wallet)
        if channel is not None:
            channel = channel_confirm(channel, node.state)
        broadcast = None

        if action == "open":
            if channel is not None and channel.state in (ChannelState.PENDING, ChannelState.OPEN):
                raise ChannelError(f"A channel is already {channel.state.value}, close or refund it first")
            funder_pubkey = ctx.ensure_key(wallet, DEFAULT_LABEL)
            payee_pubkey = ctx.ensure_key(wallet, args.payee)
            if payee_pubkey == funder_pubkey:
                raise ChannelError("Payee must be a different key than the funder")
            fee = parse_amount(args.fee) if args.fee is not None else ctx.config.get_int("fee")
            refund_time = args.refund_time
            if refund_time is None:
                refund_time = node.now + REFUND_SPACINGS_DEFAULT * node.params.target_spacing
            channel = channel_open(
                wallet,
                DEFAULT_LABEL,
                payee_pubkey,
                parse_amount(args.capacity),
                refund_time,
                fee,
                node.state,
                node.now,
                refund_signer=lambda refund: wallet.signature(refund, 0, payee_pubkey),
                exclude=_reserved_outpoints(node, wallet),
            )
            node.submit_tx(channel.funding_tx)
            broadcast = channel.funding_tx

        elif channel is None:
            raise NotFoundError("No channel in the wallet, run channel open first")

        elif action == "pay":
            channel = channel_pay(channel, parse_amount(args.amount), wallet)

        elif action == "close":
            channel, broadcast = channel_close(channel, wallet, node.state, node.now)
            node.submit_tx(broadcast)

        elif action == "refund":
            channel, broadcast = channel_refund(channel)
            node.submit_tx(broadcast)

        _save_channel(wallet, channel)
        store.sync()

    summary = _channel_summary(channel)
    txid = broadcast.txid.hex() if broadcast is not None else None
    ctx.emit({**summary, "txid": txid}, _channel_lines(summary, txid))


def command_explore(ctx: CommandContext) -> None:
    args = ctx.args
    with ctx.open_node() as node:
        explorer = node.explorer
        if args.tx:
            try:
                txid = bytes.fromhex(args.tx)
            except ValueError as e:
                raise ValidationError(f"Invalid txid {args.tx!r}") from e
            location = explorer.find_transaction(txid)
            tree = {"txid": args.tx, "block_hash": location.block_hash.hex(), "height": location.height, "position": location.position}
            ctx.emit(tree, [f"{key}={value}" for key, value in tree.items()])
            return

        if args.latest is not None:
            if args.latest <= 0:
                raise ValidationError("--latest needs a positive count")
            infos = explorer.latest_blocks(args.latest)
            ctx.emit(
                [info.to_dict() for info in infos],
                [f"{info.height} {info.block_hash} txs={info.tx_count} size={info.size_bytes}" for info in infos],
            )
            return

        target = args.target if args.target is not None else str(node.state.height)
        if target.isdigit():
            block_hash = explorer.block_hash_at(int(target))
        elif len(target) == HASH_HEX_LEN:
            try:
                block_hash = bytes.fromhex(target)
            except ValueError as e:
                raise ValidationError(f"Invalid block hash {target!r}") from e
        else:
            raise ValidationError(f"Expected block hash or height, got {target!r}")
        info = explorer.explorer_info(block_hash)

    tree = info.to_dict()
    ctx.emit(tree, [f"{key}={format_value(value)}" for key, value in tree.items()])


def report_supply(params_name: str) -> tuple[dict, list[str]]:
    """Subsidy schedule by halving epoch and the asymptotic cap

    Returns:
        tuple[dict, list[str]]: JSON tree (base units) and text lines (coins)
    """
    params = params_by_name(params_name)
    rows = supply_schedule(params)
    cap = supply_cap(params)
    lines = [
        f"epoch={row['epoch']} heights={row['first_height']}-{row['last_height']}"
        f" subsidy={format_amount(row['subsidy'])}"
        f" epoch_total={format_amount(row['epoch_total'])} total={format_amount(row['running_total'])}"
        for row in rows
    ]
    lines.append(f"supply_cap={format_amount(cap)}")
    lines.append(f"supply_cap_base_units={cap}")
    lines.append(f"below_max_money={'true' if cap < params.max_money else 'false'}")
    tree = {"params": params_name, "epochs": rows, "supply_cap": cap, "below_max_money": cap < params.max_money}
    return tree, lines


def command_supply(ctx: CommandContext) -> None:
    tree, lines = report_supply(ctx.config.get("params"))
    ctx.emit(tree, lines)


def command_simulate(ctx: CommandContext) -> None:
    args = ctx.args
    config = ScenarioConfig.from_mapping(parse_kv_file(args.scenario))
    if args.seed is not None:
        config = config.with_seed(args.seed)
    config.validate()

    if args.sweep is None:
        report = run_scenario(config)
        ctx.emit(report.to_tree(), report.to_records() + [f"digest={report.digest().hex()}"])
        return

    workers = min(ctx.config.get_int("sweep_processes"), max(args.sweep, 1))
    runner = SweepRunner(workers, ctx.logging_queue)
    try:
        reports = runner.run(config, args.sweep)
    finally:
        runner.stop(stop_background_thread=True)

    lines = []
    for report in reports:
        lines.append(f"# seed {report.seed}")
        lines.extend(report.to_records())
    summary = {"seeds": len(reports)}
    if reports and isinstance(reports[0], AttackReport):
        successes = sum(1 for report in reports if report.success)
        summary["successes"] = successes
        summary["success_rate"] = successes / len(reports)
        lines.append(f"successes={successes}")
        lines.append(f"success_rate={summary['success_rate']:.6f}")
    ctx.emit({"summary": summary, "reports": [report.to_tree() for report in reports]}, lines)


def command_address(ctx: CommandContext) -> None:
    os.makedirs(ctx.datadir, exist_ok=True)
    wallet, store = ctx.open_wallet()
    with store:
        ctx.ensure_key(wallet, ctx.args.label)
        address = wallet.address(ctx.args.label)
        store.sync()
    ctx.emit({"label": ctx.args.label, "address": address.text}, [address.text])


def command_balance(ctx: CommandContext) -> None:
    wallet, store = ctx.open_wallet()
    with store, ctx.open_node() as node:
        state = node.state
        total = wallet.balance(state)
        spendable = sum(utxo.amount for utxo in wallet.spendable_utxos(state, _reserved_outpoints(node, wallet)))
        height = state.height
    ctx.emit(
        {"height": height, "balance": total, "spendable": spendable},
        [f"height={height}", f"balance={format_amount(total)}", f"spendable={format_amount(spendable)}"],
    )


COMMANDS = {
    "init": command_init,
    "mine": command_mine,
    "send": command_send,
    "multisig": command_multisig,
    "channel": command_channel,
    "explore": command_explore,
    "supply": command_supply,
    "simulate": command_simulate,
    "address": command_address,
    "balance": command_balance,
}


def dispatch(argv: list[str], stdout: TextIO | None = None) -> int:
    """Runs one command

    Args:
        argv (list[str]): arguments without the program name
        stdout (TextIO | None, optional): command output. Defaults to sys.stdout

    Returns:
        int: process exit code (0 on success, MinichainError.exit_code otherwise)
    """
    try:
        args = parse_args(argv)
    except SystemExit as e:
        # Usage errors exit with 1, --help with 0
        return 0 if e.code in (0, None) else 1

    logging_handler_ = LoggingHandler(verbose=args.verbose)
    logging_handler_.start()
    exit_code = 0
    try:
        logging.debug(f"minichain version: {__version__}")
        datadir = resolve_datadir(args.datadir)
        config_file = args.config or os.path.join(datadir, CONFIG_FILE_NAME)
        config_manager_ = ConfigManager(config_file, args)
        context = CommandContext(args, config_manager_, datadir, stdout or sys.stdout, logging_handler_.queue_)
        COMMANDS[args.command](context)

    except MinichainError as e:
        logging.error(e)
        logging.debug("Error details", exc_info=e)
        exit_code = e.exit_code

    # Catch SIGTERM and Ctrl+C
    except (SystemExit, KeyboardInterrupt):
        logging.warning("Interrupted")
        exit_code = 1

    # Catch other errors to exit gracefully
    except Exception as e:
        logging.error(f"Unexpected error: {e}")
        logging.debug("Error details", exc_info=e)
        exit_code = 1

    logging_handler_.flush()
    logging_handler_.stop()
    return exit_code


def main():
    """Main entry"""
    # Multiprocessing fix for Windows
    if sys.platform.startswith("win"):
        multiprocessing.freeze_support()
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
