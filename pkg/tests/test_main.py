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

import io
import json

import pytest

from minichain.config_manager import CONFIG_FILE_NAME
from minichain.errors import ValidationError
from minichain.main import dispatch, format_amount, parse_amount, parse_time

# Near-trivial proof-of-work for chains mined through the cli
EASY_CONFIG = "max_target=0x7fffff" + "0" * 58 + "\ncoinbase_maturity=1\n"


@pytest.fixture
def cli(tmp_path):
    """Returns cli(*argv) -> (exit code, stdout) on a fresh data directory with easy parameters"""
    datadir = tmp_path / "data"
    datadir.mkdir()
    (datadir / CONFIG_FILE_NAME).write_text(EASY_CONFIG, encoding="utf-8")

    def _cli(*argv: str) -> tuple[int, str]:
        stdout = io.StringIO()
        exit_code = dispatch(["--datadir", str(datadir), *argv], stdout)
        return exit_code, stdout.getvalue()

    return _cli


@pytest.fixture
def scenario_file(tmp_path):
    def _scenario(**values) -> str:
        path = tmp_path / "scenario.conf"
        lines = [EASY_CONFIG] + [f"{key}={value}\n" for key, value in values.items()]
        path.write_text("".join(lines), encoding="utf-8")
        return str(path)

    return _scenario


def test_amounts():
    assert parse_amount("1.5") == 150_000_000
    assert parse_amount("0.00000001") == 1
    assert parse_amount(" 21 ") == 2_100_000_000
    assert format_amount(150_000_000) == "1.50000000"
    assert format_amount(-1) == "-0.00000001"
    for text in ("abc", "-1", "0.000000001", "nan"):
        with pytest.raises(ValidationError):
            parse_amount(text)


def test_parse_time():
    assert parse_time("2009-01-03T18:15:05Z") == 1231006085
    assert parse_time("2009-01-03T18:15:05") == 1231006085
    assert parse_time("2009-01-03T19:15:05+01:00") == 1231006085
    for text in ("yesterday", "1960-01-01T00:00:00Z"):
        with pytest.raises(ValidationError):
            parse_time(text)


def test_supply_report(cli):
    exit_code, output = cli("supply", "--params", "mainnet-like", "--json")
    assert exit_code == 0
    tree = json.loads(output)
    assert tree["supply_cap"] == 2_099_999_997_690_000
    assert len(tree["epochs"]) == 33
    assert tree["below_max_money"] is True

    exit_code, output = cli("supply", "--params", "mainnet-like")
    assert "supply_cap=20999999.97690000" in output.splitlines()
    first_epoch = output.splitlines()[0].split()
    assert first_epoch == [
        "epoch=0",
        "heights=0-209999",
        "subsidy=50.00000000",
        "epoch_total=10500000.00000000",
        "total=10500000.00000000",
    ]


def test_exit_codes(cli):
    assert cli("mine")[0] == 2
    assert cli("balance")[0] == 2
    assert cli("explore")[0] == 2
    assert cli("bogus")[0] == 1
    assert cli("mine", "--no-such-flag")[0] == 1
    assert cli("--help")[0] == 0
    assert cli("supply", "--params", "testnet")[0] == 1


def test_wallet_and_explorer_flow(cli):
    exit_code, output = cli("init", "--time", "2020-01-01T00:00:00Z", "--json")
    assert exit_code == 0
    genesis = json.loads(output)
    assert genesis["time"] == 1577836800
    assert len(genesis["genesis"]) == 64

    # Second init refuses to replace the chain
    assert cli("init")[0] != 0

    exit_code, output = cli("address", "--label", "bob")
    assert exit_code == 0
    bob = output.strip()
    assert cli("address", "--label", "bob")[1].strip() == bob

    exit_code, output = cli("mine", "--blocks", "3", "--json")
    assert exit_code == 0
    rows = json.loads(output)
    assert [row["height"] for row in rows] == [1, 2, 3]
    assert all(row["tx_count"] == 1 for row in rows)

    assert "balance=150.00000000" in cli("balance")[1].splitlines()

    exit_code, output = cli("send", "--to", bob, "--amount", "1.5")
    assert exit_code == 0
    txid = output.splitlines()[0].removeprefix("txid=")
    assert "amount=1.50000000" in output.splitlines()

    # Can't pay more than the wallet holds
    assert cli("send", "--to", bob, "--amount", "1000")[0] == 1

    exit_code, output = cli("mine")
    assert exit_code == 0
    assert output.strip().endswith("txs=2")

    # Bob's key lives in the same wallet, so the payment stays in the balance
    assert "balance=200.00000000" in cli("balance")[1].splitlines()

    exit_code, output = cli("explore", "--tx", txid, "--json")
    assert exit_code == 0
    location = json.loads(output)
    assert location["height"] == 4
    assert location["position"] == 1

    info = json.loads(cli("explore", "4", "--json")[1])
    assert info["height"] == 4
    assert info["tx_count"] == 2

    latest = cli("explore", "--latest", "2")[1].splitlines()
    assert [line.split()[0] for line in latest] == ["4", "3"]

    assert cli("explore", "--tx", "00" * 32)[0] == 2
    assert cli("explore", "not-a-hash")[0] == 1


def test_multisig(cli):
    exit_code, output = cli("multisig", "--m", "2", "--keys", "alice,bob,carol", "--json")
    assert exit_code == 0
    tree = json.loads(output)
    assert (tree["m"], tree["n"]) == (2, 3)
    assert tree["address"].startswith("3")
    assert tree["redeem_script"].endswith("ae")

    # Same labels, same keys
    assert json.loads(cli("multisig", "--m", "2", "--keys", "alice,bob,carol", "--json")[1]) == tree
    assert cli("multisig", "--m", "4", "--keys", "alice,bob,carol")[0] == 1


def test_channel_flow(cli):
    assert cli("init")[0] == 0
    assert cli("mine", "--blocks", "3")[0] == 0
    assert cli("channel", "status")[0] == 2

    exit_code, output = cli("channel", "open", "--payee", "carol", "--capacity", "10")
    assert exit_code == 0
    assert "state=pending" in output.splitlines()
    assert cli("channel", "pay", "--amount", "0.25")[0] == 1

    assert cli("mine")[0] == 0
    assert "state=open" in cli("channel", "status")[1].splitlines()

    exit_code, output = cli("channel", "pay", "--amount", "0.25")
    assert exit_code == 0
    assert "payee_amount=0.25000000" in output.splitlines()
    assert "commitment_index=1" in output.splitlines()

    # A second channel can't be opened while one is live
    assert cli("channel", "open", "--payee", "dave", "--capacity", "1")[0] == 1

    exit_code, output = cli("channel", "close")
    assert exit_code == 0
    assert "state=closed" in output.splitlines()
    assert any(line.startswith("txid=") for line in output.splitlines())

    assert cli("mine")[1].strip().endswith("txs=2")


def test_simulate_is_deterministic(cli, scenario_file):
    path = scenario_file(seed=3, nodes=2, duration=5)
    exit_code, first = cli("simulate", "--scenario", path)
    assert exit_code == 0
    assert first.splitlines()[-1].startswith("digest=")
    assert cli("simulate", "--scenario", path)[1] == first

    tree = json.loads(cli("simulate", "--scenario", path, "--json", "--seed", "4")[1])
    assert tree["seed"] == 4


def test_simulate_bad_scenario(cli, scenario_file, tmp_path):
    assert cli("simulate", "--scenario", scenario_file(topology="mesh"))[0] == 1
    assert cli("simulate", "--scenario", str(tmp_path / "missing.conf"))[0] == 2


def test_simulate_sweep(cli, scenario_file):
    path = scenario_file(seed=1, nodes=2, duration=1, adversary="double-spend")
    exit_code, output = cli("simulate", "--scenario", path, "--sweep", "2", "--sweep-processes", "2", "--json")
    assert exit_code == 0
    tree = json.loads(output)
    assert tree["summary"]["seeds"] == 2
    assert 0 <= tree["summary"]["successes"] <= 2
    assert [report["seed"] for report in tree["reports"]] == [1, 2]
