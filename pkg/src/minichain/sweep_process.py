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

import logging
import multiprocessing
import queue
import time
from multiprocessing.sharedctypes import SynchronizedBase

from minichain.logging_handler import worker_configurer
from minichain.netsim import ScenarioConfig, Simulator

# Must be small to prevent waiting between scenarios
LOOP_DELAY = 0.05


def run_scenario(config: ScenarioConfig):
    """Runs one seeded scenario

    Returns:
        SimReport | AttackReport: attack report for double-spend scenarios, simulation report otherwise
    """
    simulator = Simulator(config)
    report = simulator.run()
    if config.adversary == "double-spend":
        return simulator.attack_report()
    return report


def sweep_process(
    id_: int,
    queue_: multiprocessing.Queue,
    results: multiprocessing.Queue,
    stop_flag: SynchronizedBase,
    error_flag: SynchronizedBase,
    seeds_processed: SynchronizedBase,
    logging_queue: multiprocessing.Queue,
) -> None:
    """Retrieves scenario configs from the queue, runs them and puts (seed, report) into results

    Args:
        id_ (int): worker id (1 - ...) for logging
        queue_ (multiprocessing.Queue): queue of ScenarioConfig instances
        results (multiprocessing.Queue): (seed, report) tuples go here
        stop_flag (multiprocessing.Value): set to True to stop the process
        error_flag (multiprocessing.Value): this will be set to True in case of error
        seeds_processed (multiprocessing.Value): incremented after each finished scenario
        logging_queue (multiprocessing.Queue): queue for worker_configurer()
    """
    worker_configurer(logging_queue, suffix=f"S{id_:02}")

    while True:
        # Non-blocking way to get data from the queue or exit by stop_flag
        while True:
            with stop_flag.get_lock():
                stop_flag_ = stop_flag.value
            if stop_flag_:
                logging.debug("sweep_process() finished")
                return

            try:
                config = queue_.get(block=False)
                if config is not None:
                    break
            except queue.Empty:
                pass

            time.sleep(LOOP_DELAY)

        try:
            logging.debug(f"Running scenario with seed {config.seed}")
            results.put((config.seed, run_scenario(config)))
            with seeds_processed.get_lock():
                seeds_processed.value += 1

        # Catch SIGTERM and CTRL+C
        except (SystemExit, KeyboardInterrupt):
            logging.warning("Interrupted")
            with error_flag.get_lock():
                error_flag.value = True
            return

        except Exception as e_:
            with error_flag.get_lock():
                error_flag.value = True
            logging.error(f"Scenario with seed {config.seed} failed: {e_}")
            logging.debug("sweep_process() finished due to error", exc_info=e_)
            return
