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

import ctypes
import gc
import logging
import multiprocessing
import queue
import threading
import time

from minichain.errors import MinichainError, ValidationError
from minichain.netsim import ScenarioConfig
from minichain.sweep_process import sweep_process

# To prevent overloading and smooth queue handling
LOOP_DELAY = 0.25

# Progress log interval
STATS_INTERVAL = 1.0

# How long to wait for results still in the pipe after every worker exited
RESULTS_GRACE = 2.0


class SweepError(MinichainError):
    """A sweep worker failed or exited without delivering its result"""


class SweepRunner:
    def __init__(self, workers_num: int, logging_queue: multiprocessing.Queue):
        """Initializes SweepRunner instance
        This class runs independent seeded simulations from the queue in worker processes

        Args:
            workers_num (int): number of worker processes
            logging_queue (multiprocessing.Queue): queue for worker_configurer()
        """
        if workers_num < 1:
            raise ValidationError(f"At least one sweep worker is required, got {workers_num}")
        self._workers_num = workers_num
        self._logging_queue = logging_queue

        self._queue = multiprocessing.Queue(-1)
        self._results = multiprocessing.Queue(-1)
        self._seeds_total = 0

        self._stop_flag = multiprocessing.Value(ctypes.c_bool, False)
        self._error_flag = multiprocessing.Value(ctypes.c_bool, False)
        self._seeds_processed = multiprocessing.Value(ctypes.c_uint64, 0)

        # Start background loop
        self._workers = []
        self._checker_loop_running = True
        self._finished = True
        self._stats_timer = time.time()
        logging.debug("Starting _checker_loop()")
        self._checker_thread = threading.Thread(target=self._checker_loop, daemon=True)
        self._checker_thread.start()

    @property
    def finished(self) -> bool:
        """
        Returns:
            bool: True if nothing to process
        """
        if not self._queue.empty():
            return False
        return self._finished

    @property
    def error(self) -> bool:
        """
        Returns:
            bool: True in case of error occurred while running scenarios
        """
        with self._error_flag.get_lock():
            error_flag_ = self._error_flag.value
        return error_flag_

    def clear_error(self) -> None:
        """Clears error flag"""
        with self._error_flag.get_lock():
            self._error_flag.value = False

    @property
    def seeds_total(self) -> int:
        return self._seeds_total

    @property
    def seeds_processed(self) -> int:
        with self._seeds_processed.get_lock():
            seeds_processed_ = self._seeds_processed.value
        return seeds_processed_

    def get_progress(self) -> float:
        """
        Returns:
            float: sweep progress in [0-1] range
        """
        seeds_processed_ = self.seeds_processed
        if self._seeds_total != 0 and seeds_processed_ <= self._seeds_total:
            return seeds_processed_ / self._seeds_total
        return 0.0 if self._seeds_total == 0 else 1.0

    def add_scenario(self, config: ScenarioConfig) -> None:
        """Adds scenario to the queue

        Raises:
            ValidationError: invalid scenario (checked here so workers never see it)
        """
        config.validate()
        logging.debug(f"Adding scenario with seed {config.seed} to the queue")
        self._seeds_total += 1
        self._queue.put(config)

    def run(self, config: ScenarioConfig, count: int) -> list:
        """Runs count scenarios with seeds config.seed, config.seed + 1, ... and waits for all of them

        Args:
            config (ScenarioConfig): scenario of the first seed
            count (int): number of seeds

        Raises:
            ValidationError: invalid scenario or count
            SweepError: a worker failed

        Returns:
            list[SimReport | AttackReport]: reports ordered by seed
        """
        if count < 1:
            raise ValidationError(f"Sweep needs at least one seed, got {count}")
        seeds = [config.seed + offset for offset in range(count)]
        for seed in seeds:
            self.add_scenario(config.with_seed(seed))

        reports = {}
        finished_at = None
        while len(reports) < count:
            if self.error:
                self.clear_error()
                self.clear()
                raise SweepError("Sweep worker failed, see log for details")
            try:
                seed, report = self._results.get(timeout=LOOP_DELAY)
                reports[seed] = report
                continue
            except queue.Empty:
                pass

            # Workers gone but results missing
            if self.finished:
                finished_at = finished_at or time.time()
                if time.time() - finished_at > RESULTS_GRACE:
                    raise SweepError(f"Sweep workers exited with {count - len(reports)} results missing")
            else:
                finished_at = None

        logging.info(f"Sweep finished: {count} seeds")
        self._seeds_total = 0
        with self._seeds_processed.get_lock():
            self._seeds_processed.value = 0
        return [reports[seed] for seed in seeds]

    def clear(self) -> None:
        """Clears queues and counters and calls garbage collector
        NOTE: Doesn't clear error flag! You must clear it manually
        """
        while not self._queue.empty():
            self._queue.get()
        while not self._results.empty():
            self._results.get()

        self._seeds_total = 0
        with self._seeds_processed.get_lock():
            self._seeds_processed.value = 0
        gc.collect()

    def stop(self, stop_background_thread: bool = False) -> None:
        """Stops all processes, _checker_loop() and clears the queue
        Doesn't clear error flag, so you can detect if error occurs

        Args:
            stop_background_thread (bool, optional): True to stop _checker_loop(). Defaults to False
        """
        logging.debug("Stopping sweep runner")

        # Request stop
        with self._stop_flag.get_lock():
            if not self._stop_flag.value:
                self._stop_flag.value = True

        # Wait for processes to finish gracefully
        while len(self._workers) != 0:
            for worker in list(self._workers):
                if worker is None or not worker.is_alive():
                    self._workers.remove(worker)
            time.sleep(LOOP_DELAY)

        if stop_background_thread:
            self._checker_loop_running = False
            if self._checker_thread.is_alive():
                logging.debug("Waiting for _checker_thread")
                self._checker_thread.join()

        self.clear()
        logging.debug("Sweep runner stopped")

    def _stats_cli(self) -> None:
        """Logs sweep progress each STATS_INTERVAL"""
        if time.time() - self._stats_timer >= STATS_INTERVAL:
            self._stats_timer = time.time()
            logging.info(
                f"Finished {self.seeds_processed} / {self._seeds_total} seeds ({self.get_progress() * 100.0:.2f}%)"
            )

    def _checker_loop(self) -> None:
        """Checks for scenarios in queue and starts / stops the workers"""
        logging.debug("_checker_loop() started")
        while self._checker_loop_running:
            # Remove exited workers
            for worker in list(self._workers):
                if worker is None or not worker.is_alive():
                    logging.debug(f"Worker {worker} is dead now. Removing it")
                    self._workers.remove(worker)

            with self._error_flag.get_lock():
                error_flag_ = self._error_flag.value

            # Stop all workers in case of error or if nothing to process
            if error_flag_ or (self._queue.empty() and len(self._workers) != 0):
                with self._stop_flag.get_lock():
                    if not self._stop_flag.value:
                        logging.debug("Stopping workers")
                        self._stop_flag.value = True

            # Start workers if we have scenarios to run and no errors
            if not error_flag_ and not self._queue.empty() and len(self._workers) == 0:
                self._finished = False
                with self._stop_flag.get_lock():
                    if self._stop_flag.value:
                        self._stop_flag.value = False
                for i in range(self._workers_num):
                    logging.debug(f"Starting worker {i + 1}")
                    worker = multiprocessing.Process(
                        target=sweep_process,
                        args=(
                            i + 1,
                            self._queue,
                            self._results,
                            self._stop_flag,
                            self._error_flag,
                            self._seeds_processed,
                            self._logging_queue,
                        ),
                    )
                    worker.start()
                    self._workers.append(worker)

            # Sweep considered finished only after all processes are finished
            if len(self._workers) == 0 and self._queue.empty():
                self._finished = True

            if len(self._workers) != 0 and self._seeds_total != 0:
                self._stats_cli()

            time.sleep(LOOP_DELAY)

        logging.debug("_checker_loop() stopped")
