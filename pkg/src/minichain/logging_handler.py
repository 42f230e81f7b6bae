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
import logging.handlers
import multiprocessing
import queue
import sys
import time
import traceback
from ctypes import c_bool

# Logging formatter
FORMATTER_FMT = "[%(asctime)s] [%(levelname)-.1s] %(message)s"
FORMATTER_FMT_SUFFIX = "[%(asctime)s] [%(levelname)-.1s] [{suffix}] %(message)s"
FORMATTER_DATEFMT = "%Y-%m-%d %H:%M:%S"

# How long stop() waits for the listener to drain the queue
LISTENER_JOIN_TIMEOUT = 5.0

# Queue poll timeout of the listener, bounds flush() latency
LISTENER_POLL = 0.05


def worker_configurer(queue_: multiprocessing.Queue, suffix: str | None = None) -> list[logging.Handler]:
    """Routes this process's root logger into queue_. Call it first thing in every worker process

    Args:
        queue_ (multiprocessing.Queue): logging queue
        suffix (str | None, optional): suffix for formatter for current process. Defaults to None

    Returns:
        list[logging.Handler]: root handlers that were replaced
    """
    # Remove all current handlers
    root_logger = logging.getLogger()
    previous = list(root_logger.handlers)
    for handler in previous:
        root_logger.removeHandler(handler)

    # Setup queue handler
    queue_handler = logging.handlers.QueueHandler(queue_)
    root_logger.addHandler(queue_handler)
    root_logger.setLevel(logging.DEBUG)

    formatter = logging.Formatter(
        FORMATTER_FMT_SUFFIX.format(suffix=suffix) if suffix else FORMATTER_FMT, datefmt=FORMATTER_DATEFMT
    )
    queue_handler.setFormatter(formatter)

    logging.debug(f"Logging setup is complete for process with PID: {multiprocessing.current_process().pid}")
    return previous


class LoggingHandler:
    def __init__(self, verbose: bool = False):
        """Initializer LoggingHandler instance. Records are printed to stderr, stdout is left
        to command output

        Args:
            verbose (bool, optional): True for DEBUG level, False for INFO. Defaults to False
        """
        self._verbose = verbose

        self._queue = multiprocessing.Queue(-1)
        self._flush_request = multiprocessing.Value(c_bool, False)
        self._process: multiprocessing.Process | None = None
        self._previous_handlers: list[logging.Handler] = []
        self._previous_level = logging.WARNING

    @property
    def queue_(self) -> multiprocessing.Queue:
        """
        Returns:
            multiprocessing.Queue: logging queue
        """
        return self._queue

    def flush(self) -> None:
        """Requests handlers flush and waits until flushed"""
        with self._flush_request.get_lock():
            self._flush_request.value = True
        while self._process is not None and self._process.is_alive():
            with self._flush_request.get_lock():
                flush_request = self._flush_request.value
            if not flush_request:
                break
            time.sleep(0.01)

    def start(self) -> None:
        """Starts listener process and sends this process's records to it"""
        self._process = multiprocessing.Process(target=self.configure_and_start_listener, daemon=True)
        self._process.start()
        root_logger = logging.getLogger()
        self._previous_level = root_logger.level
        self._previous_handlers = worker_configurer(self._queue)

    def stop(self) -> None:
        """Stops listener and restores this process's root handlers"""
        root_logger = logging.getLogger()
        for handler in list(root_logger.handlers):
            if isinstance(handler, logging.handlers.QueueHandler) and handler.queue is self._queue:
                root_logger.removeHandler(handler)
        for handler in self._previous_handlers:
            root_logger.addHandler(handler)
        root_logger.setLevel(self._previous_level)

        if self._process is not None:
            self._queue.put(None)
            self._process.join(LISTENER_JOIN_TIMEOUT)
            if self._process.is_alive():
                self._process.terminate()
            self._process = None
        self._queue.close()
        self._queue.join_thread()

    def _serve_flush_request(self, handler: logging.Handler) -> None:
        with self._flush_request.get_lock():
            if self._flush_request.value:
                handler.flush()
                self._flush_request.value = False

    def configure_and_start_listener(self) -> None:
        """Listener process body. Prints records to stderr until None arrives on the queue"""
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.DEBUG if self._verbose else logging.INFO)

        root_logger = logging.getLogger()
        for handler in list(root_logger.handlers):
            root_logger.removeHandler(handler)
        root_logger.addHandler(console_handler)
        root_logger.setLevel(console_handler.level)

        while True:
            try:
                self._serve_flush_request(console_handler)
                try:
                    record = self._queue.get(timeout=LISTENER_POLL)
                except queue.Empty:
                    continue

                if record is None:
                    break
                if record.message is not None and record.levelno >= console_handler.level:
                    logging.getLogger(record.name).handle(record)

            # Ignore Ctrl+C, the parent stops the listener with None
            except (SystemExit, KeyboardInterrupt):
                pass

            except Exception:
                print("Logging error: ", file=sys.stderr)
                traceback.print_exc(file=sys.stderr)

        console_handler.flush()
