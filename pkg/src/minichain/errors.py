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


class MinichainError(Exception):
    """Base class for every error raised on purpose by minichain"""

    # Process exit code for main.dispatch()
    exit_code = 1


class ValidationError(MinichainError):
    """Invalid input, invalid data or rejected by consensus rules"""

    exit_code = 1


class NotFoundError(MinichainError):
    """Requested block, transaction, key or record is unknown"""

    exit_code = 2


class StorageError(MinichainError):
    """Reading or writing the data directory failed"""

    exit_code = 3
