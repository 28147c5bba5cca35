"""Defines parser helpers.

Converters here are used by attrs fields all over goldcorrect. The override helpers
turn ``--some.key=value`` command line flags into updates of a nested config dict.
"""

import json
import math

from goldcorrect.errors import InvalidInputError


def positive_int(val):
    """Parse `val` into a positive integer."""
    if isinstance(val, float) and not val.is_integer():
        raise InvalidInputError(val, "must not be a fractional float")
    if isinstance(val, bool):
        raise InvalidInputError(val, "must be an integer, not a boolean")
    try:
        val = int(val)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(val, "must be an integer") from e
    if val >= 0:
        return val
    raise InvalidInputError(val, "must be positive")


def strictly_positive_int(val):
    """Parse `val` into a strictly positive integer."""
    val = positive_int(val)
    if val > 0:
        return val
    raise InvalidInputError(val, "must be strictly positive")


def finite_float(val):
    """Parse `val` into a finite float."""
    try:
        val = float(val)
    except (TypeError, ValueError) as e:
        raise InvalidInputError(val, "must be a real number") from e
    if math.isfinite(val):
        return val
    raise InvalidInputError(val, "must be finite")


def non_negative_float(val):
    """Parse `val` into a finite float greater than or equal to 0."""
    val = finite_float(val)
    if val >= 0:
        return val
    raise InvalidInputError(val, "must be positive or zero")


def strictly_positive_float(val):
    """Parse `val` into a finite float strictly greater than 0."""
    val = finite_float(val)
    if val > 0:
        return val
    raise InvalidInputError(val, "must be strictly positive")


def unit_interval_float(val):
    """Parse `val` into a float in [0, 1]."""
    val = finite_float(val)
    if 0 <= val <= 1:
        return val
    raise InvalidInputError(val, "must lie in [0, 1]")


def open_unit_interval_float(val):
    """Parse `val` into a float in (0, 1)."""
    val = finite_float(val)
    if 0 < val < 1:
        return val
    raise InvalidInputError(val, "must lie strictly between 0 and 1")


def seed_int(val):
    """Parse `val` into a 64-bit unsigned seed."""
    val = positive_int(val)
    if val < 2**64:
        return val
    raise InvalidInputError(val, "must fit in 64 bits")


def parse_override(flag):
    """Split a ``--dotted.key=value`` flag into its key and parsed value.

    Values are read as JSON when possible (numbers, booleans, lists), otherwise they
    are kept as plain strings.
    """
    if not flag.startswith("--") or "=" not in flag:
        raise InvalidInputError(flag, 'overrides must look like "--key=value"')
    key, raw_value = flag[2:].split("=", 1)
    if not key:
        raise InvalidInputError(flag, "override key is empty")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    return key, value


def apply_overrides(config, flags):
    """Return a copy of the nested `config` dict with every override flag applied.

    Only keys that already exist in `config` can be overridden, which catches typos.
    """
    config = json.loads(json.dumps(config))
    for flag in flags:
        key, value = parse_override(flag)
        *parents, leaf = key.split(".")
        node = config
        for parent in parents:
            if not isinstance(node, dict) or parent not in node:
                raise InvalidInputError(key, "unknown configuration key")
            node = node[parent]
        if not isinstance(node, dict) or leaf not in node:
            raise InvalidInputError(key, "unknown configuration key")
        node[leaf] = value
    return config
