"""Seeded random number generation.

Every random draw in goldcorrect comes from a numpy Philox generator, a counter-based
bit generator whose stream only depends on its key. Keys are derived from a parent
seed and a tuple of labels, so that independent parts of an experiment (stage 1 and
stage 2 of a method, one sweep cell and the next) never share or shift each other's
streams.

Examples:
    .. code-block:: python

        from goldcorrect.rng import derive_seed, generator

        run_seed = 7
        stage_seed = derive_seed(run_seed, "stage1")
        rng = generator(run_seed, "shuffle")
        rng.permutation(10)

"""

import hashlib
import struct

import numpy as np

from goldcorrect.errors import InvalidInputError
from goldcorrect.parser import seed_int

RNG_SCHEME = "philox4x64-seedseq/1"


def _encode_label(label):
    if isinstance(label, bool):
        return b"b" + (b"1" if label else b"0")
    if isinstance(label, (int, np.integer)):
        return b"i" + str(int(label)).encode()
    if isinstance(label, (float, np.floating)):
        return b"f" + struct.pack(">d", float(label))
    if isinstance(label, str):
        return b"s" + label.encode()
    raise InvalidInputError(label, "seed labels must be str, int, float or bool")


def derive_seed(seed, *labels):
    """Derive a stable 64-bit seed from `seed` and a sequence of labels.

    The derivation is a BLAKE2b hash over a canonical encoding, so it does not depend
    on the platform, the Python version or ``PYTHONHASHSEED``.
    """
    digest = hashlib.blake2b(digest_size=8, person=b"goldcorrect")
    digest.update(RNG_SCHEME.encode())
    digest.update(struct.pack(">Q", seed_int(seed)))
    for label in labels:
        encoded = _encode_label(label)
        digest.update(struct.pack(">I", len(encoded)))
        digest.update(encoded)
    return int.from_bytes(digest.digest(), "big")


def generator(seed, *labels):
    """Return a fresh Philox-backed generator for `seed` and optional labels."""
    key = derive_seed(seed, *labels) if labels else seed_int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
