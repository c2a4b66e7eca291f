from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from mathrec.data.manifest import FormulaSample, bucket_index, validate_buckets

logger = logging.getLogger(__name__)


class EmptyBucketWarning(UserWarning):
    """A length bucket holds fewer formulas than requested."""


def dedup(samples: Sequence[FormulaSample]) -> list[FormulaSample]:
    """Keep the first record of every distinct latex string, preserving order."""
    seen = set()
    out = []
    for s in samples:
        if s.latex not in seen:
            seen.add(s.latex)
            out.append(s)
    return out


def group_by_bucket(samples: Sequence[FormulaSample], boundaries: Sequence[int]) -> list[list[int]]:
    groups: list[list[int]] = [[] for _ in range(len(boundaries) - 1)]
    for i, s in enumerate(samples):
        b = bucket_index(s.token_length, boundaries)
        if b is None:
            logger.warning("token length %d outside buckets; dropping %r", s.token_length, s.latex)
            continue
        groups[b].append(i)
    return groups


def length_balanced_sample(samples: Sequence[FormulaSample], buckets: Sequence[int],
                           per_bucket: int, seed: int) -> list[FormulaSample]:
    """Draw up to ``per_bucket`` records per token-length bucket without replacement.

    Each bucket uses its own generator seeded by ``(seed, bucket)`` so a bucket's
    draw does not depend on the others.  Selected records keep input order.
    """
    boundaries = validate_buckets(buckets)
    if per_bucket < 1:
        raise ValueError("per_bucket must be >= 1")
    chosen: list[int] = []
    for b, members in enumerate(group_by_bucket(samples, boundaries)):
        lo, hi = boundaries[b], boundaries[b + 1]
        if len(members) < per_bucket:
            logger.warning("%s: bucket [%d, %d) has %d of %d requested formulas",
                           EmptyBucketWarning.__name__, lo, hi, len(members), per_bucket)
        take = min(per_bucket, len(members))
        if take == 0:
            continue
        rng = np.random.default_rng([seed, b])
        picks = rng.choice(len(members), size=take, replace=False)
        chosen.extend(members[int(p)] for p in picks)
    return [samples[i] for i in sorted(chosen)]
