"""Retry policy for remote backend calls."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, TypeVar

from .errors import TransportError

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class RetryPolicy:
    """Capped exponential backoff: base * 2^attempt, up to max_delay_s."""

    attempts: int = 3
    base_delay_s: float = 1.0
    max_delay_s: float = 30.0

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("retry attempts must be >= 1")

    def delay_for(self, attempt: int) -> float:
        """Delay before retrying after the given 0-based failed attempt."""
        return min(self.base_delay_s * (2**attempt), self.max_delay_s)


def call_with_retries(
    fn: Callable[[], T],
    *,
    policy: RetryPolicy = RetryPolicy(),
    sleep: Callable[[float], None] = time.sleep,
    what: str = "backend call",
) -> T:
    """Run fn, retrying TransportError up to the policy's attempt budget."""
    last: TransportError | None = None
    for attempt in range(policy.attempts):
        try:
            return fn()
        except TransportError as exc:
            last = exc
            if attempt == policy.attempts - 1:
                break
            delay = policy.delay_for(attempt)
            logger.warning(
                "%s failed (attempt %d/%d): %s; retrying in %.1fs",
                what,
                attempt + 1,
                policy.attempts,
                exc,
                delay,
            )
            sleep(delay)
    assert last is not None
    raise last
