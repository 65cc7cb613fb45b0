"""Violation bookkeeping shared by every randomized sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

# Chunk size used by all vectorized sweeps.
CHUNK = 100_000


@dataclass
class ViolationReport:
    """Outcome of a randomized inequality sweep.

    ``worst_residual`` is the largest residual seen over all trials, violating
    or not. ``witness`` holds the inputs of the worst violating trial and is
    ``None`` exactly when ``violations == 0``.
    """

    trials: int
    violations: int = 0
    worst_residual: float = -np.inf
    witness: dict[str, Any] | None = None
    label: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def merge(self, other: "ViolationReport") -> "ViolationReport":
        """Combine two reports; the operation is associative and commutative up to witness ties."""
        witness = self.witness
        if other.witness is not None and (
            witness is None or other.witness["residual"] > witness["residual"]
        ):
            witness = other.witness
        return ViolationReport(
            trials=self.trials + other.trials,
            violations=self.violations + other.violations,
            worst_residual=max(self.worst_residual, other.worst_residual),
            witness=witness,
            label=self.label or other.label,
        )

    def summary(self) -> str:
        return (
            f"{self.label or 'sweep'}: {self.violations}/{self.trials} violations, "
            f"worst residual {self.worst_residual:.3e}"
        )


class Tally:
    """Accumulates residual batches into a :class:`ViolationReport`."""

    def __init__(self, label: str = ""):
        self.report = ViolationReport(trials=0, label=label)

    def add(
        self,
        residual: np.ndarray,
        allowed: np.ndarray | float,
        witness: Callable[[int], dict[str, Any]],
    ) -> None:
        residual = np.asarray(residual, dtype=float)
        if residual.size == 0:
            return
        rep = self.report
        rep.trials += residual.size
        # nan residuals are failures, not silent passes
        bad = ~(residual <= allowed)
        rep.worst_residual = max(rep.worst_residual, float(np.nanmax(residual)) if np.isfinite(residual).any() else np.inf)
        n_bad = int(bad.sum())
        if n_bad:
            rep.violations += n_bad
            masked = np.where(bad, np.nan_to_num(residual, nan=np.inf), -np.inf)
            i = int(np.argmax(masked))
            value = float(residual[i])
            if rep.witness is None or value > rep.witness["residual"]:
                rep.witness = {"residual": value, **witness(i)}
