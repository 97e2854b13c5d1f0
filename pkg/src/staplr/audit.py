"""Index-level audit trail for cross-validated fitting.

Every fitting routine in this package works on positions 0..n-1 of
whatever array it was handed.  When fits happen inside folds inside
folds, checking for train/test leakage requires mapping those local
positions back to the original dataset rows.  An :class:`AuditTrail`
carries that mapping: ``child(rows)`` narrows the view the same way the
data were subset, and ``record`` logs which original rows a fit trained
on and which it was evaluated against.  The log can then be swept for
overlaps by a test, independent of the fold bookkeeping being audited.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AuditRecord:
    """One logged fit: a label plus global train/eval row sets."""

    label: str
    train_rows: frozenset
    eval_rows: frozenset


class AuditTrail:
    """Maps local observation positions to original dataset rows.

    Parameters
    ----------
    base:
        Global row index for each local position.  The root trail uses
        ``arange(n)``.
    log:
        Shared list that records accumulate into; children append to
        their parent's list.
    """

    def __init__(self, base, log=None):
        self.base = np.asarray(base, dtype=np.int64)
        self.log = [] if log is None else log

    @classmethod
    def for_dataset(cls, n_observations):
        return cls(np.arange(n_observations, dtype=np.int64))

    def child(self, local_rows):
        """A trail for a subset taken with ``data[local_rows]``."""
        return AuditTrail(self.base[np.asarray(local_rows, dtype=np.int64)],
                          self.log)

    def record(self, label, train_rows, eval_rows=()):
        """Log a fit on ``train_rows`` evaluated on ``eval_rows`` (local)."""
        tr = frozenset(self.base[np.asarray(train_rows, dtype=np.int64)].tolist())
        ev = frozenset(self.base[np.asarray(eval_rows, dtype=np.int64)].tolist())
        self.log.append(AuditRecord(label, tr, ev))

    def overlaps(self):
        """All records whose train and eval sets intersect (should be none)."""
        return [r for r in self.log if r.train_rows & r.eval_rows]
