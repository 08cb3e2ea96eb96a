"""Per-checkpoint convergence records shared by the run loops and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

CSV_HEADER = "checkpoint,epoch,seconds,primal,dual,gap,nnz_w,zero_kappa"


@dataclass(frozen=True)
class TraceRecord:
    """One convergence checkpoint.

    ``epoch`` counts cumulative sampled dual coordinates divided by n, so
    costs are comparable across mini-batch sizes.  ``gap`` is literally
    ``primal - dual``.  ``zero_kappa`` counts dual coordinates whose
    optimality violation is exactly zero; ``nnz_w`` counts nonzero weights.
    """

    checkpoint: int
    epoch: float
    seconds: float
    primal: float
    dual: float
    gap: float
    nnz_w: int
    zero_kappa: int

    def csv_row(self) -> str:
        return (
            f"{self.checkpoint},{self.epoch!r},{self.seconds!r},{self.primal!r},"
            f"{self.dual!r},{self.gap!r},{self.nnz_w},{self.zero_kappa}"
        )


def write_trace_csv(records, path) -> None:
    """Write records with the fixed header, one row per checkpoint."""
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(rec.csv_row() + "\n")
