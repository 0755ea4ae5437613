"""The ASN sweep CSV contract: columns
profile, N, lam, lam_pct, n, n_pct, success_rate, trials.

Rows with n < 0 mark profiles where no sample size reached the success
target; they stay in the table (the cumulative plot counts them as never
auditable).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

EXPECTED_COLUMNS = ("profile", "N", "lam", "lam_pct", "n", "n_pct", "success_rate", "trials")


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class AsnRow:
    profile: str
    population: int
    lam: float
    lam_pct: float
    n: int
    n_pct: float
    success_rate: float
    trials: int

    @property
    def auditable(self) -> bool:
        return self.n >= 0


@dataclass
class AsnTable:
    rows: list[AsnRow]

    def populations(self) -> list[int]:
        return sorted({r.population for r in self.rows})

    def series(self, population: int) -> list[AsnRow]:
        picked = [r for r in self.rows if r.population == population and r.auditable]
        return sorted(picked, key=lambda r: r.lam)

    def auditable_sizes(self) -> list[int]:
        return sorted(r.n for r in self.rows if r.auditable)


def read_asn_csv(path) -> AsnTable:
    text = Path(path).read_text()
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None:
        raise SchemaError(f"{path}: empty CSV, expected columns {EXPECTED_COLUMNS}")
    missing = [c for c in EXPECTED_COLUMNS if c not in reader.fieldnames]
    extra = [c for c in reader.fieldnames if c not in EXPECTED_COLUMNS]
    if missing or extra:
        raise SchemaError(
            f"{path}: column mismatch (missing {missing or 'none'}, unexpected {extra or 'none'})"
        )
    rows = []
    for record in reader:
        try:
            rows.append(AsnRow(
                profile=record["profile"],
                population=int(record["N"]),
                lam=float(record["lam"]),
                lam_pct=float(record["lam_pct"]),
                n=int(float(record["n"])),
                n_pct=float(record["n_pct"]),
                success_rate=float(record["success_rate"]),
                trials=int(record["trials"]),
            ))
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{path}: bad row {record!r}: {exc}") from None
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for row in rows:
        if not 0.0 <= row.success_rate <= 1.0:
            raise SchemaError(f"{path}: success_rate out of [0,1] in {row}")
        if row.auditable and abs(row.n_pct - row.n / row.population) > 0.005:
            raise SchemaError(f"{path}: n_pct inconsistent with n/N in {row}")
    return AsnTable(rows)
