"""Rendering for the audit engine's ASN sweep CSVs (SVG by default)."""

from .asn_csv import AsnTable, SchemaError, read_asn_csv
from .figures import render_asn_curve, render_cumulative

__all__ = [
    "AsnTable",
    "SchemaError",
    "read_asn_csv",
    "render_asn_curve",
    "render_cumulative",
]
