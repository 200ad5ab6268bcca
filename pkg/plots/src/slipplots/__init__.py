"""Figure generation for slipflat experiment tables."""

from .figures import FigureSpec, KINDS, SchemaError, Table, read_table, render

__all__ = ["FigureSpec", "KINDS", "SchemaError", "Table", "read_table", "render"]
