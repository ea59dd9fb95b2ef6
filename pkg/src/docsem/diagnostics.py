"""Shared error types and positioned diagnostics."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    """A positioned message tied to a source (file path or document id)."""

    message: str
    line: int = 0
    col: int = 0
    source: str | None = None

    def __str__(self) -> str:
        where = self.source or "<input>"
        if self.line:
            return f"{where}:{self.line}:{self.col}: {self.message}"
        return f"{where}: {self.message}"


class DocsemError(Exception):
    """Base class for all toolkit errors."""


class DiagnosticsError(DocsemError):
    """Error carrying one or more positioned diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


class ParseError(DiagnosticsError):
    """Syntax or intra-document invariant failure."""


class TypeError_(DiagnosticsError):
    """Expression failed type checking."""


class ContextError(DiagnosticsError):
    """Document (set) fails cross-document context conditions."""


class EvalError(DocsemError):
    """Evaluation failure (nil dereference, unbound name, unknown object)."""


class EmptyUniverseError(DocsemError):
    """Bounds derive an empty class table and nothing to enumerate."""


class SimulationError(DocsemError):
    """Simulator could not extend the trace as directed."""


class GraphError(DocsemError):
    """Development graph operation failed."""
