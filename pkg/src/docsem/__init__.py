"""Executable set-based semantics for object-oriented modeling documents.

Object models, state transition documents, message sequence documents, and
informal documents all denote sets of finite system traces; this package
parses them, evaluates satisfaction, enumerates bounded universes, checks
refinement/redundancy/consistency with counterexamples, simulates lifecycle
documents, and manages a development graph of checked transformations.
"""

from .diagnostics import (ContextError, Diagnostic, DiagnosticsError,
                          DocsemError, EmptyUniverseError, EvalError,
                          GraphError, ParseError, SimulationError, TypeError_)
from .model import (ENV, BoolDomain, ClassDecl, ClassTable, EnumDomain,
                    IntDomain, MsgEvent, ObjectState, OpSig, RefDomain,
                    Snapshot, SystemTrace, Violation, link_partners,
                    objects_of, parse_trace, render_trace, validate_system)
from .sl import (SINGLE, TWO, SlContext, check_types, eval_pair, eval_single,
                 parse_sl, render_sl)
from .documents import (AssocDecl, AssocEnd, Document, Invariant, ItdDoc,
                        MergedModel, MscAlt, MscBasic, MscDoc, MscLoop,
                        MscRef, MscSeq, OmClass, OmDoc, OutTemplate, StdDoc,
                        Transition, check_context, merge_oms, parse_document,
                        render_document)
from .semantics import (Bounds, derive_bounds, enumerate_traces,
                        refinement_bounds, satisfies, satisfies_msc,
                        satisfies_om, satisfies_set, satisfies_std, universe,
                        within_bounds)
from .checker import (FAILS, HOLDS, Verdict, check_consistent,
                      check_redundant, check_refines, msc_conformance,
                      render_verdict, simulate)
from .devgraph import (DevGraph, Evidence, NodeInfo, TransformFailed,
                       TransformRecord, init_graph, load_graph, status_lines)

__all__ = [name for name in dir() if not name.startswith("_")]
