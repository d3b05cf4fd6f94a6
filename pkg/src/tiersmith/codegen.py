"""Human-facing artifacts generated from the definitions.

* ``sql/<Name>_Proc.sql`` - the signature a database developer implements.
* ``scaffold/<Name>.txt`` - what a bean, screen, transaction or request
  handler looks like to the application developer.
* ``manifest.txt`` - one ``kind name inputs outputs`` line per definition.

Everything here is a pure function of the ``ApiDefinition``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Union

from .apidef import (
    ApiDefinition,
    BeanDef,
    FieldDef,
    ProcedureDef,
    RequestHandlerDef,
    ScreenDef,
    Shape,
    TransactionDef,
)

# How procedure parameters appear in a stub signature, keyed by
# (direction, shape).  Numbers travel as text, so every scalar is varchar2.
SQL_TYPES = {
    ("in", Shape.SCALAR): "varchar2",
    ("in", Shape.VECTOR): "stringarray",
    ("out", Shape.SCALAR): "varchar2",
    ("out", Shape.VECTOR): "cursortype",
}


@dataclass(frozen=True)
class Artifact:
    path: str
    content: str


def emit_procedure_stub(p: ProcedureDef) -> Artifact:
    params = [(f, "in") for f in p.request] + [(f, "out") for f in p.response]
    lines = [f"procedure {p.name}_Proc"]
    if params:
        lines.append("(")
        for index, (fdef, direction) in enumerate(params):
            comma = "," if index < len(params) - 1 else ""
            lines.append(f"  {fdef.name} {direction} {SQL_TYPES[direction, fdef.shape]}{comma}")
        lines.append(");")
    else:
        lines[0] += ";"
    return Artifact(f"sql/{p.name}_Proc.sql", "\n".join(lines) + "\n")


def _describe(fdef: FieldDef) -> str:
    if fdef.shape is Shape.SCALAR:
        return fdef.type.name
    if fdef.shape is Shape.BEAN:
        return f"bean {fdef.type.name}"
    return f"vector of {fdef.type.name}"


def _field_lines(fields: Iterable[FieldDef], indent: str = "    ") -> list[str]:
    lines = [f"{indent}{f.name}: {_describe(f)}" for f in fields]
    return lines or [f"{indent}(none)"]


def emit_skeleton_scaffold(d: Union[TransactionDef, RequestHandlerDef]) -> Artifact:
    if isinstance(d, TransactionDef):
        names = [f.name for f in d.request] + [f.name for f in d.response]
        lines = [f"transaction {d.name}", "  inputs:"]
        lines += _field_lines(d.request)
        lines += ["  outputs:"]
        lines += _field_lines(d.response)
        lines += [f"  process({', '.join(names)})"]
    else:
        lines = [f"request {d.name}", "  inputs:"]
        lines += _field_lines(d.request)
        lines += ["  outputs:", "    returns screen"]
        lines += [f"  process({', '.join(f.name for f in d.request)}) -> screen"]
    lines.append("    (business logic goes here)")
    return Artifact(f"scaffold/{d.name}.txt", "\n".join(lines) + "\n")


def emit_bean_scaffold(d: Union[BeanDef, ScreenDef], api: ApiDefinition) -> Artifact:
    head = f"{d.kind} {d.name}"
    if isinstance(d, BeanDef) and d.extends:
        head += f" extends {d.extends}"
    lines = [head, "  fields:"]
    lines += _field_lines(api.fields_of(d))
    accessors = []
    for fdef in api.fields_of(d):
        if fdef.shape is Shape.VECTOR:
            accessors.append(f"    get/set VectorOf{fdef.name}, add{fdef.name}")
        else:
            accessors.append(f"    get/set {fdef.name}")
    lines += ["  accessors:"] + (accessors or ["    (none)"])
    return Artifact(f"scaffold/{d.name}.txt", "\n".join(lines) + "\n")


def _arity(defn) -> tuple[int, int]:
    if isinstance(defn, (TransactionDef, ProcedureDef)):
        return len(defn.request), len(defn.response)
    if isinstance(defn, RequestHandlerDef):
        return len(defn.request), 0
    return len(defn.fields), 0


def emit_manifest(api: ApiDefinition) -> Artifact:
    lines = []
    for kind in ("bean", "screen", "transaction", "request", "procedure"):
        for name in sorted(api.collection(kind)):
            defn = api.collection(kind)[name]
            if isinstance(defn, BeanDef):
                n_in, n_out = len(api.fields_of(defn)), 0
            else:
                n_in, n_out = _arity(defn)
            lines.append(f"{kind} {name} {n_in} {n_out}")
    return Artifact("manifest.txt", "".join(line + "\n" for line in lines))


def generate(api: ApiDefinition) -> list[Artifact]:
    """Every artifact for ``api``, sorted by path."""
    out = [emit_manifest(api)]
    for bean in api.beans.values():
        out.append(emit_bean_scaffold(bean, api))
    for screen in api.screens.values():
        out.append(emit_bean_scaffold(screen, api))
    for t in api.transactions.values():
        out.append(emit_skeleton_scaffold(t))
    for h in api.handlers.values():
        out.append(emit_skeleton_scaffold(h))
    for p in api.procedures.values():
        out.append(emit_procedure_stub(p))
    paths = [a.path for a in out]
    if len(paths) != len(set(paths)):
        raise ValueError("artifact paths collide")
    return sorted(out, key=lambda a: a.path)


def write_artifacts(artifacts: Iterable[Artifact], out_dir: Union[str, Path]) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for artifact in artifacts:
        target = out_dir / artifact.path
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_bytes(artifact.content.encode("utf-8"))
        os.replace(tmp, target)
        written.append(target)
    return written
