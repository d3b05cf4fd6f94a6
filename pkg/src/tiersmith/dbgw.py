"""Stored-procedure gateway.

Business logic never writes SQL.  It calls a declared procedure by name;
the gateway borrows a pooled connection, invokes the backend, turns
returned row sets into bean vectors and gives the connection back, on
every path out.

The shipped backend is an in-memory mock: procedure bodies are Python
callables over a ``TableStore``.  A real database adapter implements the
same two-method ``Backend``/``Connection`` protocol.
"""
from __future__ import annotations

import csv
import itertools
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterator, Mapping, Optional, Protocol, Sequence, Union

from .apidef import ApiDefinition, ProcedureDef, Shape
from .beans import BeanValue, from_rows
from .errors import (
    CcSystemError,
    CcUnavailable,
    DoubleRelease,
    ForeignToken,
    NotFound,
    PoolExhausted,
    RowMappingError,
    StructureError,
    Violation,
    ViolationError,
)

log = logging.getLogger(__name__)

DEFAULT_CAPACITY = 8
DEFAULT_TIMEOUT = 5.0

Row = Mapping[str, Optional[str]]
RowSet = Sequence[Row]


class Connection(Protocol):
    def call(
        self, name: str, scalars: Mapping[str, str], vectors: Mapping[str, list[str]]
    ) -> tuple[Mapping[str, str], Mapping[str, RowSet]]:
        ...

    def close(self) -> None:
        ...


class Backend(Protocol):
    def connect(self) -> Connection:
        ...


# ---------------------------------------------------------------------------
# Pool


class PooledConnection:
    """Single-use token for one borrowed connection."""

    __slots__ = ("pool", "connection", "serial", "broken")

    def __init__(self, pool: ConnectionPool, connection: Connection, serial: int):
        self.pool = pool
        self.connection = connection
        self.serial = serial
        self.broken = False

    def __repr__(self) -> str:
        return f"<PooledConnection #{self.serial}>"


class ConnectionPool:
    def __init__(self, backend: Backend, capacity: int = DEFAULT_CAPACITY, timeout: float = DEFAULT_TIMEOUT):
        if capacity <= 0:
            raise ValueError("pool capacity must be positive")
        if timeout < 0:
            raise ValueError("pool timeout must not be negative")
        self.backend = backend
        self.capacity = capacity
        self.timeout = timeout
        self._cond = threading.Condition()
        self._idle: list[Connection] = []
        self._out: set[int] = set()
        self._issued = itertools.count(1)

    @property
    def available(self) -> int:
        with self._cond:
            return self.capacity - len(self._out)

    def acquire(self, timeout: Optional[float] = None) -> PooledConnection:
        """Borrow a connection, waiting up to ``timeout`` seconds (pool default if None)."""
        wait = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + wait
        with self._cond:
            while len(self._out) >= self.capacity:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise PoolExhausted(
                        f"no connection available within {wait:g}s (capacity {self.capacity})"
                    )
                self._cond.wait(remaining)
            serial = next(self._issued)
            self._out.add(serial)
            connection = self._idle.pop() if self._idle else None
        if connection is None:
            try:
                connection = self.backend.connect()
            except BaseException:
                with self._cond:
                    self._out.discard(serial)
                    self._cond.notify()
                raise
        return PooledConnection(self, connection, serial)

    def release(self, token: PooledConnection) -> None:
        if not isinstance(token, PooledConnection) or token.pool is not self:
            raise ForeignToken(f"{token!r} was not issued by this pool")
        with self._cond:
            if token.serial not in self._out:
                raise DoubleRelease(f"{token!r} already released")
            self._out.remove(token.serial)
            if not token.broken:
                self._idle.append(token.connection)
            self._cond.notify()
        if token.broken:
            try:
                token.connection.close()
            except Exception:  # closing a broken connection is best effort
                log.warning("error closing discarded connection", exc_info=True)

    @contextmanager
    def connection(self, timeout: Optional[float] = None) -> Iterator[PooledConnection]:
        token = self.acquire(timeout)
        try:
            yield token
        except BaseException:
            token.broken = True
            raise
        finally:
            self.release(token)

    def close(self) -> None:
        with self._cond:
            idle, self._idle = self._idle, []
        for conn in idle:
            conn.close()


def acquire(pool: ConnectionPool, timeout: Optional[float] = None) -> PooledConnection:
    return pool.acquire(timeout)


def release(pool: ConnectionPool, token: PooledConnection) -> None:
    if getattr(token, "pool", None) is not pool:
        raise ForeignToken(f"{token!r} was not issued by this pool")
    pool.release(token)


# ---------------------------------------------------------------------------
# Mock backend


class TableStore:
    """Named tables of text rows.  Rows within a table share one column set."""

    def __init__(self, tables: Optional[Mapping[str, Sequence[Row]]] = None):
        self.tables: dict[str, tuple[Mapping[str, str], ...]] = {}
        for name, rows in (tables or {}).items():
            self.add(name, rows)

    def add(self, name: str, rows: Sequence[Row]) -> None:
        frozen = []
        columns = None
        for index, row in enumerate(rows):
            keys = tuple(row)
            if columns is None:
                columns = set(keys)
            elif set(keys) != columns:
                raise ValueError(f"ragged rows in table {name}: row {index} has columns {sorted(keys)}")
            if any(v is None for v in row.values()):
                raise ValueError(f"ragged rows in table {name}: row {index} is missing values")
            frozen.append(MappingProxyType(dict(row)))
        self.tables[name] = tuple(frozen)

    def load_csv(self, path: Union[str, Path], name: Optional[str] = None) -> str:
        """Add a CSV file with a header row; the table name defaults to the file stem."""
        path = Path(path)
        table = name or path.name.split(".")[0]
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh, restkey="\0extra")
            rows = []
            for row in reader:
                if "\0extra" in row:
                    raise ValueError(f"ragged rows in {path}: line {reader.line_num} has extra cells")
                rows.append(row)
        self.add(table, rows)
        return table

    def __getitem__(self, name: str) -> tuple[Mapping[str, str], ...]:
        return self.tables[name]

    def __contains__(self, name: object) -> bool:
        return name in self.tables


ProcedureBody = Callable[
    [TableStore, Mapping[str, str], Mapping[str, list[str]]],
    tuple[Mapping[str, str], Mapping[str, RowSet]],
]


@dataclass(frozen=True)
class MockProcedure:
    name: str
    body: ProcedureBody


class MockBackend:
    """In-memory stand-in for the database tier."""

    def __init__(self):
        self.store = TableStore()
        self.procedures: dict[str, MockProcedure] = {}
        self.connections_opened = 0
        self._lock = threading.Lock()

    def register_procedure(self, proc: MockProcedure) -> None:
        with self._lock:
            if proc.name in self.procedures:
                raise ValueError(f"duplicate procedure {proc.name}")
            self.procedures[proc.name] = proc

    def load_tables(self, store: Union[TableStore, Mapping[str, Sequence[Row]]]) -> None:
        if not isinstance(store, TableStore):
            store = TableStore(store)
        with self._lock:
            self.store.tables.update(store.tables)

    def connect(self) -> MockConnection:
        with self._lock:
            self.connections_opened += 1
        return MockConnection(self)


class MockConnection:
    def __init__(self, backend: MockBackend):
        self.backend = backend
        self.closed = False

    def call(self, name, scalars, vectors):
        if self.closed:
            raise RuntimeError("connection is closed")
        proc = self.backend.procedures.get(name)
        if proc is None:
            raise LookupError(f"procedure {name} does not exist in the database")
        result = proc.body(self.backend.store, scalars, vectors)
        if not (isinstance(result, tuple) and len(result) == 2):
            raise TypeError(f"procedure {name} must return (scalars, row sets)")
        return result

    def close(self) -> None:
        self.closed = True


def register_procedure(backend: MockBackend, proc: MockProcedure) -> None:
    backend.register_procedure(proc)


def load_tables(backend: MockBackend, store) -> None:
    backend.load_tables(store)


# ---------------------------------------------------------------------------
# Calling procedures


def _inputs(api: ApiDefinition, proc: ProcedureDef, inputs: Mapping):
    problems = []
    for name in inputs:
        if name not in {f.name for f in proc.request}:
            problems.append(Violation("unknown-input", f"{proc.name} has no input {name}", name))
    scalars: dict[str, str] = {}
    vectors: dict[str, list[str]] = {}
    for fdef in proc.request:
        value = inputs.get(fdef.name)
        if fdef.shape is Shape.SCALAR:
            raw = "" if value is None else value
            if not isinstance(raw, str):
                problems.append(Violation("type", f"{fdef.name} must be text", fdef.name))
                continue
            try:
                scalars[fdef.name] = api.types.canonicalize(fdef.type.name, raw)
            except ViolationError as exc:
                problems.extend(v.at(fdef.name) for v in exc.violations)
        else:
            items = [] if value is None else value
            if isinstance(items, str) or not all(isinstance(i, str) for i in items):
                problems.append(Violation("type", f"{fdef.name} must be a list of text", fdef.name))
                continue
            out = []
            for index, item in enumerate(items):
                try:
                    out.append(api.types.canonicalize(fdef.type.name, item))
                except ViolationError as exc:
                    problems.extend(v.at(f"{fdef.name}.{index}") for v in exc.violations)
            vectors[fdef.name] = out
    if problems:
        raise ViolationError(problems)
    return scalars, vectors


def _materialize(api: ApiDefinition, proc: ProcedureDef, scalars_out, rowsets) -> dict:
    if not isinstance(scalars_out, Mapping) or not isinstance(rowsets, Mapping):
        raise StructureError("procedure returned malformed results")
    declared = {f.name for f in proc.response}
    extra = (set(scalars_out) | set(rowsets)) - declared
    if extra:
        raise StructureError(f"procedure returned undeclared outputs {sorted(extra)}")
    outputs: dict[str, Union[str, list[BeanValue]]] = {}
    for fdef in proc.response:
        if fdef.shape is Shape.SCALAR:
            if fdef.name in rowsets:
                raise StructureError(f"{fdef.name} is a scalar but a row set was returned")
            raw = scalars_out.get(fdef.name)
            outputs[fdef.name] = api.types.canonicalize(fdef.type.name, "" if raw is None else str(raw))
        else:
            if fdef.name in scalars_out:
                raise StructureError(f"{fdef.name} is a cursor but a scalar was returned")
            outputs[fdef.name] = from_rows(api, fdef.type.name, rowsets.get(fdef.name, ()))
    return outputs


def call_procedure(api: ApiDefinition, pool: ConnectionPool, name: str, inputs: Mapping) -> dict:
    """Invoke a declared stored procedure.

    Inputs are matched by name: scalars as text, input vectors as lists of
    text.  Returns scalar outputs as canonical text and cursor outputs as
    lists of beans.

    Raises ``NotFound`` for undeclared procedures, ``ViolationError`` for
    bad inputs, ``PoolExhausted`` when no connection frees up in time,
    ``CcUnavailable`` when the backend fails and ``CcSystemError`` when
    its results do not match the declaration.  The connection is returned
    to the pool in every case.
    """
    proc = api.lookup("procedure", name)
    scalars, vectors = _inputs(api, proc, inputs)
    with pool.connection() as token:
        try:
            scalars_out, rowsets = token.connection.call(proc.name, scalars, vectors)
        except Exception as exc:
            token.broken = True
            raise CcUnavailable(f"procedure {proc.name} failed: {exc}") from exc
        try:
            return _materialize(api, proc, scalars_out, rowsets)
        except (StructureError, RowMappingError, ViolationError, NotFound) as exc:
            raise CcSystemError(f"procedure {proc.name} returned unusable results: {exc}") from exc


@dataclass
class Gateway:
    """Bundles the definitions and pool a business-logic module needs."""

    api: ApiDefinition
    pool: ConnectionPool

    def call(self, name: str, **inputs) -> dict:
        return call_procedure(self.api, self.pool, name, inputs)
