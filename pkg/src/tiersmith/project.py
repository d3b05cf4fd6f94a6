"""Project configuration and application assembly.

``tiersmith.conf`` is a flat ``key = value`` file; relative paths are taken
from the directory holding it::

    definitions = example/defs
    pages = example/pages
    tables = example/data/table_p.csv
    fixtures = customer-search
    pool.capacity = 8
    pool.timeout = 5
    listen = 127.0.0.1:8080

``definitions``, ``tables`` and ``fixtures`` accept comma-separated lists.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from . import fixtures as fixture_catalog
from .apidef import ApiDefinition, load_files
from .dbgw import ConnectionPool, Gateway, MockBackend, TableStore
from .render import Decoration, PageRegistry
from .server import Bindings, Dispatcher

KEYS = {"definitions", "pages", "tables", "fixtures", "pool.capacity", "pool.timeout", "listen"}
DEFAULT_LISTEN = ("127.0.0.1", 8080)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectConfig:
    path: Path
    definitions: tuple[Path, ...]
    pages: Optional[Path] = None
    tables: tuple[Path, ...] = ()
    fixtures: tuple[str, ...] = ()
    pool_capacity: int = 8
    pool_timeout: float = 5.0
    listen: tuple[str, int] = DEFAULT_LISTEN

    @property
    def decoration(self) -> Optional[Path]:
        if self.pages is None:
            return None
        candidate = self.pages / "decoration.xml"
        return candidate if candidate.is_file() else None


def _list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ConfigError(f"listen must be host:port, got {value!r}")
    return host, int(port)


def load_config(path: Union[str, Path]) -> ProjectConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",))
    parser.optionxform = str  # keep key case
    try:
        parser.read_string("[project]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    values = dict(parser["project"])
    unknown = sorted(set(values) - KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    base = path.parent

    def existing(raw: str, what: str) -> Path:
        p = (base / raw).resolve()
        if not p.exists():
            raise ConfigError(f"{path}: {what} {raw} does not exist")
        return p

    if not _list(values.get("definitions", "")):
        raise ConfigError(f"{path}: definitions is required")
    definitions = tuple(existing(p, "definitions path") for p in _list(values["definitions"]))
    pages = None
    if values.get("pages"):
        pages = existing(values["pages"], "pages directory")
        if not pages.is_dir():
            raise ConfigError(f"{path}: pages {values['pages']} is not a directory")
    tables = tuple(existing(p, "table file") for p in _list(values.get("tables", "")))
    names = tuple(_list(values.get("fixtures", "")))
    for name in names:
        if name not in fixture_catalog.CATALOG:
            raise ConfigError(f"{path}: unknown fixture {name!r}")
    try:
        capacity = int(values.get("pool.capacity", 8))
        timeout = float(values.get("pool.timeout", 5))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if capacity <= 0 or timeout <= 0:
        raise ConfigError(f"{path}: pool.capacity and pool.timeout must be positive")
    listen = _listen(values["listen"]) if "listen" in values else DEFAULT_LISTEN
    return ProjectConfig(path, definitions, pages, tables, names, capacity, timeout, listen)


def load_api(config: ProjectConfig) -> ApiDefinition:
    """Raises ``DefinitionError`` with every diagnostic."""
    return load_files(config.definitions)


@dataclass
class Application:
    api: ApiDefinition
    backend: MockBackend
    pool: ConnectionPool
    gateway: Gateway
    bindings: Bindings
    pages: PageRegistry
    dispatcher: Dispatcher = field(init=False)

    def __post_init__(self):
        self.dispatcher = Dispatcher(self.api, self.bindings, self.pages)


def build_application(config: ProjectConfig, api: Optional[ApiDefinition] = None) -> Application:
    if api is None:
        api = load_api(config)
    backend = MockBackend()
    store = TableStore()
    for table in config.tables:
        try:
            store.load_csv(table)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"table {table}: {exc}") from None
    backend.load_tables(store)
    pool = ConnectionPool(backend, config.pool_capacity, config.pool_timeout)
    gateway = Gateway(api, pool)
    bindings = Bindings(api)
    for name in config.fixtures:
        fixture_catalog.install(name, api, backend, bindings, gateway)
    decoration = None
    if config.decoration is not None:
        decoration = Decoration.load(config.decoration.read_bytes(), str(config.decoration))
    pages = PageRegistry(api, config.pages, decoration)
    return Application(api, backend, pool, gateway, bindings, pages)
