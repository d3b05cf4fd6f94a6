"""Built-in fixture catalog: mock procedures and bindings selected by name.

``customer-search`` is the example application: a people table searched
by last name through the ``GetPeople`` procedure, a ``SearchHandler``
request handler that shows the hits on the ``Results`` screen, and an
``Echo`` transaction that returns its inputs.
"""
from __future__ import annotations

import re
from typing import Callable, Mapping

from .apidef import ApiDefinition
from .dbgw import Gateway, MockBackend, MockProcedure, TableStore
from .server import Bindings
from .wire import ScreenInstance, new_screen

PEOPLE_TABLE = "table_p"


def like(pattern: str) -> re.Pattern:
    """SQL LIKE with ``%`` as the only wildcard, case-insensitive."""
    return re.compile(".*".join(re.escape(part) for part in pattern.split("%")), re.IGNORECASE | re.DOTALL)


def get_people(store: TableStore, scalars: Mapping[str, str], vectors) -> tuple[dict, dict]:
    """``SELECT first AS FirstName, last AS LastName FROM table_p WHERE last LIKE :Name``"""
    matcher = like(scalars.get("Name", ""))
    rows = [
        {"FirstName": row["first"], "LastName": row["last"]}
        for row in store[PEOPLE_TABLE]
        if matcher.fullmatch(row["last"])
    ]
    return {}, {"Result": rows}


NOTICE = "Enter a last name or pattern to search for."


def make_search_handler(api: ApiDefinition, gateway: Gateway) -> Callable[..., ScreenInstance]:
    def search_handler(Name: str = "", Customer=None) -> ScreenInstance:
        pattern = Name or (Customer.get("Person.LastName") if Customer is not None else "")
        if not pattern:
            screen = new_screen(api, "Search")
            if Customer is not None:
                screen.data["Customer"] = Customer
            return screen.set("Notice", NOTICE)
        found = gateway.call("GetPeople", Name=pattern)["Result"]
        screen = new_screen(api, "Results")
        screen.set("Name", pattern)
        screen.set("Count", str(len(found)))
        screen.data["Result"] = found
        return screen
    return search_handler


def echo(**inputs) -> dict:
    return dict(inputs)


def install_customer_search(api: ApiDefinition, backend: MockBackend, bindings: Bindings, gateway: Gateway) -> None:
    if "GetPeople" in api.procedures:
        backend.register_procedure(MockProcedure("GetPeople", get_people))
    if "SearchHandler" in api.handlers:
        bindings.request("SearchHandler", make_search_handler(api, gateway), reentrant=True)
    if "Echo" in api.transactions:
        bindings.transaction("Echo", echo, reentrant=True)


CATALOG: Mapping[str, Callable[[ApiDefinition, MockBackend, Bindings, Gateway], None]] = {
    "customer-search": install_customer_search,
}


def install(name: str, api: ApiDefinition, backend: MockBackend, bindings: Bindings, gateway: Gateway) -> None:
    try:
        installer = CATALOG[name]
    except KeyError:
        raise LookupError(f"unknown fixture {name!r}; known: {', '.join(sorted(CATALOG))}") from None
    installer(api, backend, bindings, gateway)
