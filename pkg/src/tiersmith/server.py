"""Dispatch of transactions and request handlers, and the client proxy.

Business logic is registered as plain callables keyed by definition name::

    bindings = Bindings(api)

    @bindings.transaction("ServerX")
    def server_x(InputA, InputB):
        return {"OutputC": ..., "OutputD": ...}

The dispatcher decodes, validates, invokes and encodes.  Whatever a
binding raises is caught and sent back as an ``<Error>`` document, which
the proxy on the other side raises again with the same class chain.

Routes: ``POST /tx/<Name>`` (XML body), ``GET /rq/<Name>?query`` (screen
XML) and ``GET /page/<Name>`` (rendered HTML).  Dispatch routes always
answer 200 with an XML body.
"""
from __future__ import annotations

import logging
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping, Optional, Protocol, Union
from urllib.parse import urlsplit

from . import xmlutil
from .apidef import ApiDefinition
from .beans import from_flat, validate_bean
from .errors import (
    CcApplicationError,
    CcCommunicationError,
    CcException,
    CcSystemError,
    NotFound,
    ViolationError,
    WireError,
)
from .render import PageRegistry
from .wire import (
    ScreenInstance,
    decode_exception,
    decode_request,
    decode_response,
    decode_screen,
    encode_exception,
    encode_query,
    encode_request,
    encode_response,
    encode_screen,
    error_screen,
    new_screen,
    parse_query,
    query_dict,
)

log = logging.getLogger(__name__)

XML_TYPE = "text/xml; charset=utf-8"
HTML_TYPE = "text/html; charset=utf-8"
MAX_BODY = 4 * 1024 * 1024

# Written when even encoding the real error fails.
_LAST_RESORT = (
    b'<Error><Exception class="CcSystemError"><Message>internal error</Message>'
    b"</Exception></Error>"
)

KINDS = ("transaction", "request")


@dataclass
class HandlerBinding:
    name: str
    kind: str  # "transaction" or "request"
    body: Callable
    reentrant: bool = False
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def invoke(self, inputs: Mapping):
        if self.reentrant:
            return self.body(**inputs)
        with self.lock:
            return self.body(**inputs)


class Bindings:
    """One binding per transaction or request-handler name."""

    def __init__(self, api: ApiDefinition):
        self.api = api
        self._bindings: dict[tuple[str, str], HandlerBinding] = {}

    def bind(self, kind: str, name: str, body: Callable, reentrant: bool = False) -> HandlerBinding:
        if kind not in KINDS:
            raise ValueError(f"cannot bind a {kind}")
        self.api.lookup(kind, name)  # NotFound if undeclared
        if (kind, name) in self._bindings:
            raise ValueError(f"{kind} {name} is already bound")
        binding = HandlerBinding(name, kind, body, reentrant)
        self._bindings[kind, name] = binding
        return binding

    def transaction(self, name: str, body: Optional[Callable] = None, *, reentrant: bool = False):
        if body is not None:
            return self.bind("transaction", name, body, reentrant)

        def decorate(fn):
            self.bind("transaction", name, fn, reentrant)
            return fn
        return decorate

    def request(self, name: str, body: Optional[Callable] = None, *, reentrant: bool = False):
        if body is not None:
            return self.bind("request", name, body, reentrant)

        def decorate(fn):
            self.bind("request", name, fn, reentrant)
            return fn
        return decorate

    def get(self, kind: str, name: str) -> Optional[HandlerBinding]:
        return self._bindings.get((kind, name))

    def __contains__(self, key) -> bool:
        return key in self._bindings


def _violation_message(exc: ViolationError) -> str:
    return "invalid input: " + "; ".join(
        f"{v.path or '(value)'}: {v.message} [{v.rule}]" for v in exc.violations
    )


def encode_failure(exc: BaseException) -> bytes:
    """An ``<Error>`` document for anything raised during dispatch."""
    try:
        return encode_exception(exc)
    except Exception:  # pragma: no cover - encode_exception sanitizes its input
        log.exception("could not encode error chain")
        return _LAST_RESORT


def _wrap_unexpected(exc: Exception, what: str) -> CcException:
    if isinstance(exc, CcException):
        return exc
    log.warning("%s raised %s", what, type(exc).__name__, exc_info=exc)
    wrapped = CcSystemError(f"{what} failed: {type(exc).__name__}: {exc}")
    wrapped.__cause__ = exc
    return wrapped


@dataclass(frozen=True)
class Reply:
    status: int
    content_type: str
    body: bytes


class Dispatcher:
    def __init__(self, api: ApiDefinition, bindings: Bindings, pages: Optional[PageRegistry] = None):
        self.api = api
        self.bindings = bindings
        self.pages = pages

    # -- transactions -------------------------------------------------------

    def dispatch_transaction(self, doc: Union[str, bytes], name: Optional[str] = None) -> bytes:
        """Response or Error document for a request document.  Never raises."""
        try:
            return self._transaction(doc, name)
        except CcException as exc:
            return encode_failure(exc)
        except Exception as exc:
            return encode_failure(_wrap_unexpected(exc, "dispatch"))

    def _transaction(self, doc, name):
        try:
            t, inputs = decode_request(self.api, doc, expected=name)
        except WireError as exc:
            raise CcApplicationError(f"bad request: {exc}") from None
        except ViolationError as exc:
            raise CcApplicationError(_violation_message(exc)) from None
        binding = self.bindings.get("transaction", t.name)
        if binding is None:
            raise CcApplicationError(f"transaction {t.name} has no implementation")
        try:
            outputs = binding.invoke(inputs)
        except CcException:
            raise
        except Exception as exc:
            raise _wrap_unexpected(exc, f"transaction {t.name}")
        if not isinstance(outputs, Mapping):
            raise CcSystemError(f"transaction {t.name} returned {type(outputs).__name__}, not outputs")
        try:
            return encode_response(self.api, t, outputs)
        except WireError as exc:
            raise CcSystemError(f"transaction {t.name} returned bad outputs: {exc}") from None

    # -- request handlers ---------------------------------------------------

    def run_request(self, name: str, pairs) -> ScreenInstance:
        """Bind parameters, validate, call the handler; raises a Cc chain on failure."""
        try:
            handler = self.api.lookup("request", name)
        except NotFound:
            raise CcApplicationError(f"no request handler {name}") from None
        params = query_dict(pairs)
        data, problems = from_flat(self.api, handler.request_body, "", params)
        problems += validate_bean(data)
        if problems:
            raise CcApplicationError(_violation_message(ViolationError(problems)))
        binding = self.bindings.get("request", name)
        if binding is None:
            raise CcApplicationError(f"request handler {name} has no implementation")
        try:
            screen = binding.invoke(dict(data.values))
        except CcException:
            raise
        except Exception as exc:
            raise _wrap_unexpected(exc, f"request handler {name}")
        if not isinstance(screen, ScreenInstance):
            raise CcSystemError(f"request handler {name} returned {type(screen).__name__}, not a screen")
        try:
            declared = self.api.screen(screen.screen)
        except NotFound:
            raise CcSystemError(f"request handler {name} emitted undefined screen {screen.screen}") from None
        if screen.data.definition is not declared or screen.data.api is not self.api:
            raise CcSystemError(f"request handler {name} emitted data from another definition set")
        return screen

    def dispatch_request(self, name: str, query: str) -> bytes:
        """Screen or Error document for a query string.  Never raises."""
        try:
            try:
                pairs = parse_query(query)
            except WireError as exc:
                raise CcApplicationError(f"bad query: {exc}") from None
            return encode_screen(self.run_request(name, pairs))
        except CcException as exc:
            return encode_failure(exc)
        except Exception as exc:
            return encode_failure(_wrap_unexpected(exc, "dispatch"))

    # -- pages --------------------------------------------------------------

    def render_page(self, name: str, query: str) -> tuple[int, str]:
        """HTML for ``/page/<name>``: a handler's screen, or an empty screen."""
        pages = self.pages or PageRegistry(self.api)
        status = 200
        try:
            if name in self.api.handlers:
                try:
                    pairs = parse_query(query)
                except WireError as exc:
                    raise CcApplicationError(f"bad query: {exc}") from None
                screen = self.run_request(name, pairs)
            elif name in self.api.screens:
                screen = new_screen(self.api, name)
            else:
                status = 404
                screen = error_screen(self.api, f"no page named {name}", "NotFound")
        except Exception as exc:
            failure = _wrap_unexpected(exc, f"page {name}")
            screen = error_screen(self.api, failure.message, type(failure).__name__)
        try:
            return status, pages.render(screen)
        except Exception as exc:
            log.exception("rendering %s failed", name)
            screen = error_screen(self.api, f"rendering failed: {type(exc).__name__}", "CcSystemError")
            return 500, pages.render(screen)

    # -- routing ------------------------------------------------------------

    def handle(self, method: str, path: str, body: bytes = b"", query: str = "") -> Reply:
        """Route one HTTP-shaped request.  Never raises."""
        parts = path.split("/")
        route, name = (parts[1], parts[2]) if len(parts) == 3 else ("", "")
        if route == "tx" and name:
            if method != "POST":
                return self._route_error(405, f"{path} accepts POST only")
            return Reply(200, XML_TYPE, self.dispatch_transaction(body, name))
        if route == "rq" and name:
            if method != "GET":
                return self._route_error(405, f"{path} accepts GET only")
            return Reply(200, XML_TYPE, self.dispatch_request(name, query))
        if route == "page" and name:
            if method != "GET":
                return self._route_error(405, f"{path} accepts GET only")
            status, page = self.render_page(name, query)
            return Reply(status, HTML_TYPE, page.encode("utf-8"))
        return self._route_error(404, f"no route for {xmlutil.xml_safe(path)}")

    @staticmethod
    def _route_error(status: int, message: str) -> Reply:
        return Reply(status, XML_TYPE, encode_failure(CcApplicationError(message)))


def dispatch_transaction(api: ApiDefinition, bindings: Bindings, doc) -> bytes:
    return Dispatcher(api, bindings).dispatch_transaction(doc)


def dispatch_request(api: ApiDefinition, bindings: Bindings, name: str, query: str) -> bytes:
    return Dispatcher(api, bindings).dispatch_request(name, query)


# ---------------------------------------------------------------------------
# Transports and proxies


class Transport(Protocol):
    def send(self, path: str, body: Optional[bytes] = None, query: str = "") -> tuple[int, bytes]:
        """POST ``body`` when given, else GET with ``query``."""
        ...


class LoopbackTransport:
    """Delivers to a dispatcher in-process."""

    def __init__(self, dispatcher: Dispatcher):
        self.dispatcher = dispatcher

    def send(self, path, body=None, query=""):
        method = "GET" if body is None else "POST"
        reply = self.dispatcher.handle(method, path, body or b"", query)
        return reply.status, reply.body


class HttpTransport:
    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def send(self, path, body=None, query=""):
        url = self.base_url + path + (f"?{query}" if query else "")
        request = urllib.request.Request(url, data=body, method="GET" if body is None else "POST")
        if body is not None:
            request.add_header("Content-Type", XML_TYPE)
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return response.status, response.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()


def _fetch(transport: Transport, path: str, body=None, query: str = "") -> bytes:
    try:
        _, payload = transport.send(path, body=body, query=query)
    except Exception as exc:
        raise CcCommunicationError(f"transport failure: {type(exc).__name__}: {exc}") from exc
    return payload


def _error_or_root(payload: bytes):
    try:
        root = xmlutil.parse_root(payload)
    except Exception:
        raise CcCommunicationError("server sent a malformed document") from None
    if root.tag == "Error":
        try:
            chain = decode_exception(root)
        except WireError as exc:
            raise CcCommunicationError(f"server sent a malformed error document: {exc}") from None
        raise chain
    return root


def proxy_call(api: ApiDefinition, transport: Transport, name: str, inputs: Mapping) -> dict:
    """Call a transaction; returns outputs or raises the server's chain."""
    t = api.lookup("transaction", name)
    doc = encode_request(api, t, inputs)
    root = _error_or_root(_fetch(transport, f"/tx/{t.name}", body=doc))
    try:
        return decode_response(api, t, root)
    except (WireError, ViolationError) as exc:
        raise CcCommunicationError(f"unusable response: {exc}") from None


def proxy_screen(api: ApiDefinition, transport: Transport, name: str, params=()) -> ScreenInstance:
    """Invoke a request handler with parameters; returns the screen it chose."""
    handler = api.lookup("request", name)
    query = encode_query(params)
    root = _error_or_root(_fetch(transport, f"/rq/{handler.name}", query=query))
    try:
        return decode_screen(api, root)
    except WireError as exc:
        if exc.reason == "unknown-screen":
            raise CcSystemError(str(exc)) from None
        raise CcCommunicationError(f"unusable screen: {exc}") from None
    except ViolationError as exc:
        raise CcCommunicationError(f"unusable screen: {exc}") from None


class Client:
    """Proxy facade: ``client.call("ServerX", InputA=a, InputB=b)``."""

    def __init__(self, api: ApiDefinition, transport: Transport):
        self.api = api
        self.transport = transport

    def call(self, name: str, **inputs) -> dict:
        return proxy_call(self.api, self.transport, name, inputs)

    def screen(self, name: str, params=()) -> ScreenInstance:
        return proxy_screen(self.api, self.transport, name, params)


# ---------------------------------------------------------------------------
# HTTP


class _Handler(BaseHTTPRequestHandler):
    dispatcher: Dispatcher
    protocol_version = "HTTP/1.1"
    server_version = "tiersmith"

    def _answer(self, reply: Reply) -> None:
        self.send_response(reply.status)
        self.send_header("Content-Type", reply.content_type)
        self.send_header("Content-Length", str(len(reply.body)))
        self.end_headers()
        self.wfile.write(reply.body)

    def _route(self, method: str, body: bytes = b"") -> None:
        parts = urlsplit(self.path)
        self._answer(self.dispatcher.handle(method, parts.path, body, parts.query))

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length") or 0)
        except ValueError:
            length = -1
        if length < 0 or length > MAX_BODY:
            self.close_connection = True
            self._answer(Dispatcher._route_error(413, "request body missing or too large"))
            return
        self._route("POST", self.rfile.read(length))

    def log_message(self, format, *args):
        log.info("%s %s", self.address_string(), format % args)


def make_server(dispatcher: Dispatcher, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """An HTTP server bound to (host, port); port 0 picks a free one."""
    handler = type("Handler", (_Handler,), {"dispatcher": dispatcher})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def server_url(server: ThreadingHTTPServer) -> str:
    host, port = server.server_address[:2]
    return f"http://{host}:{port}"


def serve_in_background(dispatcher: Dispatcher, host: str = "127.0.0.1", port: int = 0):
    """Start a server on a daemon thread; returns (server, base url).  Call ``shutdown()`` to stop."""
    server = make_server(dispatcher, host, port)
    thread = threading.Thread(target=server.serve_forever, name="tiersmith-http", daemon=True)
    thread.start()
    return server, server_url(server)
