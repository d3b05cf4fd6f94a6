import random
import threading
import time
import urllib.request
import xml.etree.ElementTree as ET

import pytest

from tiersmith.apidef import parse_definitions
from tiersmith.beans import new_bean
from tiersmith.errors import (
    CcApplicationError,
    CcChainError,
    CcCommunicationError,
    CcSystemError,
    CcUnavailable,
    NotFound,
)
from tiersmith.server import (
    Bindings,
    Client,
    Dispatcher,
    HttpTransport,
    LoopbackTransport,
    dispatch_request,
    dispatch_transaction,
    proxy_call,
    proxy_screen,
    serve_in_background,
)
from tiersmith.wire import (
    decode_chain,
    decode_response,
    decode_screen,
    encode_request,
    exception_chain,
    new_screen,
)

from generators import fill

ECHO = """\
<api>
  <bean name="Address"><param name="Zip" type="CcZip"/><param name="City" type="CcName"/></bean>
  <transaction name="Echo">
    <request><param name="Text" type="CcString"/><bean name="Where" type="Address"/></request>
    <response><param name="Text" type="CcString"/><bean name="Where" type="Address"/></response>
  </transaction>
  <transaction name="Boom"><request/><response/></transaction>
  <transaction name="Unbound"><request/><response/></transaction>
  <screen name="Hello"><param name="Who" type="CcName"/><bean name="Where" type="Address"/></screen>
  <request name="Greet"><param name="Who" type="CcName"/><bean name="Where" type="Address"/></request>
</api>
"""


@pytest.fixture
def echo_api():
    return parse_definitions([ECHO])


@pytest.fixture
def bindings(echo_api):
    b = Bindings(echo_api)
    b.transaction("Echo", lambda **inputs: dict(inputs))

    @b.request("Greet")
    def greet(Who, Where):
        screen = new_screen(echo_api, "Hello").set("Who", Who)
        screen.data["Where"] = Where
        return screen
    return b


@pytest.fixture
def client(echo_api, bindings):
    return Client(echo_api, LoopbackTransport(Dispatcher(echo_api, bindings)))


def address(api, zip_code="12345", city="boston"):
    return new_bean(api, "Address").set("Zip", zip_code).set("City", city)


class TestTransactions:
    def test_echo(self, echo_api, client):
        out = client.call("Echo", Text="hi <there>", Where=address(echo_api))
        assert out == {"Text": "hi <there>", "Where": address(echo_api)}

    def test_dispatch_function(self, echo_api, bindings):
        doc = encode_request(echo_api, "Echo", {"Text": "x", "Where": address(echo_api)})
        out = decode_response(echo_api, "Echo", dispatch_transaction(echo_api, bindings, doc))
        assert out["Text"] == "x"

    def test_unbound(self, client):
        with pytest.raises(CcApplicationError, match="no implementation"):
            client.call("Unbound")

    def test_undeclared_transaction(self, echo_api, bindings):
        doc = b'<Request name="ServerQ"/>'
        (entry,) = decode_chain(dispatch_transaction(echo_api, bindings, doc))
        assert entry[0] == "CcApplicationError" and "ServerQ" in entry[1]

    def test_two_level_chain(self, echo_api, bindings, client):
        @bindings.transaction("Boom")
        def boom():
            try:
                raise CcCommunicationError("timeout")
            except CcCommunicationError as exc:
                raise CcUnavailable("db down") from exc

        with pytest.raises(CcUnavailable) as info:
            client.call("Boom")
        assert exception_chain(info.value) == [("CcUnavailable", "db down"), ("CcCommunicationError", "timeout")]

    def test_plain_python_error_wrapped(self, bindings, client):
        bindings.transaction("Boom", lambda: {}["missing"])
        with pytest.raises(CcSystemError) as info:
            client.call("Boom")
        chain = exception_chain(info.value)
        assert chain[0][0] == "CcSystemError" and chain[1] == ("KeyError", "'missing'")
        assert isinstance(info.value.__cause__, CcChainError)

    def test_bad_outputs(self, bindings, client):
        bindings.transaction("Boom", lambda: {"Nope": "1"})
        with pytest.raises(CcSystemError, match="bad outputs"):
            client.call("Boom")

    def test_non_mapping_outputs(self, bindings, client):
        bindings.transaction("Boom", lambda: None)
        with pytest.raises(CcSystemError, match="not outputs"):
            client.call("Boom")

    def test_zip_violation_on_the_wire(self, echo_api, bindings):
        doc = (b'<Request name="Echo"><Text>x</Text><Where><Zip>1234</Zip><City>x</City></Where></Request>')
        ((cls, message),) = decode_chain(dispatch_transaction(echo_api, bindings, doc))
        assert cls == "CcApplicationError" and "Where.Zip" in message and "[length]" in message

    def test_duplicate_binding(self, bindings):
        with pytest.raises(ValueError, match="already bound"):
            bindings.transaction("Echo", lambda **kw: kw)

    def test_binding_undeclared(self, bindings):
        with pytest.raises(NotFound):
            bindings.transaction("Nope", lambda: {})


class TestProxyFailures:
    class Garbage:
        def __init__(self, payload=None, exc=None):
            self.payload, self.exc = payload, exc

        def send(self, path, body=None, query=""):
            if self.exc:
                raise self.exc
            return 200, self.payload

    @pytest.mark.parametrize("payload", [b"", b"<<<", b"\xff\xfe", b"<Response/>", b'<Response name="Other"/>'])
    def test_garbage_response(self, echo_api, payload):
        with pytest.raises(CcCommunicationError):
            proxy_call(echo_api, self.Garbage(payload), "Unbound", {})

    def test_malformed_error_document(self, echo_api):
        with pytest.raises(CcCommunicationError, match="malformed error"):
            proxy_call(echo_api, self.Garbage(b"<Error><Oops/></Error>"), "Unbound", {})

    def test_transport_failure(self, echo_api):
        with pytest.raises(CcCommunicationError, match="ConnectionRefusedError"):
            proxy_call(echo_api, self.Garbage(exc=ConnectionRefusedError("no")), "Unbound", {})

    def test_unknown_screen(self, echo_api):
        with pytest.raises(CcSystemError, match="unknown-screen"):
            proxy_screen(echo_api, self.Garbage(b'<Screen name="Elsewhere"/>'), "Greet")


class TestRequests:
    def test_greet(self, echo_api, client):
        s = client.screen("Greet", [("Who", "ALICE"), ("Where.Zip", "12345-6789")])
        assert s.screen == "Hello"
        assert s.get("Who") == "alice" and s.get("Where.Zip") == "123456789"

    def test_dispatch_function(self, echo_api, bindings):
        s = decode_screen(echo_api, dispatch_request(echo_api, bindings, "Greet", "Who=bob"))
        assert s.get("Who") == "bob"

    @pytest.mark.parametrize("query, fragment", [
        ("Who=b0b", "Who"),
        ("Where.Zip=1", "Where.Zip"),
        ("Nope=1", "unknown-key"),
        ("Who=%zz", "bad query"),
    ])
    def test_invalid(self, echo_api, bindings, query, fragment):
        ((cls, message),) = decode_chain(dispatch_request(echo_api, bindings, "Greet", query))
        assert cls == "CcApplicationError" and fragment in message

    def test_wrong_screen_type(self, echo_api):
        b = Bindings(echo_api)
        b.request("Greet", lambda **kw: "not a screen")
        ((cls, _),) = decode_chain(dispatch_request(echo_api, b, "Greet", ""))
        assert cls == "CcSystemError"

    def test_screen_from_foreign_definitions(self, echo_api):
        other = parse_definitions([ECHO])
        b = Bindings(echo_api)
        b.request("Greet", lambda **kw: new_screen(other, "Hello"))
        ((cls, message),) = decode_chain(dispatch_request(echo_api, b, "Greet", ""))
        assert cls == "CcSystemError" and "another definition set" in message


class TestRouting:
    @pytest.fixture
    def dispatcher(self, echo_api, bindings):
        return Dispatcher(echo_api, bindings)

    def test_unknown_route(self, dispatcher):
        reply = dispatcher.handle("GET", "/nowhere")
        assert reply.status == 404 and decode_chain(reply.body)[0][0] == "CcApplicationError"

    @pytest.mark.parametrize("method, path", [("GET", "/tx/Echo"), ("POST", "/rq/Greet"), ("POST", "/page/Greet")])
    def test_wrong_method(self, dispatcher, method, path):
        assert dispatcher.handle(method, path, b"<x/>").status == 405

    def test_page(self, dispatcher):
        reply = dispatcher.handle("GET", "/page/Greet", query="Who=bob")
        assert reply.status == 200 and reply.content_type.startswith("text/html")
        assert b"no page structure for screen Hello" in reply.body

    def test_page_unknown(self, dispatcher):
        assert dispatcher.handle("GET", "/page/Nope").status == 404

    def test_page_handler_failure_shows_error(self, echo_api):
        b = Bindings(echo_api)
        b.request("Greet", lambda **kw: 1 / 0)
        reply = Dispatcher(echo_api, b).handle("GET", "/page/Greet")
        assert reply.status == 200 and b"ZeroDivisionError" in reply.body


class TestHttp:
    @pytest.fixture
    def served(self, echo_api, bindings):
        server, url = serve_in_background(Dispatcher(echo_api, bindings))
        yield url
        server.shutdown()
        server.server_close()

    def test_echo_over_http(self, echo_api, served):
        client = Client(echo_api, HttpTransport(served))
        assert client.call("Echo", Text="é中", Where=address(echo_api))["Text"] == "é中"

    def test_chain_over_http(self, echo_api, bindings, served):
        @bindings.transaction("Boom")
        def boom():
            raise CcUnavailable("outer") from CcCommunicationError("inner")
        with pytest.raises(CcUnavailable) as info:
            Client(echo_api, HttpTransport(served)).call("Boom")
        assert exception_chain(info.value) == [("CcUnavailable", "outer"), ("CcCommunicationError", "inner")]

    def test_request_over_http(self, echo_api, served):
        s = Client(echo_api, HttpTransport(served)).screen("Greet", {"Who": "carol"})
        assert s.get("Who") == "carol"

    def test_status_codes(self, served):
        with pytest.raises(urllib.error.HTTPError) as info:
            urllib.request.urlopen(served + "/nowhere", timeout=5)
        assert info.value.code == 404
        ET.fromstring(info.value.read())
        with urllib.request.urlopen(served + "/rq/Greet?Who=1", timeout=5) as response:
            assert response.status == 200
            assert response.headers["Content-Type"] == "text/xml; charset=utf-8"
            assert ET.fromstring(response.read()).tag == "Error"

    def test_dead_server(self, echo_api):
        server, url = serve_in_background(Dispatcher(echo_api, Bindings(echo_api)))
        server.shutdown()
        server.server_close()
        with pytest.raises(CcCommunicationError):
            Client(echo_api, HttpTransport(url, timeout=2)).call("Unbound")


class TestConcurrency:
    def test_non_reentrant_bindings_serialized(self, echo_api):
        b = Bindings(echo_api)
        active, peak = [0], [0]
        guard = threading.Lock()

        def slow():
            with guard:
                active[0] += 1
                peak[0] = max(peak[0], active[0])
            time.sleep(0.01)
            with guard:
                active[0] -= 1
            return {}
        b.transaction("Boom", slow)
        client = Client(echo_api, LoopbackTransport(Dispatcher(echo_api, b)))
        threads = [threading.Thread(target=client.call, args=("Boom",)) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert peak[0] == 1

    def test_reentrant_bindings_overlap(self, echo_api):
        b = Bindings(echo_api)
        barrier = threading.Barrier(3, timeout=5)

        def meet():
            barrier.wait()
            return {}
        b.transaction("Boom", meet, reentrant=True)
        client = Client(echo_api, LoopbackTransport(Dispatcher(echo_api, b)))
        errors = []
        threads = [threading.Thread(target=lambda: errors.append(_try(client.call, "Boom"))) for _ in range(3)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == [None] * 3

    def test_concurrent_calls_keep_their_own_data(self, echo_api, bindings):
        client = Client(echo_api, LoopbackTransport(Dispatcher(echo_api, bindings)))
        mismatches = []

        def worker(seed):
            rng = random.Random(seed)
            for _ in range(20):
                where = fill(rng, new_bean(echo_api, "Address"))
                text = str(rng.random())
                if client.call("Echo", Text=text, Where=where) != {"Text": text, "Where": where}:
                    mismatches.append(seed)
        threads = [threading.Thread(target=worker, args=(i,)) for i in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not mismatches


def _try(fn, *args):
    try:
        fn(*args)
    except Exception as exc:  # reported through the list
        return exc
    return None
