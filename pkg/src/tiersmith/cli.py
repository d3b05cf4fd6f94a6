"""``tiersmith check|gen|serve|call|render``.

Exit status: 0 success, 1 definition or input problems (or a call that
ended in an error chain), 2 configuration problems.
"""
from __future__ import annotations

import argparse
import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

from .codegen import generate, write_artifacts
from .errors import CcException, DefinitionError, NotFound, ViolationError, WireError
from .project import ConfigError, build_application, load_api, load_config
from .server import LoopbackTransport, make_server, proxy_call, proxy_screen, server_url
from .wire import (
    decode_screen,
    encode_response,
    encode_screen,
    exception_chain,
)
from .beans import from_flat

EXIT_OK, EXIT_PROBLEMS, EXIT_CONFIG = 0, 1, 2


class _Fail(Exception):
    def __init__(self, status: int, lines: Sequence[str]):
        super().__init__(status)
        self.status = status
        self.lines = list(lines)


def _config(args):
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, [f"config error: {exc}"]) from None


def _api(config):
    try:
        return load_api(config)
    except DefinitionError as exc:
        raise _Fail(EXIT_PROBLEMS, [str(d) for d in exc.diagnostics]
                    + [f"{len(exc.diagnostics)} problem(s) in definitions"]) from None


def _app(config, api):
    try:
        return build_application(config, api)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, [f"config error: {exc}"]) from None
    except DefinitionError as exc:
        raise _Fail(EXIT_PROBLEMS, [str(d) for d in exc.diagnostics]) from None


def cmd_check(args, out) -> int:
    config = _config(args)
    api = _api(config)
    app = _app(config, api)
    problems = app.pages.check()
    for d in problems:
        print(d, file=out)
    if problems:
        print(f"{len(problems)} problem(s) in page structures", file=out)
        return EXIT_PROBLEMS
    structures = len(list(config.pages.glob("*.page.xml"))) if config.pages else 0
    print(
        f"ok: {len(api.beans)} beans, {len(api.screens)} screens, "
        f"{len(api.transactions)} transactions, {len(api.handlers)} request handlers, "
        f"{len(api.procedures)} procedures, {structures} page structures",
        file=out,
    )
    return EXIT_OK


def cmd_gen(args, out) -> int:
    config = _config(args)
    api = _api(config)
    written = write_artifacts(generate(api), args.out)
    for path in written:
        print(path, file=out)
    print(f"{len(written)} file(s) written to {args.out}", file=out)
    return EXIT_OK


def cmd_serve(args, out) -> int:
    config = _config(args)
    app = _app(config, _api(config))
    host, port = config.listen
    if args.host is not None:
        host = args.host
    if args.port is not None:
        port = args.port
    try:
        server = make_server(app.dispatcher, host, port)
    except OSError as exc:
        raise _Fail(EXIT_PROBLEMS, [f"cannot listen on {host}:{port}: {exc.strerror or exc}"]) from None

    def stop(signum, frame):
        raise KeyboardInterrupt

    previous = signal.signal(signal.SIGTERM, stop)
    try:
        print(f"listening on {server_url(server)}", file=out, flush=True)
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        signal.signal(signal.SIGTERM, previous)
        server.server_close()
        app.pool.close()
    print("stopped", file=out, flush=True)
    return EXIT_OK


def _pairs(items: Sequence[str]) -> list[tuple[str, str]]:
    pairs = []
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise _Fail(EXIT_PROBLEMS, [f"expected key=value, got {item!r}"])
        pairs.append((key, value))
    return pairs


def _chain_lines(exc: BaseException) -> list[str]:
    lines = []
    for depth, (cls, message) in enumerate(exception_chain(exc)):
        lead = "error" if depth == 0 else "  caused by"
        lines.append(f"{lead}: {cls}: {message}")
    return lines


def cmd_call(args, out) -> int:
    config = _config(args)
    app = _app(config, _api(config))
    api = app.api
    transport = LoopbackTransport(app.dispatcher)
    pairs = _pairs(args.params)
    try:
        if args.name in api.transactions:
            t = api.transactions[args.name]
            data, problems = from_flat(api, t.request_body, "", dict(pairs))
            if problems:
                raise ViolationError(problems)
            outputs = proxy_call(api, transport, t.name, dict(data.values))
            print(encode_response(api, t, outputs).decode("utf-8"), file=out)
        elif args.name in api.handlers:
            screen = proxy_screen(api, transport, args.name, pairs)
            print(encode_screen(screen).decode("utf-8"), file=out)
        else:
            raise _Fail(EXIT_PROBLEMS, [f"{args.name} is not a transaction or request handler"])
    except ViolationError as exc:
        raise _Fail(EXIT_PROBLEMS, [f"{v.path}: {v.message} [{v.rule}]" for v in exc.violations]) from None
    except CcException as exc:
        raise _Fail(EXIT_PROBLEMS, _chain_lines(exc)) from None
    return EXIT_OK


def cmd_render(args, out) -> int:
    config = _config(args)
    app = _app(config, _api(config))
    try:
        doc = Path(args.file).read_bytes()
    except OSError as exc:
        raise _Fail(EXIT_PROBLEMS, [f"cannot read {args.file}: {exc.strerror or exc}"]) from None
    try:
        screen = decode_screen(app.api, doc)
    except (WireError, ViolationError, NotFound) as exc:
        raise _Fail(EXIT_PROBLEMS, [f"{args.file}: {exc}"]) from None
    try:
        page = app.pages.render(screen)
    except DefinitionError as exc:
        raise _Fail(EXIT_PROBLEMS, [str(d) for d in exc.diagnostics]) from None
    out.write(page)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiersmith", description="Definition-driven three-tier application tool.")
    parser.add_argument("--config", default="tiersmith.conf", help="project file (default: ./tiersmith.conf)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log requests and internal errors")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("check", help="validate definitions and page structures").set_defaults(run=cmd_check)

    gen = sub.add_parser("gen", help="write procedure stubs, scaffolds and the manifest")
    gen.add_argument("--out", default="gen", help="output directory (default: gen)")
    gen.set_defaults(run=cmd_gen)

    serve = sub.add_parser("serve", help="run the HTTP server")
    serve.add_argument("--port", type=int, help="override the configured port (0 picks a free one)")
    serve.add_argument("--host", help="override the configured host")
    serve.set_defaults(run=cmd_serve)

    call = sub.add_parser("call", help="invoke a transaction or request handler in-process")
    call.add_argument("name")
    call.add_argument("params", nargs="*", metavar="key=value")
    call.set_defaults(run=cmd_call)

    render = sub.add_parser("render", help="render a screen document to HTML")
    render.add_argument("file")
    render.set_defaults(run=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=err,
    )
    try:
        return args.run(args, out)
    except _Fail as fail:
        for line in fail.lines:
            print(line, file=err)
        return fail.status
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
