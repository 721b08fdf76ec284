"""Interpreter child of the sandbox worker.

Runs a persistent-namespace REPL over newline-delimited JSON on stdio:
request {"id", "code"} -> response {"id", "stdout", "value", "error",
"duration_ms", "truncated"}. The supervising worker owns wall-clock
timeouts (it kills and respawns this process); this side owns execution
semantics: notebook-style last-expression echo, stdout capture with an
output cap, exception formatting as "Class: message", and resource limits.

Usage: python3 bootstrap.py '{"memory_mb": 512, "cpu_seconds": 10, "output_cap": 4096}'
"""

import ast
import io
import json
import os
import sys
import time


def _apply_limits(limits):
    try:
        import resource

        memory_mb = int(limits.get("memory_mb", 512))
        cpu_seconds = int(limits.get("cpu_seconds", 10))
        if memory_mb > 0:
            resource.setrlimit(resource.RLIMIT_AS, (memory_mb * 1024 * 1024,) * 2)
        if cpu_seconds > 0:
            # hard limit one second above soft so SIGXCPU is catchable first
            resource.setrlimit(resource.RLIMIT_CPU, (cpu_seconds, cpu_seconds + 1))
    except (ImportError, ValueError, OSError):
        pass


def _deny_network():
    # Best-effort in-process denial; real isolation is the deployment's job.
    try:
        import socket

        def _denied(*args, **kwargs):
            raise PermissionError("network access is disabled in the sandbox")

        socket.socket = _denied
        socket.create_connection = _denied
        socket.socketpair = _denied
    except ImportError:
        pass


class CappedWriter(io.TextIOBase):
    """Write sink that stores at most `cap` characters and counts overflow."""

    def __init__(self, cap):
        self.cap = cap
        self.pieces = []
        self.stored = 0
        self.overflow = False

    def writable(self):
        return True

    def write(self, text):
        text = str(text)
        room = self.cap - self.stored
        if room > 0:
            kept = text[:room]
            self.pieces.append(kept)
            self.stored += len(kept)
        if len(text) > max(room, 0):
            self.overflow = True
        return len(text)

    def getvalue(self):
        return "".join(self.pieces)


def _split_trailing_expression(code):
    """(exec_ast, eval_ast_or_None): notebook-style echo of a trailing expression."""
    tree = ast.parse(code, mode="exec")
    if tree.body and isinstance(tree.body[-1], ast.Expr):
        last = tree.body.pop()
        expr = ast.Expression(last.value)
        ast.copy_location(expr, last)
        return tree, expr
    return tree, None


def execute(code, namespace, output_cap):
    started = time.monotonic()
    capture = CappedWriter(output_cap)
    value = None
    error = None
    old_stdout, old_stderr = sys.stdout, sys.stderr
    sys.stdout = sys.stderr = capture
    try:
        exec_tree, eval_tree = _split_trailing_expression(code)
        exec(compile(exec_tree, "<sandbox>", "exec"), namespace)
        if eval_tree is not None:
            result = eval(compile(eval_tree, "<sandbox>", "eval"), namespace)
            if result is not None:
                value = repr(result)
    except SyntaxError as exc:
        error = "SyntaxError: %s" % exc.msg
    except BaseException as exc:  # noqa: BLE001 - the worker must survive everything
        error = "%s: %s" % (type(exc).__name__, exc)
    finally:
        sys.stdout, sys.stderr = old_stdout, old_stderr

    stdout = capture.getvalue()
    truncated = capture.overflow
    if value is not None:
        room = output_cap - len(stdout)
        if len(value) > room:
            value = value[:max(room, 0)]
            truncated = True
        if not value:
            value = None
    return {
        "stdout": stdout,
        "value": value,
        "error": error,
        "duration_ms": int((time.monotonic() - started) * 1000),
        "truncated": truncated,
    }


def main():
    limits = json.loads(sys.argv[1]) if len(sys.argv) > 1 else {}
    output_cap = int(limits.get("output_cap", 4096))
    _apply_limits(limits)
    _deny_network()

    # Own the protocol fds: user code gets /dev/null for fd 0/1 so stray
    # prints or input() can never corrupt or starve the message stream.
    protocol_in = os.fdopen(os.dup(0), "r", encoding="utf-8")
    protocol_out = os.fdopen(os.dup(1), "w", encoding="utf-8")
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)

    namespace = {"__name__": "__main__", "__builtins__": __builtins__}

    protocol_out.write(json.dumps({"ok": True}) + "\n")
    protocol_out.flush()

    for line in protocol_in:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except ValueError:
            continue
        result = execute(request.get("code", ""), namespace, output_cap)
        result["id"] = request.get("id")
        protocol_out.write(json.dumps(result, ensure_ascii=False) + "\n")
        protocol_out.flush()


if __name__ == "__main__":
    main()
