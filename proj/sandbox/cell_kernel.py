# SPDX-License-Identifier: Apache-2.0
"""Persistent cell interpreter run inside the sandbox.

Reads length-prefixed frames on stdin and answers on stdout; see
docs/wire-protocol.md. All cells share one global namespace, so names bound
by one cell are visible to the next.
"""

import ast
import json
import os
import struct
import sys
import tempfile
import traceback


def read_exact(stream, n):
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_frame(stream):
    header = read_exact(stream, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    body = read_exact(stream, length)
    if body is None:
        return None
    return json.loads(body.decode("utf-8"))


def write_frame(stream, obj):
    body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
    stream.write(struct.pack(">I", len(body)) + body)
    stream.flush()


def run_cell(source, cell_id, namespace):
    """Executes one cell; the value of a trailing expression is printed."""
    tree = ast.parse(source, filename="<cell %d>" % cell_id, mode="exec")
    trailing = None
    if tree.body and isinstance(tree.body[-1], ast.Expr):
        trailing = ast.Expression(tree.body.pop().value)
    exec(compile(tree, "<cell %d>" % cell_id, "exec"), namespace)
    if trailing is not None:
        value = eval(compile(trailing, "<cell %d>" % cell_id, "eval"), namespace)
        if value is not None:
            print(repr(value))


def print_user_traceback(exc):
    tb = exc.__traceback__
    # Drop the frames that belong to this module.
    while tb is not None and tb.tb_frame.f_code.co_filename == __file__:
        tb = tb.tb_next
    traceback.print_exception(type(exc), exc, tb)


def main():
    frames_in = os.fdopen(os.dup(0), "rb", buffering=0)
    frames_out = os.fdopen(os.dup(1), "wb", buffering=0)
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)

    work_dir = os.environ.get("WORK_DIR")
    if work_dir:
        os.chdir(work_dir)

    namespace = {"__name__": "__main__", "__builtins__": __builtins__}
    write_frame(frames_out, {"id": 0, "status": "ready", "stdout": "", "stderr": ""})

    while True:
        request = read_frame(frames_in)
        if request is None:
            return
        cell_id = int(request.get("id", 0))
        source = request.get("source", "")
        status = "success"
        with tempfile.TemporaryFile() as out, tempfile.TemporaryFile() as err:
            sys.stdout.flush()
            sys.stderr.flush()
            saved_out, saved_err = os.dup(1), os.dup(2)
            os.dup2(out.fileno(), 1)
            os.dup2(err.fileno(), 2)
            try:
                run_cell(source, cell_id, namespace)
            except SystemExit as exc:
                if exc.code not in (None, 0):
                    status = "error"
                    print_user_traceback(exc)
            except BaseException as exc:  # noqa: B036 - user code may raise anything
                status = "error"
                print_user_traceback(exc)
            finally:
                sys.stdout.flush()
                sys.stderr.flush()
                os.dup2(saved_out, 1)
                os.dup2(saved_err, 2)
                os.close(saved_out)
                os.close(saved_err)
            out.seek(0)
            err.seek(0)
            stdout = out.read().decode("utf-8", errors="replace")
            stderr = err.read().decode("utf-8", errors="replace")
        write_frame(frames_out, {"id": cell_id, "status": status, "stdout": stdout, "stderr": stderr})


if __name__ == "__main__":
    main()
