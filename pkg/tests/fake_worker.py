"""Minimal wire-protocol worker used as a test fixture for SandboxSession.

Speaks the same newline-delimited JSON protocol as the real worker but
with canned behaviors keyed on the code text, so client tests need no
interpreter management. Run with: python fake_worker.py [--hang-after N]
(plus the --memory-mb/--cpu-seconds/--output-cap flags the client passes).
"""

import json
import sys


def main() -> int:
    args = sys.argv[1:]
    hang_after = None
    if "--hang-after" in args:
        hang_after = int(args[args.index("--hang-after") + 1])
    sys.stdout.write('{"ready": true, "protocol": 1}\n')
    sys.stdout.flush()
    handled = 0
    for line in sys.stdin:
        if not line.strip():
            continue
        req = json.loads(line)
        handled += 1
        if hang_after is not None and handled > hang_after:
            import time

            time.sleep(3600)
        code = req.get("code", "")
        resp = {
            "id": req.get("id"),
            "stdout": "",
            "value": None,
            "error": None,
            "duration_ms": 1,
            "truncated": False,
        }
        if code == "1+1":
            resp["value"] = "2"
        elif code == "crash":
            return 1
        elif code == "loop":
            resp["error"] = "Timeout"
        else:
            resp["stdout"] = f"ran {len(code)} chars\n"
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
