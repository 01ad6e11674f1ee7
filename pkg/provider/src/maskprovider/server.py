"""Line-oriented JSON request loop.

One request per line on stdin, one response per line on stdout.  Request:
``{"id": int, "image": path, "points": [[x, y], ...], "scale":
"full"|"patch"}``.  Response: ``{"id": int, "masks": [{"path": path,
"score": float}, ...]}`` with the id echoed, or ``{"id": ..., "error":
string}``.  Malformed requests produce an error response and the loop keeps
serving until EOF.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .backends import make_backend
from .imaging import write_mask


def serve(backend, out_dir, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    serial = 0
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            request = json.loads(line)
            request_id = request.get("id")
            if not isinstance(request_id, int):
                raise ValueError("request id must be an integer")
            image = request["image"]
            scale = request["scale"]
            if scale not in ("full", "patch"):
                raise ValueError(f"scale must be 'full' or 'patch', got {scale!r}")
            points = request.get("points", [])
            masks = backend.segment(image, points, scale)
            entries = []
            for bits, score in masks:
                serial += 1
                path = out_dir / f"mask_{request_id:06d}_{serial:06d}.png"
                write_mask(path, bits)
                entries.append({"path": str(path), "score": float(score)})
            response = {"id": request_id, "masks": entries}
        except Exception as e:  # keep serving whatever went wrong
            response = {"id": request_id, "error": str(e)}
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="maskprovider")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="serve mask requests on stdin/stdout")
    p.add_argument(
        "--backend",
        default="threshold",
        choices=("threshold", "echo_gt", "inject_speckles", "merge_lines"),
        help="threshold is self-contained; mocks read MASKPROVIDER_GT",
    )
    p.add_argument("--native-size", type=int, default=1024,
                   help="model input resolution patches are upscaled to")
    p.add_argument("--out-dir", default=None, help="where mask PNGs are written")
    args = parser.parse_args(argv)
    out_dir = args.out_dir or tempfile.mkdtemp(prefix="maskprovider-")
    try:
        backend = make_backend(args.backend, native_size=args.native_size)
    except Exception as e:
        sys.stderr.write(json.dumps({"error": str(e)}) + "\n")
        return 1
    serve(backend, out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
