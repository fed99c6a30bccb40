"""Subprocess entry point implementing the frame-decoder wire contract.

    python -m vidident.framedump PATH INDEX [INDEX ...]

Writes the selected frames to stdout as concatenated raw RGB24, each preceded
by a 16-byte header: width, height, frame_index, reserved (little-endian u32).
"""

from __future__ import annotations

import sys

from .ingest import encode_frame_stream


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) < 2:
        print("usage: python -m vidident.framedump PATH INDEX [INDEX ...]", file=sys.stderr)
        return 2
    path = argv[0]
    try:
        indices = [int(a) for a in argv[1:]]
    except ValueError:
        print("frame indices must be integers", file=sys.stderr)
        return 2
    data = encode_frame_stream(path, indices)
    sys.stdout.buffer.write(data)
    sys.stdout.buffer.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
