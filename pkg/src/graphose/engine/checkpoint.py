"""Single-file container for named float64 arrays plus a JSON metadata block.

Layout: magic line, one JSON header line (array names -> shape/offset, plus an
optional "meta" object), then the raw little-endian float64 payloads back to
back. Byte order is fixed so containers are portable across hosts.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"GRAPHOSE-TENSORS-1\n"


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header: dict = {"arrays": {}, "meta": meta or {}}
    offset = 0
    payloads = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")  # tobytes() emits C order regardless of layout
        header["arrays"][name] = {"shape": list(arr.shape), "offset": offset}
        payloads.append(arr.tobytes())
        offset += arr.nbytes
    blob = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    with open(path, "wb") as fp:
        fp.write(MAGIC)
        fp.write(blob)
        for chunk in payloads:
            fp.write(chunk)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fp:
        magic = fp.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path} is not a tensor container")
        header = json.loads(fp.readline().decode("utf-8"))
        payload = fp.read()
    arrays = {}
    for name, info in header["arrays"].items():
        shape = tuple(info["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = info["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return arrays, header.get("meta", {})
