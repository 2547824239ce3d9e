#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
#   Copyright 2026 Kaede Hoshikawa
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.

from typing import Any, Iterable, List, Mapping, Sequence, Tuple, Union
import json
import math
import struct

import numpy as np

from .. import constants

_SENTINEL = "inf"


def _dumps(record: Any, **kwargs: Any) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False, **kwargs)


def compose_checkpoint(
    *,
    graph: Mapping[str, Any],
    metadata: Mapping[str, Any],
    tensors: Sequence[Tuple[str, np.ndarray]],
    format_version: int = constants.CHECKPOINT_FORMAT_VERSION,
) -> bytes:
    """
    magic | format_version (u32 LE) | header length (u32 LE) | JSON header |
    fp32 little-endian tensor payload in header order.
    """
    entries = []
    payload = []

    for name, arr in tensors:
        entries.append({"name": name, "shape": list(arr.shape)})
        payload.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    header = _dumps(
        {"graph": graph, "metadata": metadata, "tensors": entries},
        separators=(",", ":"),
    ).encode("utf-8")

    return b"".join(
        [
            constants.CHECKPOINT_MAGIC,
            struct.pack("<II", format_version, len(header)),
            header,
            *payload,
        ]
    )


def compose_json_line(record: Mapping[str, Any]) -> str:
    return _dumps(record) + "\n"


def compose_json_document(record: Mapping[str, Any]) -> str:
    return _dumps(record, indent=2) + "\n"


def encode_scores(values: Iterable[float]) -> List[Union[float, str]]:
    # +inf becomes the literal "inf"; JSON has no infinity.
    return [
        _SENTINEL if math.isinf(v) and v > 0 else float(v) for v in values
    ]
