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

from typing import Any, Dict, Iterable, List, Tuple, Union
import dataclasses
import json
import struct

import numpy as np

from .. import constants
from ..exceptions import CheckpointMalformedError

_PREAMBLE = struct.Struct("<II")


class InvalidMagic(CheckpointMalformedError):
    """
    Raised when the data does not start with the checkpoint magic.
    """

    pass


class UnsupportedFormatVersion(CheckpointMalformedError):
    """
    Raised when the checkpoint was written by an unknown format version.
    """

    pass


class TruncatedPayload(CheckpointMalformedError):
    """
    Raised when the data ends before the header or a tensor is complete.
    """

    pass


@dataclasses.dataclass(frozen=True)
class ParsedCheckpoint:
    format_version: int
    graph: Dict[str, Any]
    metadata: Dict[str, Any]
    tensors: List[Tuple[str, np.ndarray]]


def _split_preamble(buf: bytes) -> Tuple[int, int, int]:
    magic_len = len(constants.CHECKPOINT_MAGIC)

    if buf[:magic_len] != constants.CHECKPOINT_MAGIC:
        raise InvalidMagic("The data is not a checkpoint.")

    if len(buf) < magic_len + _PREAMBLE.size:
        raise TruncatedPayload("The checkpoint preamble is truncated.")

    version, header_len = _PREAMBLE.unpack_from(buf, magic_len)

    return version, header_len, magic_len + _PREAMBLE.size


def _parse_header(raw: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(raw.decode("utf-8"))

    except (UnicodeDecodeError, ValueError) as e:
        raise CheckpointMalformedError(
            "Unable to decode the checkpoint header."
        ) from e

    if not isinstance(header, dict) or not {
        "graph",
        "metadata",
        "tensors",
    } <= set(header):
        raise CheckpointMalformedError(
            "The checkpoint header misses required keys."
        )

    return header


def parse_checkpoint(buf: bytes) -> ParsedCheckpoint:
    version, header_len, offset = _split_preamble(buf)

    if version != constants.CHECKPOINT_FORMAT_VERSION:
        raise UnsupportedFormatVersion(
            f"Checkpoint format version {version} is not supported."
        )

    if len(buf) < offset + header_len:
        raise TruncatedPayload("The checkpoint header is truncated.")

    header = _parse_header(buf[offset : offset + header_len])
    offset += header_len

    tensors = []

    try:
        for entry in header["tensors"]:
            shape = tuple(int(dim) for dim in entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + 4 * count

            if len(buf) < end:
                raise TruncatedPayload(
                    f"The payload of {entry['name']!r} is truncated."
                )

            arr = np.frombuffer(buf, dtype="<f4", count=count, offset=offset)
            tensors.append(
                (str(entry["name"]), arr.astype(np.float32).reshape(shape))
            )
            offset = end

    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointMalformedError(
            "Unable to unpack the tensor table."
        ) from e

    if offset != len(buf):
        raise CheckpointMalformedError(
            "Trailing bytes after the tensor payload."
        )

    return ParsedCheckpoint(
        format_version=version,
        graph=header["graph"],
        metadata=header["metadata"],
        tensors=tensors,
    )


def parse_json_lines(text: str) -> List[Dict[str, Any]]:
    records = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue

        try:
            record = json.loads(line)

        except ValueError as e:
            raise CheckpointMalformedError(
                f"Line {lineno} is not valid JSON."
            ) from e

        if not isinstance(record, dict):
            raise CheckpointMalformedError(
                f"Line {lineno} is not a JSON object."
            )

        records.append(record)

    return records


def parse_json_document(text: str) -> Dict[str, Any]:
    try:
        record = json.loads(text)

    except ValueError as e:
        raise CheckpointMalformedError(
            "The document is not valid JSON."
        ) from e

    if not isinstance(record, dict):
        raise CheckpointMalformedError("The document is not a JSON object.")

    return record


def decode_scores(values: Iterable[Union[float, str]]) -> np.ndarray:
    try:
        return np.array(
            [np.inf if v == "inf" else float(v) for v in values],
            dtype=np.float64,
        )

    except (TypeError, ValueError) as e:
        raise CheckpointMalformedError("Malformed score list.") from e
