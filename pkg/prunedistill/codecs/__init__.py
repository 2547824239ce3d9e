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

from .composers import (  # noqa: F401
    compose_checkpoint,
    compose_json_document,
    compose_json_line,
    encode_scores,
)
from .parsers import (  # noqa: F401
    InvalidMagic,
    ParsedCheckpoint,
    TruncatedPayload,
    UnsupportedFormatVersion,
    decode_scores,
    parse_checkpoint,
    parse_json_document,
    parse_json_lines,
)
