"""Hub-side client for badge devices: wire codec, TCP session, CLI."""

from .client import (DEFAULT_CONFIGS, SOURCES, HubSession, default_schema,
                     join_timestamp, split_timestamp)
from .codec import CodecError, Schema

__all__ = [
    "CodecError",
    "DEFAULT_CONFIGS",
    "HubSession",
    "SOURCES",
    "Schema",
    "default_schema",
    "join_timestamp",
    "split_timestamp",
]

__version__ = "0.1.0"
