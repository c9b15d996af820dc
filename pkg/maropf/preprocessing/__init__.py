from .case_loader import (
    LengthMismatch,
    ParseError,
    SchemaVersionUnsupported,
    UnknownId,
    load_case,
    load_profiles,
    parse_window,
)
