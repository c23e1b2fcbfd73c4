"""Motion-gated face recognition home security: native core bindings."""

from ._core import (  # noqa: F401
    ArgumentError,
    BoundsError,
    Cascade,
    DEFAULT_THRESHOLD,
    Error,
    FormatError,
    MAX_PAYLOAD_BYTES,
    RecognizerModel,
    Server,
    SizeError,
    StateError,
    compute_metrics,
    describe,
    feature_count,
    identity_faces,
    integral,
    lbp_image,
    load_pgm,
    parse_motion,
    rect_sum,
    run_cli,
    save_pgm,
    toy_faces,
    train_toy_cascade,
    validate_message,
    wire_form,
    write_replay,
)

__all__ = [name for name in dir() if not name.startswith("_")]
