from .encoding import (
    EncodedSequence,
    EncodingConfig,
    ProxyLabels,
    derive_labels,
    encode,
    encode_all,
    fit_encoding,
    hash_question,
)
from .folds import FoldPlan, kfold_split
from .records import (
    DataError,
    InteractionEvent,
    StudentRecord,
    clean,
    load_events,
    load_questions,
    load_static,
    write_events_csv,
    write_questions_csv,
    write_static_csv,
)
from .synthetic import SyntheticData, SyntheticSpec, gen_synthetic

__all__ = [
    "DataError",
    "EncodedSequence",
    "EncodingConfig",
    "FoldPlan",
    "InteractionEvent",
    "ProxyLabels",
    "StudentRecord",
    "SyntheticData",
    "SyntheticSpec",
    "clean",
    "derive_labels",
    "encode",
    "encode_all",
    "fit_encoding",
    "gen_synthetic",
    "hash_question",
    "kfold_split",
    "load_events",
    "load_questions",
    "load_static",
    "write_events_csv",
    "write_questions_csv",
    "write_static_csv",
]
