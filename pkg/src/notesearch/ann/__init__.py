from .filters import (
    CATEGORICAL_FIELDS,
    NUMERIC_FIELDS,
    AttributeSet,
    FilterError,
    FilterSpec,
)
from .index import (
    DimensionMismatchError,
    DuplicateChunkIdError,
    IndexConfig,
    InsertReport,
    PartitionedIndex,
    SearchResult,
    UntrainedIndexError,
    VectorEntry,
)
from .kmeans import train_partitions
from .quantization import (
    QUANT_NONE,
    QUANT_SCALAR8,
    asymmetric_scores,
    dequantize,
    quantize,
)
from .storage import ChecksumError, FormatError, StorageError, load_index, save_index

__all__ = [
    "CATEGORICAL_FIELDS",
    "NUMERIC_FIELDS",
    "AttributeSet",
    "FilterError",
    "FilterSpec",
    "DimensionMismatchError",
    "DuplicateChunkIdError",
    "IndexConfig",
    "InsertReport",
    "PartitionedIndex",
    "SearchResult",
    "UntrainedIndexError",
    "VectorEntry",
    "train_partitions",
    "QUANT_NONE",
    "QUANT_SCALAR8",
    "asymmetric_scores",
    "dequantize",
    "quantize",
    "ChecksumError",
    "FormatError",
    "StorageError",
    "load_index",
    "save_index",
]
