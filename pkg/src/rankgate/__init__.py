"""Exact client-side re-ranking over top-k query interfaces."""

from .model import (
    CATEGORICAL,
    NUMERIC_CONTINUOUS,
    NUMERIC_DISCRETE,
    AttributeSchema,
    DomainValueError,
    Interval,
    Predicate,
    RankingSpec,
    SchemaError,
    SearchQuery,
    Tuple,
    canonicalize,
    equals_pred,
    filter_signature,
    matches,
    normalize,
    query,
    query_digest,
    range_pred,
    rank_key,
    refine,
    score,
)
from .source import (
    COMPLETE,
    OVERFLOW,
    QueryMeter,
    SourceDescriptor,
    SystemRanking,
    TopKResponse,
    TopKSimulator,
    TransientSourceError,
    read_dataset,
    write_dataset,
)
from .executor import BatchQueryError, Executor, RateLimit
from .caches import (
    DenseEntry,
    DenseRegion,
    DenseRegionStore,
    SessionCache,
    ValidationReport,
    region_volume,
)
from .engine1d import (
    ASCENDING,
    DESCENDING,
    EngineConfig,
    GetNextState1D,
    IndistinguishableTuplesError,
    NoMatchesError,
    crawl_complete,
    crawl_equal_value,
    crawl_region,
    discover_extremes,
    get_next_1d_baseline,
    get_next_1d_binary,
    get_next_1d_rerank,
    make_state_1d,
)
from .enginemd import (
    Contour,
    EqualSlicePlan,
    GetNextStateMD,
    cover_contour,
    get_next_md_baseline,
    get_next_md_binary,
    get_next_md_rerank,
    get_next_md_ta,
    make_state_md,
    partition_subspaces,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
