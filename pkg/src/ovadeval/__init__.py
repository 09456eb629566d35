"""Evaluation engine for open-vocabulary attribute detection."""

from .annotation import (
    InfeasiblePolicy,
    TypeSelection,
    annotation_consistency,
    feasible_types,
    propagate_labels,
)
from .captions import CaptionParts, TaggedToken, count_adjectives, extract_parts, select_attribute_vocabulary
from .geometry import MatchResult, iou, match_for_attributes, match_for_detection
from .metrics import (
    EvalMode,
    EvalReport,
    FrequencySplits,
    RankedSamples,
    attribute_eval,
    average_precision,
    chance_report,
    dataset_stats,
    frequency_splits,
    ovd80_eval,
    subset_stability,
)
from .scoring import (
    EmbeddingTable,
    caption_batch_loss,
    class_embedding,
    grad_check,
    itc_loss,
    match_score,
    proxy_parts_loss,
    score_all,
)
from .types import (
    AnnotatedImage,
    AnnotatedInstance,
    AttributeDef,
    AttributeTaxonomy,
    BoundingBox,
    DataError,
    Dataset,
    ImagePredictions,
    ObjectCategory,
    PredictedInstance,
    TriState,
    load_annotations,
    load_categories,
    load_taxonomy,
    validate_dataset,
)

__version__ = "0.1.0"
