"""Counterfactual story rewriting in two stages: sketch which ending
tokens carry the original condition, then generate a new ending that
fills the blanked skeleton under the changed condition."""

from .augment import (
    AugmentConfig,
    augment_blank,
    augment_replace,
    augment_shuffle,
    augment_variants,
    item_seed,
)
from .corpus import (
    Story,
    StoryPair,
    Vocab,
    detokenize,
    format_customize_input,
    format_sketch_input,
    load_dataset,
    tokenize,
)
from .errors import (
    CfStoryError,
    CheckpointError,
    ConfigError,
    DatasetError,
    SheetError,
    VocabMismatchError,
)
from .evaluation import (
    LabelMetrics,
    RougeL,
    label_metrics,
    paired_t_test,
    rouge_l,
    rouge_l_best,
    skeleton_coverage,
)
from .generator import (
    GeneratorConfig,
    GeneratorModel,
    GeneratorTrainConfig,
    SamplerConfig,
    generate_ending,
    generation_loss,
    load_generator,
    rewrite,
    sample_top_k,
    save_generator,
    top_k_filter,
    train_generator,
)
from .lcs import lcs, lcs_length
from .skeleton import (
    LABEL_BACKGROUND,
    LABEL_CAUSAL,
    Skeleton,
    build_skeleton,
    derive_labels,
    merge_blanks,
    parse_skeleton,
    render_skeleton,
)
from .tagger import (
    TaggerConfig,
    TaggerModel,
    TaggerTrainConfig,
    label_distribution,
    load_tagger,
    predict_labels,
    predict_skeleton,
    save_tagger,
    train_tagger,
    weighted_ce_loss,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig",
    "CfStoryError",
    "CheckpointError",
    "ConfigError",
    "DatasetError",
    "GeneratorConfig",
    "GeneratorModel",
    "GeneratorTrainConfig",
    "LABEL_BACKGROUND",
    "LABEL_CAUSAL",
    "LabelMetrics",
    "RougeL",
    "SamplerConfig",
    "SheetError",
    "Skeleton",
    "Story",
    "StoryPair",
    "TaggerConfig",
    "TaggerModel",
    "TaggerTrainConfig",
    "Vocab",
    "VocabMismatchError",
    "augment_blank",
    "augment_replace",
    "augment_shuffle",
    "augment_variants",
    "build_skeleton",
    "derive_labels",
    "detokenize",
    "format_customize_input",
    "format_sketch_input",
    "generate_ending",
    "generation_loss",
    "item_seed",
    "label_distribution",
    "label_metrics",
    "lcs",
    "lcs_length",
    "load_dataset",
    "load_generator",
    "load_tagger",
    "merge_blanks",
    "paired_t_test",
    "parse_skeleton",
    "predict_labels",
    "predict_skeleton",
    "render_skeleton",
    "rewrite",
    "rouge_l",
    "rouge_l_best",
    "sample_top_k",
    "save_generator",
    "save_tagger",
    "skeleton_coverage",
    "top_k_filter",
    "train_generator",
    "train_tagger",
    "weighted_ce_loss",
]
