"""Semantics-based output mapping for frozen classifiers.

Adapt a frozen n-class model to an m-class task by mapping its outputs:
prefix (rm), frequency-based (fm), 1-on-1 semantic (semap1), fixed k-on-1
(semap_k), or adaptive k-on-1 with a decaying gap threshold (semap_a).
Includes a desk-scale visual prompt trainer and a zero-shot evaluator with
a planted synthetic benchmark.
"""

from .backbone import (
    FrozenBackbone,
    Prompt,
    PromptedImage,
    compose,
    forward,
    grad_prompt,
    load_backbone,
    load_prompt,
    make_backbone,
    padding_prompt,
    patch_prompt,
    save_backbone,
    save_prompt,
)
from .embedding_io import (
    EmbeddingMatrix,
    LabelSet,
    LogitBatch,
    load_embeddings,
    load_labels,
    load_logits,
    load_mapping,
    write_embeddings,
    write_labels,
    write_logits,
    write_mapping,
)
from .errors import (
    CapacityError,
    CoverageError,
    FormatError,
    HyperparameterError,
    InvalidInputError,
    SemapError,
    ShapeError,
    TrainingDivergedError,
)
from .evaluator import (
    EvalReport,
    SyntheticBenchmark,
    compare_strategies,
    evaluate,
    evaluate_random_guess,
    make_synthetic_benchmark,
    predict_zero_shot,
    write_benchmark,
)
from .mapping import (
    MappingTable,
    apply_mapping,
    fm_map,
    rm_map,
    scatter_mapping,
    semap1,
    semap_a,
    semap_k,
)
from .numerics import Rng, cross_entropy, matmul, softmax
from .similarity import SimilarityProfile, build_profiles, cosine_similarity
from .trainer import TrainConfig, TrainReport, loss_and_grad, train

__version__ = "0.1.0"
