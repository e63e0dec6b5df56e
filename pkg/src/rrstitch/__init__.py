"""Crosslingual embedding stitching with relative representations.

Target-language static embeddings are re-expressed as weighted sums of
source-language anchor embeddings, so a classifier trained on the source
side can run on the target side after an embedding-table swap.
"""

__version__ = "0.1.0"

from .classifier import (
    LabeledDataset,
    LinearClassifier,
    TrainConfig,
    aggregate_star_labels,
    evaluate_macro_f1,
    macro_f1,
    pool,
    stitch,
    train,
)
from .embeddings import EmbeddingTable, Vocabulary, cosine_similarity, load_vec_file, save_vec_file
from .lexicon import (
    AnchorSet,
    LexiconEntry,
    build_anchor_set,
    filter_by_score,
    load_lexicon,
    remove_stopwords,
    sample_anchors,
)
from .mapping import LSTransform, MappedTable, ls_fit, ls_project, map_table
from .relrep import WeightingScheme, relative_representation, sparsemax, top_k, weights
from .synth import SynthScenario, generate_pair, generate_task, run_end_to_end
