"""Questioning-intensity modelling: prosody features, relative-attribute
ranking, k-means intonation labels, style-embedding math and metrics."""

from .audio import AudioClip, wav_read, wav_write
from .corpus import (
    KMeansIntonationLabeler,
    ManifestEntry,
    SynthSpec,
    generate_clip,
    generate_corpus,
    kmeans_label,
    read_manifest,
    sample_specs,
    write_manifest,
)
from .features import (
    FEATURE_NAMES,
    PitchTrack,
    ProsodyFeatureExtractor,
    Standardizer,
    estimate_f0,
    extract_features,
    final_window,
    standardize_apply,
    standardize_fit,
)
from .metrics import duration_mse, ffe, mcd, mel_cepstra
from .ranker import (
    PairConstraints,
    RankerConfig,
    RelativeAttributeRanker,
    brute_force_oracle,
    build_constraints,
    load_model,
    normalize_intensity,
    score,
    train_ranker,
)

__version__ = "0.1.0"
