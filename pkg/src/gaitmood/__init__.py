"""Emotion recognition from wrist-worn sensor walks.

Pipeline: ingest sensor logs -> trim to labeled walking segments ->
mean-filter and cut 24-sample windows -> extract the 107-dimensional
feature vector -> train personal models -> evaluate with repeated
stratified CV, emotion-block CV, or leave-one-user-out -> report user
lifts, permutation p-values, and forest feature importances.
"""

__version__ = "0.1.0"

from .errors import (
    AlignmentError,
    ConfigError,
    DataError,
    DegenerateDataError,
    EmptySegmentError,
    GaitmoodError,
    MissingHeartRateError,
    ParseError,
    ProtocolError,
)
from .evaluation import (
    EvalConfig,
    accuracy,
    block_cv,
    evaluate_study,
    importance_report,
    louo_cv,
    macro_f1,
    permutation_test_mean_gt_zero,
    roc_auc,
    stratified_repeated_cv,
    user_lift,
)
from .features import (
    FeatureTable,
    FeatureVector,
    angle_features,
    axis_stats,
    extract_features,
    feature_names,
    featurize,
    magnitude_std,
)
from .ingest import (
    HeartRateSeries,
    ParticipantData,
    SampleSeries,
    StudyManifest,
    WalkSegment,
    estimate_sampling_rate,
    load_manifest,
    load_study,
    parse_heart_rate_csv,
    parse_sensor_csv,
    trim_to_segment,
)
from .models import ModelSpec, load_model, save_model, train
from .preprocess import (
    WindowBundle,
    align_gyro,
    align_hr,
    make_windows,
    mean_filter,
    participant_windows,
    study_windows,
)
from .stats import (
    GroupedSample,
    PairedSample,
    one_way_anova,
    paired_t_test,
    wilcoxon_signed_rank,
)
from .synth import EmotionParams, SynthParams, generate_study, generate_walk, identical_params, separable_params
