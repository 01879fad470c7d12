"""Lie-group transport operators for low-dimensional latent manifolds.

Learn a dictionary of generator matrices whose matrix exponentials
transport latent points along manifold directions, infer sparse
coefficients between point pairs, encode per-point coefficient scales that
preserve class identity, and analyze operator stability.
"""

from .encoder import (
    Classifier,
    ClassifierConfig,
    EncoderConfig,
    ScaleEncoder,
    encoder_loss,
    kl_laplace,
    sample_encoded,
    spread_matrix,
    train_classifier,
    train_encoder,
)
from .errors import (
    ConvergenceFailure,
    DegenerateData,
    DegenerateLabels,
    DimensionMismatch,
    DivergedError,
    EmptyClass,
    FeatureMismatch,
    InvalidScale,
    NonFiniteError,
    TransportOpsError,
    UnlabeledPoint,
)
from .inference import (
    InferenceConfig,
    InferenceReport,
    coefficient_gradient,
    infer,
    infer_batch,
    infer_subgradient,
    objective,
    soft_threshold,
)
from .learning import (
    HealthReport,
    TrainLog,
    TrainStepRecord,
    TrainerConfig,
    dictionary_gradient,
    health_report,
    train_dictionary,
)
from .numerics import (
    NumericsConfig,
    central_difference_gradient,
    eigenvalues,
    expm,
    expm_adjoint,
    expm_frechet,
)
from .operators import (
    LaplacePrior,
    LatentPoint,
    OperatorDictionary,
    PointPair,
    dictionary_from_json,
    dictionary_to_json,
    generate_path,
    load_dictionary,
    operator_magnitudes,
    sample_laplace,
    sample_transform,
    save_dictionary,
    sparsity,
    transform,
)
from .pairing import FeatureSource, knn_indices, select_pair_indices, select_pairs
from .stability import is_normal, path_trace, stability_metric
from .synth import (
    GeneratorCatalog,
    MulticlassDataset,
    make_multiclass_dataset,
    make_rotation_dataset,
    make_rotation_pairs,
    rotation_generator,
    two_block_rotation_generators,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
