"""Support vector regression by QUBO reduction and simulated annealing,
applied to facial-landmark detection."""

from .data import TrainingSet
from .errors import (
    CapacityError,
    ConvergenceError,
    DegenerateDataError,
    InvalidInputError,
    ModelFormatError,
    ParseError,
    QuboSvrError,
)
from .kernels import (
    GaussianKernel,
    GramMatrix,
    KernelSpec,
    LinearKernel,
    PolynomialKernel,
    default_eta,
    eval_kernel,
    gram,
    kernel_matrix,
    kernel_spec_from_dict,
    kernel_spec_to_dict,
)
from .qubo import (
    DualProblem,
    Encoding,
    QuboProblem,
    build_dual,
    build_qubo,
    decode,
    energy,
    lagrangian,
    qubo_to_text,
    to_ising,
)
from .solvers import (
    BaselineResult,
    SaConfig,
    SampleSet,
    average_low_energy,
    default_beta_range,
    minimize_encoded_exact,
    project_box_balance,
    solve_dual_baseline,
    solve_exact,
    solve_sa,
)
from .svr import (
    HyperParams,
    OffsetBounds,
    SvrModel,
    estimate_offset,
    load_model,
    model_from_dict,
    model_to_dict,
    offset_bounds,
    save_model,
    train,
)
from .features import (
    FaceAnnotation,
    SelectionResult,
    crop_resize,
    lbp_codes,
    lbp_features,
    lbp_histogram,
    pearson_select,
    read_annotations,
    read_netpbm,
    rescale_coord,
    resize_bilinear,
    scale_coord,
    to_gray,
    write_annotations,
    write_netpbm,
)
from .pipeline import (
    CvResult,
    EvaluationReport,
    FeatureStore,
    HyperGrid,
    LandmarkModels,
    SubTaskDataset,
    build_subtask,
    detection_error,
    errors_to_csv,
    evaluate,
    failure_rate,
    load_landmark_models,
    load_store,
    mccv,
    mnde,
    mne,
    preprocess,
    report_to_csv,
    run_cv,
    save_landmark_models,
    save_store,
    train_landmark_models,
)

__version__ = "0.1.0"
