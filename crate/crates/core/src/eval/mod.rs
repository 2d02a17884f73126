//! Generation quality and phase-alignment evaluation.

pub mod frechet;
pub mod metrics;
pub mod nets;
pub mod protocol;

pub use frechet::{distance_between, feature_matrix, frechet_distance, gaussian_stats, Distance, GaussianStats};
pub use metrics::{argmax, auroc_binary, auroc_macro_ovr, auroc_per_class, top1_accuracy};
pub use nets::{
    check_classifier_protocol, clip_input, init_net, train_net, train_phase_classifier, EpochRecord, NetKind, NetRun,
    NetTraining, PhaseNet, CLIP_FRAMES, NUM_CLASSES,
};
pub use protocol::{
    compute_fid, compute_fvd, generate_pool, generation_plan, run_evaluation, ClipEmbedder, EvalData, EvalProtocol,
    EvalReport, ExtractorHashes, FrameEmbedder, GeneratorMetrics,
};
