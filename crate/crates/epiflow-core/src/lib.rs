//! Dense optical flow by direct first-order optimization, with epipolar-geometry
//! regularizers (Sampson distance, low-rank and union-of-subspaces losses on lifted
//! correspondences) and spectral motion segmentation on the self-expression affinity.

pub mod epipolar;
pub mod error;
pub mod eval;
pub mod flo;
pub mod optimizer;
pub mod photometric;
pub mod segmentation;
pub mod smoothness;
pub mod subspace;
pub mod synth;
pub mod types;
pub mod viz;

pub use epipolar::{estimate_fundamental_8pt, sampson_gradient, sampson_loss, FundamentalMatrix};
pub use error::Error;
pub use eval::{evaluate, EvalResult};
pub use flo::{
    read_flo, read_flow_png, read_image, write_flo, write_flow_png, write_image, FLO_MAGIC,
};
pub use optimizer::{
    build_pyramid, finetune_epipolar, optimize, total_loss, upsample_flow, LossReport,
    OptimizeResult, OptimizerConfig, Pyramid, Regularizer,
};
pub use photometric::{
    census_transform, occlusion_mask, photometric_losses, warp, CensusMap, PhotometricContext,
    PhotometricEval,
};
pub use segmentation::{
    build_affinity, estimate_motion_count, segment_flow, segmentation_accuracy,
    sparsify_affinity, spectral_cluster, MotionLabels,
};
pub use smoothness::{smoothness_loss, SmoothnessEval};
pub use subspace::{
    lift, lift_column, nuclear_norm_gradient, nuclear_norm_loss, sample_pixels,
    subspace_expression, subspace_gradient, subspace_loss, LiftedMatrix, SelfExpression,
};
pub use synth::{generate, SceneCase, SynthScene};
pub use types::{
    charbonnier, charbonnier_deriv, correspondences_at, flow_to_correspondences, Correspondence,
    FlowField, Image, LossConfig, OcclusionMask,
};
pub use viz::{
    affinity_image_ordered, affinity_to_image, color_wheel, flow_to_color, labels_to_color,
};
