//! Template-matching anomaly detection over pretrained feature tensors.
//!
//! The engine works in two stages. Stage I stacks the features of nominal
//! images into a [`TemplateBank`] and can compress it per pixel with
//! [`pts_compress`]. Stage II scores a query by matching it against the
//! bank in both directions ([`LayerIndex::forward`] and
//! [`LayerIndex::backward`]), mixing the two maps, summing layers at the
//! output resolution and post-processing into an image score and a
//! localization map. [`evaluation`] computes AUROC and PRO.
//!
//! Features enter as FTN tensor files (see [`tensor`]); images never do.
//!
//! ```no_run
//! use hetmm::{build_bank, hetmm_score, read_tensor, ImageFeatures, PatchSpec};
//!
//! # fn main() -> hetmm::Result<()> {
//! let nominal: Vec<ImageFeatures> = (0..60)
//!     .map(|i| -> hetmm::Result<_> {
//!         Ok(ImageFeatures::new(format!("good_{i:03}"))
//!             .with_layer(1, read_tensor(format!("feats/good_{i:03}.l1.ftn"))?))
//!     })
//!     .collect::<hetmm::Result<_>>()?;
//! let bank = build_bank(nominal)?;
//! let query = read_tensor("feats/query.l1.ftn")?;
//! let map = hetmm_score(&query, bank.layer(1).unwrap(), PatchSpec::square(9)?, 0.8)?;
//! println!("max pixel score {}", map.max());
//! # Ok(())
//! # }
//! ```

pub mod bank;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod matching;
pub mod optics;
pub mod pipeline;
pub mod postprocess;
pub mod reference;
pub mod selection;
pub mod tensor;

pub use bank::{build_bank, ImageFeatures, LayerId, TemplateBank};
pub use error::{Error, Result};
pub use evaluation::{
    auroc, connected_components, curve_points, pro, CurveKind, EvalRecord, Label, Mask,
};
pub use matching::{
    aggregate_layers, backward_hetm, cosine_distance, forward_hetm, hetmm_score, patch_indices,
    AnomalyMap, BankIndex, LayerIndex, MatchConfig, PatchSpec,
};
pub use postprocess::{gaussian_blur, image_score, normalize01, PostConfig};
pub use selection::{pts_compress, PtsConfig};
pub use tensor::{read_tensor, write_tensor, FeatureMap};
