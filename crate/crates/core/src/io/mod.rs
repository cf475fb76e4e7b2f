//! Binary file formats (all little-endian, magic-tagged and versioned) and
//! matched-moment Gaussian controls.

mod acti;
mod acts;
mod binary;
mod moms;
mod weights;

pub use acti::{read_acti, write_acti};
pub use acts::{
    provenance_path, read_acts, read_acts_header, write_acts, ActivationDataset, ActsHeader,
    ActsReader, ACTS_HEADER_LEN,
};
pub use moms::{compute_moments, read_moms, sample_gaussian_control, write_moms, Moments};
pub use weights::{
    read_dict, read_mlpw, read_model, read_moew, write_dict, write_mlpw, write_model, write_moew,
    StoredModel, TeacherWeights,
};
