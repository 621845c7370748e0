//! File formats: lossless `.flo` flow, KITTI 16-bit PNG flow, NPY export,
//! PFM and 8-bit PNG images, triplet directories, and the flow color wheel
//! for visualization. Every reader returns typed errors on malformed input
//! — corrupt files must never panic.

pub mod color;
pub mod flo;
pub mod kitti;
pub mod npy;
pub mod pfm;
pub mod png;
pub mod triplet;

pub use color::flow_to_color;
pub use flo::{read_flo, write_flo};
pub use kitti::{read_kitti_png, write_kitti_png};
pub use npy::{write_npy_correspondence, write_npy_flow, write_npy_flow_normalized};
pub use pfm::{read_pfm_depth, read_pfm_image, write_pfm_depth, write_pfm_image};
pub use png::{read_png_image, read_png_mask, write_png_image, write_png_mask};
pub use triplet::{
    read_triplet, write_triplet, TripletMeta, TripletRecord, FLOW_NAME, FRAME_T1_NAME,
    FRAME_T_NAME, MASK_NAME, META_NAME,
};
