//! Target-less LiDAR-camera extrinsic calibration.
//!
//! The pipeline densifies LiDAR data (static accumulation or continuous-time
//! ICP deskewing), renders it through a virtual camera so that an image
//! matcher or a human can produce 2D-3D correspondences, estimates an initial
//! transform with rotation-only RANSAC and robust reprojection refinement, and
//! finally refines it by minimizing the normalized information distance (NID)
//! between LiDAR and camera intensities.

pub mod cloud;
pub mod correspondence;
pub mod depth;
pub mod error;
pub mod dynamic;
pub mod geom;
pub mod hull;
pub mod init_guess;
pub mod ivox;
pub mod nelder_mead;
pub mod nid;
pub mod overlay;
pub mod pipeline;
pub mod registration;
pub mod synthetic;
pub mod virtual_camera;

pub use error::{Error, Result};
