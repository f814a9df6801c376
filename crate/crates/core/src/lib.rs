//! Morphable-face engine core: PCA face model, z-buffered UV rendering with
//! spherical-harmonics shading, fixed-coverage analytic gradients, fitting,
//! compositing, texture recovery, synthetic corpora and image metrics.
//!
//! The crate is `no_std` and only needs `alloc`. The `parallel` feature pulls
//! in `std` and rayon; results are bit-identical with or without it.
#![no_std]
// NaN-rejecting `!(x > y)` tests and index loops over parallel arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod camera;
pub mod compositor;
pub mod diffrender;
pub mod error;
pub mod fitting;
pub mod image;
pub mod mesh;
pub mod optim;
pub mod metrics;
pub mod model;
pub mod raster;
pub mod shading;
pub mod synth;
pub mod template;
pub mod texrecover;

mod par;

/// Float methods for `no_std` builds; shadowed by the inherent ones under `std`.
mod float {
    #[allow(unused_imports)]
    pub(crate) use num_traits::Float;
}

pub use camera::{project, Camera, Projection, RigidPose};
pub use error::{Error, Result};
pub use image::{Image, Mask};
pub use mesh::{vertex_normals, Mesh, Vec3, VertexNormals};
pub use model::{build_from_samples, MorphableModel, SampleKind, ShapeCoeffs};
pub use raster::{rasterize, sample_texture, GBuffer, RasterOptions};
pub use shading::{illuminate, render_illuminated, sh_basis, Rendered, ShLighting};
pub use diffrender::{backward, photometric_loss, Gradients, Scene};
pub use fitting::FaceParams;
