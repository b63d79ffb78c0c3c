//! Deterministic cross-view geometry engine.
//!
//! Projects overhead (parallel-projection) satellite imagery into
//! street-level equirectangular panoramas. A height distribution over the
//! satellite raster becomes a stack of semi-transparent planes; projecting
//! that stack into concentric cylinders (or horizontal planes) around the
//! street camera and alpha-compositing far to near yields an
//! occlusion-aware panorama. The crate also ships flat baselines
//! (ground-plane and polar), a grid-search alignment between the two views,
//! image similarity metrics, and brute-force reference renderers used to
//! test everything else.
//!
//! Geometry primitives are generic over the scalar type ([`scalar::Real`],
//! implemented for `f32` and `f64`); the image pipeline stores `f32`
//! samples and runs its accumulations in `f64`. The type aliases at the
//! crate root fix the scalar to `f64`, which is what the rest of the crate
//! uses.

pub mod align;
pub mod geometry;
pub mod metrics;
pub mod mpi;
pub mod oracle;
pub mod project;
pub mod raster;
pub mod scalar;
pub mod volume;

/// Satellite camera with the default `f64` scalar.
pub type SatelliteCamera = geometry::SatelliteCamera<f64>;
/// Panorama geometry with the default `f64` scalar.
pub type PanoramaGeometry = geometry::PanoramaGeometry<f64>;
/// World-space point with the default `f64` scalar.
pub type WorldPoint = geometry::WorldPoint<f64>;
/// Viewing direction with the default `f64` scalar.
pub type SphericalCoord = geometry::SphericalCoord<f64>;

pub use align::{align_pair, AlignError, AlignmentResult, ShiftGrid};
pub use geometry::GeometryError;
pub use metrics::{evaluate, psnr, rmse, sharpness_difference, ssim, MetricReport, MetricsError};
pub use mpi::{
    build_satellite_mpi, composite, composite_ordered, composite_ordered_with_coverage,
    composite_with_coverage, CompositeOutput, MpiError, OrderedPlaneStack, SatelliteMpi,
    StreetMpi,
};
pub use project::{
    cylinder_radii, ground_plane_project, polar_transform, project_depthwise,
    project_heightwise, street_to_satellite_ground,
};
pub use raster::{
    load_height_png, load_png, save_png, save_png16, ImageBuffer, Mask, MaskedImage,
    RasterError,
};
pub use scalar::{wrap_angle, Real};
pub use volume::{
    heightmap_to_distribution, uniform_plane_heights, HeightProbabilityVolume, VolumeError,
};
