//! Synthetic shapes, point-cloud I/O, measurements and datasets.

mod cloud;
mod dataset;
mod generate;
mod measure;

pub use cloud::PointCloud;
pub use dataset::{
    generate_dataset, Dataset, DatasetConfig, DatasetManifest, ManifestEntry, Split, MANIFEST_FILE,
    MANIFEST_FORMAT,
};
pub use generate::{
    aspect_ratio, sample_bump_axes, sample_car_params, sample_semi_axes, AspectBounds, BumpSpec,
    CarParams, CarStyle, GeneratedShape, Proportions, ShapeGenerator, ShapeKind, ShapeRecipe,
    SurfaceTemplate, FIXED_BUMP_AXES, TEMPLATE_SEED,
};
pub use measure::{
    drag_proxy, drag_terms, fit_base_ellipsoid, fit_ellipsoid, measure_bump, DragTerms,
    FittedEllipsoid, DRAG_GRID,
};
