//! Classical image processing: median + CLAHE enhancement, block-average
//! rescaling, connected components, convex-hull filling, center of gravity,
//! ROI cropping and the boundary distance transform.

mod distance;
mod enhance;
mod image;
mod morphology;

pub use self::image::{BoundingBox, Image, Mask};
pub use distance::{boundary_distance_map, boundary_pixels, DistanceField};
pub use enhance::{clahe, clahe_tile_mappings, downscale, median_filter, ClaheParams};
pub use morphology::{
    center_of_gravity, connected_components, convex_hull, convex_hull_fill, crop_box, crop_image,
    crop_mask, crop_window, hull_contains, largest_component, round_center, BorderMode, Crop,
    Labeling,
};
