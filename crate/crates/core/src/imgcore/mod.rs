//! Raster types and the image-processing primitives every renderer shares.

mod defocus;
mod filter;
#[cfg(feature = "io")]
mod io;
mod resample;
mod types;

pub use defocus::{normalize_disparity, signed_defocus};
pub use filter::{dilate, erode, gamma_decode, gamma_encode, gaussian_blur};
#[cfg(feature = "io")]
pub use io::{
    decode_disparity, decode_png, encode_gray_png, encode_png, encode_png16, load_disparity, load_image,
    load_pfm, read_pfm, save_disparity, save_image, save_image16,
    save_pfm, write_pfm,
};
pub use resample::{resize_bilinear, resize_image_bilinear};
pub use types::{ApertureSpec, DisparityMap, ImageBuffer, Plane, RenderParams, SignedDefocusMap};
