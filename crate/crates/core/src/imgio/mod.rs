//! Frame and flow-field I/O: PNG/PPM rasters, Middlebury `.flo`, and
//! numbered frame sequences.

mod flo;
mod raster;
mod sequence;

pub use flo::{decode_flo, encode_flo, read_flo, write_flo, FLO_TAG};
pub use raster::{decode_frame, encode_png, load_frame, save_frame};
pub use sequence::{format_pattern, pattern_regex, FrameEntry, FrameSource};
