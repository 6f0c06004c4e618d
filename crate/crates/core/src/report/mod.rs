//! Artifact writers: CSV maps and summary tables, PPM raster maps with SVG
//! color bars, and SVG curve plots. All numbers use fixed decimal formatting.

mod csv;
mod plot;
mod render;

pub use csv::{map_from_csv, map_to_csv, read_map_csv, summary_to_csv, write_map_csv, SummaryRow, SUMMARY_HEADER};
pub use plot::{curves_svg, write_curves_svg, Series};
pub use render::{colorbar_svg, map_to_ppm, render_map, Palette, RenderOptions, RenderedMap, INVALID_COLOR};
