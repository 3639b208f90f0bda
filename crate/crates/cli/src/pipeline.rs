//! Steps shared by the command line and the preview service, so both
//! produce the same bytes for the same inputs.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use motionflow::flow::{sequence_to_color, MaxMagnitude};
use motionflow::spectral::spectral_reweight;
use motionflow::{FlowSequence, Result, SpectralWeights, TokenSequence};

/// Reweights the `(u, v)` channels of every pixel along time.
pub fn stabilize(seq: &FlowSequence, weights: &SpectralWeights) -> Result<FlowSequence> {
    let tokens = TokenSequence::from_flow(seq)?;
    spectral_reweight(&tokens, weights)?.to_flow(seq)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn flow_pngs(seq: &FlowSequence, max: Option<f64>) -> Result<Vec<Vec<u8>>> {
    let max = max.map_or(MaxMagnitude::Auto, MaxMagnitude::Fixed);
    sequence_to_color(seq, max).iter().map(encode_png).collect()
}
