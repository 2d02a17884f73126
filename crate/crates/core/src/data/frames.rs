//! Per-frame preprocessing.

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CROP_WIDTH: usize = 720;

/// Center crop of an `[H, W, C]` frame to `target` columns.
pub fn center_crop_width(frame: &Tensor<f32>, target: usize) -> Result<Tensor<f32>> {
    if frame.ndim() != 3 {
        return Err(Error::shape(format!(
            "frame must be [height, width, channels], got {:?}",
            frame.shape()
        )));
    }
    let [h, w, c] = [frame.shape()[0], frame.shape()[1], frame.shape()[2]];
    if w < target {
        return Err(Error::Crop { width: w, target });
    }
    let left = (w - target) / 2;
    let mut out = Vec::with_capacity(h * target * c);
    for row in frame.data().chunks_exact(w * c) {
        out.extend_from_slice(&row[left * c..(left + target) * c]);
    }
    Tensor::new(vec![h, target, c], out)
}

/// Crops a frame to 720 columns, keeping its height.
pub fn crop_frame(frame: &Tensor<f32>) -> Result<Tensor<f32>> {
    center_crop_width(frame, CROP_WIDTH)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_coded(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(&[h, w, 3], |i| ((i / 3) % w) as f32)
    }

    #[test]
    fn crops_840_to_columns_60_through_779() {
        let out = crop_frame(&column_coded(480, 840)).unwrap();
        assert_eq!(out.shape(), &[480, 720, 3]);
        assert_eq!(out.data()[0], 60.0);
        assert_eq!(out.data()[719 * 3], 779.0);
        assert_eq!(out.data()[out.numel() - 1], 779.0);
    }

    #[test]
    fn idempotent_at_720() {
        let f = column_coded(480, 720);
        let once = crop_frame(&f).unwrap();
        assert_eq!(once, f);
        assert_eq!(crop_frame(&once).unwrap(), once);
    }

    #[test]
    fn narrow_frame_is_an_error() {
        assert!(matches!(
            crop_frame(&column_coded(480, 600)),
            Err(Error::Crop { width: 600, target: 720 })
        ));
    }
}
