use ndarray::{Array2, Array3, ArrayView3};

use super::{Dataset, ResizeProvenance, Split};
use crate::error::{Error, Result};

/// Nearest-neighbor resampling of an `H × W × C` image to `H' × W' × C`.
///
/// Output pixel `(i, j)` copies source pixel `(⌊i·H/H'⌋, ⌊j·W/W'⌋)`; values
/// are moved, never combined.
pub fn nn_resize<T: Copy>(image: ArrayView3<T>, target: (usize, usize)) -> Result<Array3<T>> {
    let (h, w, c) = image.dim();
    let (th, tw) = target;
    if h == 0 || w == 0 || c == 0 || th == 0 || tw == 0 {
        return Err(Error::InvalidSpec(format!("resize dimensions must be positive: {h}x{w}x{c} -> {th}x{tw}")));
    }
    let rows: Vec<usize> = (0..th).map(|i| i * h / th).collect();
    let cols: Vec<usize> = (0..tw).map(|j| j * w / tw).collect();
    Ok(Array3::from_shape_fn((th, tw, c), |(i, j, k)| image[[rows[i], cols[j], k]]))
}

/// Resize every input row, read as a row-major `H × W × C` image.
pub fn resize_dataset(ds: &Dataset, source_shape: [usize; 3], target: (usize, usize)) -> Result<Dataset> {
    let [h, w, c] = source_shape;
    if h * w * c != ds.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "image shape {h}x{w}x{c} does not cover {} input features",
            ds.input_dim()
        )));
    }
    let resize_split = |split: &Split| -> Result<Split> {
        let n = split.len();
        let mut inputs = Array2::zeros((n, target.0 * target.1 * c));
        for (src, mut dst) in split.inputs.rows().into_iter().zip(inputs.rows_mut()) {
            let image = src.into_shape_with_order((h, w, c)).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            let resized = nn_resize(image, target)?;
            dst.iter_mut().zip(resized.iter()).for_each(|(d, &v)| *d = v);
        }
        Ok(Split { inputs, labels: split.labels.clone(), latents: split.latents.clone() })
    };
    let mut provenance = ds.provenance.clone();
    provenance.resized = Some(ResizeProvenance { source_shape, target_shape: [target.0, target.1, c] });
    Ok(Dataset { provenance, train: resize_split(&ds.train)?, test: resize_split(&ds.test)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn ramp(h: usize, w: usize, c: usize) -> Array3<u32> {
        Array3::from_shape_fn((h, w, c), |(i, j, k)| (i * 100 + j * 10 + k) as u32)
    }

    #[test]
    fn identity_when_sizes_match() {
        let img = ramp(5, 7, 3);
        assert_eq!(nn_resize(img.view(), (5, 7)).unwrap(), img);
    }

    #[test]
    fn doubling_duplicates_blocks() {
        let img = ramp(2, 2, 1);
        let up = nn_resize(img.view(), (4, 4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(up[[i, j, 0]], img[[i / 2, j / 2, 0]]);
            }
        }
    }

    #[test]
    fn three_to_two_picks_top_left_block() {
        // floor(i*3/2) for i in {0,1} -> {0,1}
        let img = ramp(3, 3, 1);
        let down = nn_resize(img.view(), (2, 2)).unwrap();
        assert_eq!(down.iter().copied().collect::<Vec<_>>(), vec![0, 10, 100, 110]);
    }

    #[test]
    fn zero_sizes_are_rejected() {
        let img = ramp(2, 2, 1);
        assert!(nn_resize(img.view(), (0, 2)).is_err());
    }
}
