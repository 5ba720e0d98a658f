//! Real-valued patch sequences cut from complex channel matrices.

use ndarray::Array2;

use crate::EncoderError;
use ris_core::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSequence {
    /// P×L, one patch per row.
    pub patches: Array2<f64>,
    /// true = replaced by the mask embedding.
    pub mask: Vec<bool>,
}

impl PatchSequence {
    pub fn new(patches: Array2<f64>) -> Self {
        let p = patches.nrows();
        Self { patches, mask: vec![false; p] }
    }

    pub fn n_patches(&self) -> usize {
        self.patches.nrows()
    }

    pub fn patch_len(&self) -> usize {
        self.patches.ncols()
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Self {
        self.mask = mask;
        self
    }
}

/// Patch length for an X×Y complex matrix cut into `p` patches.
pub fn patch_length(x: usize, y: usize, p: usize) -> Result<usize, EncoderError> {
    let total = 2 * x * y;
    if p == 0 || !total.is_multiple_of(p) {
        return Err(EncoderError::Indivisible { total, patches: p });
    }
    Ok(total / p)
}

/// Row-major flattening with interleaved (Re, Im), split into `p` equal chunks.
pub fn patchify(h: &Array2<C64>, p: usize) -> Result<PatchSequence, EncoderError> {
    let (x, y) = h.dim();
    let l = patch_length(x, y, p)?;
    let flat: Vec<f64> = h.iter().flat_map(|z| [z.re, z.im]).collect();
    let patches = Array2::from_shape_vec((p, l), flat).expect("length checked");
    Ok(PatchSequence::new(patches))
}

/// Inverse of [`patchify`].
pub fn unpatchify(seq: &PatchSequence, x: usize, y: usize) -> Result<Array2<C64>, EncoderError> {
    let got = seq.patches.len();
    if got != 2 * x * y {
        return Err(EncoderError::Dimension { what: "patch element count", expected: 2 * x * y, got });
    }
    let vals: Vec<C64> = seq.patches.iter().copied().collect::<Vec<_>>().chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    Ok(Array2::from_shape_vec((x, y), vals).expect("length checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn four_by_four_into_eight() {
        assert_eq!(patch_length(4, 4, 8).unwrap(), 4);
        let h = Array2::from_elem((4, 4), C64::new(1.0, 2.0));
        let s = patchify(&h, 8).unwrap();
        assert_eq!(s.patches.dim(), (8, 4));
        assert_eq!(s.patches.row(0).to_vec(), vec![1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn scalar_splits_into_re_and_im() {
        let h = array![[C64::new(0.3, -0.7)]];
        let s = patchify(&h, 2).unwrap();
        assert_eq!(s.patches, array![[0.3], [-0.7]]);
    }

    #[test]
    fn ordering_is_row_major_interleaved() {
        let h = array![[C64::new(1.0, 2.0), C64::new(3.0, 4.0)], [C64::new(5.0, 6.0), C64::new(7.0, 8.0)]];
        let s = patchify(&h, 2).unwrap();
        assert_eq!(s.patches, array![[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]]);
    }

    #[test]
    fn indivisible_reports_divisor() {
        let h = Array2::from_elem((3, 3), C64::new(0.0, 0.0));
        match patchify(&h, 4) {
            Err(EncoderError::Indivisible { total, patches }) => assert_eq!((total, patches), (18, 4)),
            other => panic!("{other:?}"),
        }
        assert!(patchify(&h, 0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_lossless(x in 1usize..6, y in 1usize..6, seed in any::<u64>(), pick in 0usize..64) {
            let total = 2 * x * y;
            let divisors: Vec<usize> = (1..=total).filter(|d| total % d == 0).collect();
            let p = divisors[pick % divisors.len()];
            let mut s = seed;
            let h = Array2::from_shape_fn((x, y), |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                C64::new((s >> 11) as f64 / 2f64.powi(53) - 0.5, (s >> 13) as f64 / 2f64.powi(51) - 0.5)
            });
            let back = unpatchify(&patchify(&h, p).unwrap(), x, y).unwrap();
            prop_assert_eq!(back, h);
        }
    }
}
