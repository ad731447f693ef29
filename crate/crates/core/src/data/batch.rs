use crate::data::{augment, AugmentationSpec, SampleView};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Stream};
use crate::Matrix;

/// One mini-batch: sample indices, their columns, and `count` augmented
/// copies laid out copy-major (column `c·B + i` augments sample `i`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub x: Matrix,
    pub x_aug: Matrix,
}

/// Epoch-wise sampling without replacement. Batch `t` is a pure function of
/// `(seed, t)`: epoch `e = t / (N / B)` shuffles with substream `e` and
/// augmentation for batch `t` draws from substream `t`, so iteration can be
/// resumed from any step. A trailing partial batch is dropped.
#[derive(Clone, Debug)]
pub struct BatchIter<'a> {
    view: SampleView<'a>,
    batch_size: usize,
    seed: u64,
    spec: AugmentationSpec,
    next: u64,
    cached_epoch: Option<(u64, Vec<usize>)>,
}

impl<'a> BatchIter<'a> {
    pub fn new(view: SampleView<'a>, batch_size: usize, seed: u64, spec: AugmentationSpec) -> Result<Self> {
        if batch_size == 0 || batch_size > view.len() {
            return Err(Error::InvalidConfig(format!(
                "batch size {batch_size} must lie in [1, {}]",
                view.len()
            )));
        }
        spec.validate(view.dim())?;
        Ok(Self {
            view,
            batch_size,
            seed,
            spec,
            next: 0,
            cached_epoch: None,
        })
    }

    pub fn batches_per_epoch(&self) -> u64 {
        (self.view.len() / self.batch_size) as u64
    }

    /// Positions the iterator so the next batch is batch `t`.
    pub fn seek(&mut self, t: u64) {
        self.next = t;
    }

    fn epoch_order(&mut self, epoch: u64) -> &[usize] {
        if self.cached_epoch.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let perm = Rng::stream(self.seed, Stream::Epoch, epoch).permutation(self.view.len());
            self.cached_epoch = Some((epoch, perm));
        }
        &self.cached_epoch.as_ref().expect("just filled").1
    }

    pub fn batch_at(&mut self, t: u64) -> Result<Batch> {
        let per_epoch = self.batches_per_epoch();
        let (epoch, pos) = (t / per_epoch, (t % per_epoch) as usize);
        let b = self.batch_size;
        let indices = self.epoch_order(epoch)[pos * b..(pos + 1) * b].to_vec();
        let x = self.view.matrix().select_cols(&indices);
        let mut rng = Rng::stream(self.seed, Stream::Augment, t);
        let mut x_aug = Matrix::zeros(self.view.dim(), b * self.spec.count);
        for c in 0..self.spec.count {
            for i in 0..b {
                let a = augment(&mut rng, &x.col(i), &self.spec, None)?;
                x_aug.set_col(c * b + i, &a);
            }
        }
        Ok(Batch { indices, x, x_aug })
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        let t = self.next;
        self.next += 1;
        Some(self.batch_at(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_subspace_mixture;

    #[test]
    fn full_batch_is_permutation() {
        let mut rng = Rng::new(1);
        let (data, _) = gen_subspace_mixture(&mut rng, 6, 2, 1, 10, 0.01).unwrap();
        let mut it = BatchIter::new(data.samples(), 20, 7, AugmentationSpec::synthetic_default()).unwrap();
        let b = it.next().unwrap().unwrap();
        let mut idx = b.indices.clone();
        idx.sort();
        assert_eq!(idx, (0..20).collect::<Vec<_>>());
        assert_eq!(b.x_aug.shape(), (6, 20));
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut rng = Rng::new(2);
        let (data, _) = gen_subspace_mixture(&mut rng, 6, 2, 1, 10, 0.01).unwrap();
        let spec = AugmentationSpec::synthetic_default();
        let a: Vec<Batch> = BatchIter::new(data.samples(), 6, 3, spec.clone())
            .unwrap()
            .take(9)
            .map(|b| b.unwrap())
            .collect();
        let b: Vec<Batch> = BatchIter::new(data.samples(), 6, 3, spec.clone())
            .unwrap()
            .take(9)
            .map(|b| b.unwrap())
            .collect();
        assert_eq!(a, b);
        let mut resumed = BatchIter::new(data.samples(), 6, 3, spec).unwrap();
        resumed.seek(5);
        assert_eq!(resumed.next().unwrap().unwrap(), a[5]);
    }

    #[test]
    fn index_frequencies_are_uniform() {
        let mut rng = Rng::new(3);
        let (data, _) = gen_subspace_mixture(&mut rng, 4, 2, 1, 25, 0.01).unwrap();
        let spec = AugmentationSpec {
            ops: vec![],
            count: 1,
            renormalize: false,
        };
        // N = 50, B = 7: 7 batches per epoch, one index in eight left out.
        let mut it = BatchIter::new(data.samples(), 7, 9, spec).unwrap();
        let mut counts = [0usize; 50];
        let batches = 7 * 400;
        for _ in 0..batches {
            for i in it.next().unwrap().unwrap().indices {
                counts[i] += 1;
            }
        }
        let p: f64 = 49.0 / 50.0;
        let mean = 400.0 * p;
        let sd = (400.0 * p * (1.0 - p)).sqrt();
        for &c in &counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd + 1.0, "{c} vs {mean} ± {sd}");
        }
    }

    #[test]
    fn batch_size_bounds() {
        let mut rng = Rng::new(4);
        let (data, _) = gen_subspace_mixture(&mut rng, 4, 2, 1, 3, 0.0).unwrap();
        let spec = AugmentationSpec::synthetic_default();
        assert!(BatchIter::new(data.samples(), 7, 0, spec.clone()).is_err());
        assert!(BatchIter::new(data.samples(), 0, 0, spec).is_err());
    }
}
