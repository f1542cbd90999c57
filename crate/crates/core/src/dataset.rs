//! Labeled train/test sequence sets, per-dimension normalization and the
//! synthetic classification tasks.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::rng::{self, Purpose};
use crate::sequence::Sequence;
use crate::{Error, Result};

/// Per-dimension affine normalization `x ↦ (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl NormStats {
    /// Mean and population standard deviation of the pooled observations;
    /// constant dimensions get scale 1.
    pub fn fit(seqs: &[Sequence]) -> Result<Self> {
        let d = seqs.first().ok_or_else(|| invalid("no sequences to fit"))?.dim();
        let mut n = 0usize;
        let mut mean = alloc::vec![0.0; d];
        for s in seqs {
            for i in 0..s.len() {
                n += 1;
                for (m, x) in mean.iter_mut().zip(s.point(i)) {
                    *m += x;
                }
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = alloc::vec![0.0; d];
        for s in seqs {
            for i in 0..s.len() {
                for ((v, x), m) in var.iter_mut().zip(s.point(i)).zip(&mean) {
                    *v += (x - m) * (x - m);
                }
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = libm::sqrt(v / n as f64);
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, seq: &Sequence) -> Result<Sequence> {
        let d = self.mean.len();
        let values = seq
            .values()
            .iter()
            .enumerate()
            .map(|(i, x)| (x - self.mean[i % d]) / self.scale[i % d])
            .collect();
        seq.with_values(values)
    }
}

/// Train and test sequences with labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
    pub num_classes: usize,
    pub dim: usize,
    /// Set once [`Dataset::normalize`] has been applied.
    pub stats: Option<NormStats>,
}

impl Dataset {
    /// Validates labels and dimensions; the class count is one more than the
    /// largest label.
    pub fn new(train: Vec<Sequence>, test: Vec<Sequence>) -> Result<Self> {
        let dim = train
            .first()
            .ok_or_else(|| invalid("training split is empty"))?
            .dim();
        let mut max_label = 0;
        for (split, seqs) in [("train", &train), ("test", &test)] {
            for (i, s) in seqs.iter().enumerate() {
                if s.dim() != dim {
                    return Err(invalid(format!(
                        "{split} sequence {i} has dimension {}, expected {dim}",
                        s.dim()
                    )));
                }
                let y = s
                    .label()
                    .ok_or_else(|| invalid(format!("{split} sequence {i} has no label")))?;
                max_label = max_label.max(y);
            }
        }
        Ok(Self {
            train,
            test,
            num_classes: max_label + 1,
            dim,
            stats: None,
        })
    }

    pub fn train_labels(&self) -> Vec<usize> {
        self.train.iter().filter_map(Sequence::label).collect()
    }

    pub fn test_labels(&self) -> Vec<usize> {
        self.test.iter().filter_map(Sequence::label).collect()
    }

    /// Fits [`NormStats`] on the training observations and applies them to
    /// both splits.
    pub fn normalize(self) -> Result<Self> {
        let stats = NormStats::fit(&self.train)?;
        self.normalize_with(stats)
    }

    pub fn normalize_with(self, stats: NormStats) -> Result<Self> {
        let apply = |seqs: Vec<Sequence>| -> Result<Vec<Sequence>> {
            seqs.iter().map(|s| stats.apply(s)).collect()
        };
        Ok(Self {
            train: apply(self.train)?,
            test: apply(self.test)?,
            num_classes: self.num_classes,
            dim: self.dim,
            stats: Some(stats),
        })
    }

    /// Every sequence with its observations sorted lexicographically by value
    /// (timestamps kept), which destroys all ordering information.
    pub fn sorted_values(&self) -> Result<Self> {
        let sort = |seqs: &[Sequence]| -> Result<Vec<Sequence>> {
            seqs.iter().map(sorted_values).collect()
        };
        Ok(Self {
            train: sort(&self.train)?,
            test: sort(&self.test)?,
            num_classes: self.num_classes,
            dim: self.dim,
            stats: self.stats.clone(),
        })
    }
}

/// Observations of `seq` sorted lexicographically by value.
pub fn sorted_values(seq: &Sequence) -> Result<Sequence> {
    let mut idx: Vec<usize> = (0..seq.len()).collect();
    idx.sort_by(|&a, &b| {
        seq.point(a)
            .iter()
            .zip(seq.point(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let values = idx.iter().flat_map(|&i| seq.point(i).iter().copied()).collect();
    seq.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Two classes of noisy random walks drifting along `+v` or `−v`, `d = 2`.
    Drift2,
    /// Noisy `sin` versus `cos` on random time grids, `d = 1`.
    Phase2,
    /// Three classes that contain the same three value blocks in different
    /// orders, `d = 2`.
    Order3,
}

impl SyntheticKind {
    pub fn num_classes(self) -> usize {
        match self {
            SyntheticKind::Order3 => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::Drift2 => "drift2",
            SyntheticKind::Phase2 => "phase2",
            SyntheticKind::Order3 => "order3",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drift2" => Ok(SyntheticKind::Drift2),
            "phase2" => Ok(SyntheticKind::Phase2),
            "order3" => Ok(SyntheticKind::Order3),
            other => Err(invalid(format!("unknown synthetic dataset {other:?}"))),
        }
    }
}

pub const MIN_SYNTHETIC_LEN: usize = 10;
pub const MAX_SYNTHETIC_LEN: usize = 30;

/// `n` training and `n` test sequences of the given kind with class labels
/// assigned round-robin, so classes are balanced whenever `C` divides `n`.
pub fn make_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    if n < kind.num_classes() {
        return Err(invalid(format!("need at least {} sequences", kind.num_classes())));
    }
    let split = |index: u64| -> Result<Vec<Sequence>> {
        let mut rng = rng::stream(seed, Purpose::Synthetic, index);
        match kind {
            SyntheticKind::Drift2 => (0..n).map(|i| drift2(&mut rng, i % 2)).collect(),
            SyntheticKind::Phase2 => (0..n).map(|i| phase2(&mut rng, i % 2)).collect(),
            SyntheticKind::Order3 => order3(&mut rng, n),
        }
    };
    Dataset::new(split(0)?, split(1)?)
}

fn random_len<R: Rng>(rng: &mut R) -> usize {
    rng.gen_range(MIN_SYNTHETIC_LEN..=MAX_SYNTHETIC_LEN)
}

fn drift2<R: Rng>(rng: &mut R, label: usize) -> Result<Sequence> {
    const DRIFT: [f64; 2] = [0.5, 0.3];
    const NOISE: f64 = 0.4;
    let sign = if label == 0 { 1.0 } else { -1.0 };
    let len = random_len(rng);
    let mut x = [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
    let mut values = Vec::with_capacity(len);
    for _ in 0..len {
        values.push(x.to_vec());
        for (xi, v) in x.iter_mut().zip(DRIFT) {
            *xi += sign * v + NOISE * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Sequence::on_grid(values, Some(label))
}

fn phase2<R: Rng>(rng: &mut R, label: usize) -> Result<Sequence> {
    const NOISE: f64 = 0.1;
    let len = random_len(rng);
    let mut times: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..core::f64::consts::TAU)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let amp = rng.gen_range(0.8..1.2);
    let noise = Normal::new(0.0, NOISE).expect("valid noise level");
    let values = times
        .iter()
        .map(|&t| {
            let clean = if label == 0 { libm::sin(t) } else { libm::cos(t) };
            alloc::vec![amp * clean + noise.sample(rng)]
        })
        .collect();
    Sequence::new(times, values, Some(label))
}

/// Value blocks whose visiting order defines the class.
const ORDER3_BLOCKS: [[f64; 2]; 3] = [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
/// Block order of each class: ABC, CBA, ACB.
const ORDER3_CLASSES: [[usize; 3]; 3] = [[0, 1, 2], [2, 1, 0], [0, 2, 1]];

/// Sequences come in triples built from one noisy template: a baseline run,
/// the three block runs and a closing baseline run, with the blocks visited in
/// the order of each class. The unordered multiset of observations is
/// therefore identical within a triple. Since every path starts and ends at the
/// baseline, the classes differ only from the second signature level on (the
/// enclosed signed area is `+1`, `−1` and `0`).
fn order3<R: Rng>(rng: &mut R, n: usize) -> Result<Vec<Sequence>> {
    const NOISE: f64 = 0.05;
    let noise = Normal::new(0.0, NOISE).expect("valid noise level");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let point = |base: [f64; 2], rng: &mut R| -> Vec<f64> {
            base.iter().map(|b| b + noise.sample(rng)).collect()
        };
        let run = |base: [f64; 2], rng: &mut R| -> Vec<Vec<f64>> {
            let len = rng.gen_range(2..=6);
            (0..len).map(|_| point(base, rng)).collect()
        };
        let head = run([0.0, 0.0], rng);
        let blocks: Vec<Vec<Vec<f64>>> = ORDER3_BLOCKS.iter().map(|&b| run(b, rng)).collect();
        let tail = run([0.0, 0.0], rng);
        for (label, order) in ORDER3_CLASSES.iter().enumerate() {
            if out.len() == n {
                break;
            }
            let mut values = head.clone();
            for &b in order {
                values.extend(blocks[b].iter().cloned());
            }
            values.extend(tail.iter().cloned());
            out.push(Sequence::on_grid(values, Some(label))?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_sets_are_balanced_and_in_range() {
        for (kind, n) in [
            (SyntheticKind::Drift2, 200),
            (SyntheticKind::Phase2, 40),
            (SyntheticKind::Order3, 60),
        ] {
            let ds = make_synthetic(kind, n, 3).unwrap();
            assert_eq!(ds.train.len(), n);
            assert_eq!(ds.test.len(), n);
            assert_eq!(ds.num_classes, kind.num_classes());
            let labels = ds.train_labels();
            for c in 0..ds.num_classes {
                assert_eq!(labels.iter().filter(|&&y| y == c).count(), n / ds.num_classes);
            }
            for s in ds.train.iter().chain(&ds.test) {
                assert!(s.len() >= MIN_SYNTHETIC_LEN && s.len() <= MAX_SYNTHETIC_LEN, "{}", s.len());
            }
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(SyntheticKind::Order3, 30, 11).unwrap();
        let b = make_synthetic(SyntheticKind::Order3, 30, 11).unwrap();
        let c = make_synthetic(SyntheticKind::Order3, 30, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn order3_triples_share_value_multisets() {
        let ds = make_synthetic(SyntheticKind::Order3, 30, 5).unwrap();
        for triple in ds.train.chunks(3) {
            let sorted: Vec<Sequence> = triple.iter().map(|s| sorted_values(s).unwrap()).collect();
            assert_eq!(sorted[0].values(), sorted[1].values());
            assert_eq!(sorted[0].values(), sorted[2].values());
            assert_ne!(triple[0].values(), triple[1].values());
        }
    }

    #[test]
    fn normalization_uses_training_stats() {
        let ds = make_synthetic(SyntheticKind::Drift2, 20, 1).unwrap();
        let norm = ds.clone().normalize().unwrap();
        let refit = NormStats::fit(&norm.train).unwrap();
        for (m, s) in refit.mean.iter().zip(&refit.scale) {
            assert!(m.abs() < 1e-10);
            assert!((s - 1.0).abs() < 1e-10);
        }
        let stats = norm.stats.as_ref().unwrap();
        assert_eq!(norm.test[0], stats.apply(&ds.test[0]).unwrap());
    }

    #[test]
    fn constant_dimension_is_centered_only() {
        let s = Sequence::on_grid(alloc::vec![alloc::vec![2.0, 1.0], alloc::vec![2.0, 3.0]], Some(0)).unwrap();
        let stats = NormStats::fit(core::slice::from_ref(&s)).unwrap();
        assert_eq!(stats.scale[0], 1.0);
        assert_eq!(stats.apply(&s).unwrap().point(1), &[0.0, 1.0]);
    }
}
