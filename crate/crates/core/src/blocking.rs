//! Blocking: consecutive partitions of `[n]` into `2m` blocks, odd/even
//! unions, block sums, and blockwise-decoupled resampling.
//!
//! Blocks are numbered `a_1..a_{2m}` (1-based in the docs, 0-based in code).
//! The odd union `O` is `a_1 ∪ a_3 ∪ ...`, the even union `E` is
//! `a_2 ∪ a_4 ∪ ...`.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::mixing::MixingProfile;
use crate::process::{ProcessSpec, Trajectory};
use crate::rng;

/// Monotone consecutive partition of `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    n: usize,
    lengths: Vec<usize>,
    starts: Vec<usize>,
}

/// Near-uniform partition into `2m` blocks; the `n mod 2m` longer blocks come first.
pub fn make_partition(n: usize, m: usize) -> Result<BlockPartition> {
    if m == 0 || 2 * m > n {
        return invalid(format!("need 1 <= 2m <= n, got n = {n}, m = {m}"));
    }
    let blocks = 2 * m;
    let base = n / blocks;
    let rem = n % blocks;
    let lengths = (0..blocks).map(|i| base + usize::from(i < rem)).collect();
    BlockPartition::from_lengths(lengths)
}

impl BlockPartition {
    /// Partition with explicit block lengths; there must be an even number of
    /// non-empty blocks.
    pub fn from_lengths(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() % 2 != 0 {
            return invalid(format!("need an even, non-zero number of blocks, got {}", lengths.len()));
        }
        if lengths.contains(&0) {
            return invalid("blocks must be non-empty");
        }
        let mut starts = Vec::with_capacity(lengths.len());
        let mut acc = 0;
        for l in &lengths {
            starts.push(acc);
            acc += l;
        }
        Ok(BlockPartition { n: acc, lengths, starts })
    }

    /// `n / (2 tau)` pairs of blocks of length `tau`; requires `2 tau | n`.
    pub fn uniform(n: usize, tau: usize) -> Result<Self> {
        if tau == 0 || n == 0 || n % (2 * tau) != 0 {
            return invalid(format!("2·tau must divide n (n = {n}, tau = {tau})"));
        }
        BlockPartition::from_lengths(vec![tau; n / tau])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.lengths.len() / 2
    }

    pub fn num_blocks(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.starts[i]..self.starts[i] + self.lengths[i]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.num_blocks()).map(|i| self.range(i))
    }

    pub fn a_max(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn a_min(&self) -> usize {
        self.lengths.iter().copied().min().unwrap_or(0)
    }

    /// Whether 0-based block `i` belongs to the odd union (`a_1, a_3, ...`).
    pub fn is_odd_block(i: usize) -> bool {
        i % 2 == 0
    }

    /// Block index containing sample `j`.
    pub fn block_of(&self, j: usize) -> Option<usize> {
        if j >= self.n {
            return None;
        }
        Some(self.starts.partition_point(|&s| s <= j) - 1)
    }

    pub fn odd_union(&self) -> Vec<usize> {
        self.union(true)
    }

    pub fn even_union(&self) -> Vec<usize> {
        self.union(false)
    }

    fn union(&self, odd: bool) -> Vec<usize> {
        (0..self.num_blocks())
            .filter(|i| Self::is_odd_block(*i) == odd)
            .flat_map(|i| self.range(i))
            .collect()
    }

    pub fn odd_len(&self) -> usize {
        self.lengths.iter().step_by(2).sum()
    }

    pub fn even_len(&self) -> usize {
        self.lengths.iter().skip(1).step_by(2).sum()
    }
}

/// Entry `i` is `Σ_{j ∈ a_i} values_j`.
pub fn block_sums(values: &[Vec<f64>], partition: &BlockPartition) -> Result<Vec<Vec<f64>>> {
    if values.len() != partition.n() {
        return invalid(format!("{} values for a partition of {}", values.len(), partition.n()));
    }
    let dim = values.first().map_or(0, Vec::len);
    if values.iter().any(|v| v.len() != dim) {
        return invalid("values have inconsistent dimensions");
    }
    Ok(partition
        .ranges()
        .map(|r| {
            let mut acc = vec![0.0; dim];
            for v in &values[r] {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect())
}

/// Failure-probability budget of replacing the process by its decoupled
/// version: `Σ_{i=2}^{2m-1} β(|a_i|)`, or `Σ_{i=1}^{2m} β(|a_i|)` with
/// `all_blocks` (the form used for norms of random walks).
pub fn decoupling_gap_bound(profile: &MixingProfile, partition: &BlockPartition, all_blocks: bool) -> Result<f64> {
    if all_blocks {
        Ok(profile.betas(partition.lengths())?.iter().sum())
    } else {
        crate::mixing::mixing_sum(profile, partition)
    }
}

/// Draws each block independently from its exact marginal law.
///
/// For AR the state covariance at each block start is precomputed in one
/// pass of the covariance recursion, so repeated draws cost `O(n)` each.
#[derive(Clone, Debug)]
pub struct DecoupledSampler {
    spec: ProcessSpec,
    partition: BlockPartition,
    ar_covs: Option<Vec<DMatrix<f64>>>,
}

impl DecoupledSampler {
    pub fn new(spec: &ProcessSpec, partition: &BlockPartition) -> Result<Self> {
        spec.validate()?;
        let ar_covs = match spec {
            ProcessSpec::GaussianAr(s) => {
                let mut rec = s.covariance_recursion();
                let mut covs = Vec::with_capacity(partition.num_blocks());
                if s.is_stationary() {
                    let stat = s.stationary_augmented_covariance()?;
                    covs.resize(partition.num_blocks(), stat);
                } else {
                    for r in partition.ranges() {
                        rec.advance_to((s.discard() + r.start) as i64);
                        covs.push(rec.current().clone());
                    }
                }
                Some(covs)
            }
            _ => None,
        };
        Ok(DecoupledSampler { spec: spec.clone(), partition: partition.clone(), ar_covs })
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    /// Streams one decoupled trajectory as `f(block, x, y)`. Block `i` uses
    /// generator stream `i` of `seed`.
    pub fn stream<F: FnMut(usize, &[f64], &[f64])>(&self, seed: u64, mut f: F) -> Result<()> {
        for (i, r) in self.partition.ranges().enumerate() {
            let mut g = rng::stream(seed, i as u64);
            let cov = self.ar_covs.as_ref().map(|c| &c[i]);
            self.spec.stream_segment(r.start, r.len(), cov, &mut g, |x, y| f(i, x, y))?;
        }
        Ok(())
    }

    pub fn sample(&self, seed: u64) -> Result<Trajectory> {
        let dx = self.spec.x_dim();
        let dy = self.spec.y_dim();
        let mut xs = Vec::with_capacity(self.partition.n() * dx);
        let mut ys = Vec::with_capacity(self.partition.n() * dy);
        self.stream(seed, |_, x, y| {
            xs.extend_from_slice(x);
            ys.extend_from_slice(y);
        })?;
        Ok(Trajectory { x_dim: dx, y_dim: dy, xs, ys, seed, spec_id: self.spec.id() })
    }
}

/// One decoupled trajectory: blocks `a_i` drawn independently from the law of `Z_{a_i}`.
pub fn decoupled_resample(spec: &ProcessSpec, partition: &BlockPartition, seed: u64) -> Result<Trajectory> {
    DecoupledSampler::new(spec, partition)?.sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{ArSpec, GaussianLinear, MarkovSpec, WarmStart};

    #[test]
    fn partition_examples() {
        let p = make_partition(10, 2).unwrap();
        assert_eq!(p.lengths(), &[3, 3, 2, 2]);
        assert_eq!(p.odd_union(), vec![0, 1, 2, 6, 7]);
        assert_eq!(p.even_union(), vec![3, 4, 5, 8, 9]);
        assert_eq!(make_partition(8, 2).unwrap().lengths(), &[2, 2, 2, 2]);
        assert_eq!(make_partition(5, 1).unwrap().lengths(), &[3, 2]);
        assert!(make_partition(3, 2).is_err());
        assert!(make_partition(3, 0).is_err());
        assert_eq!(p.block_of(5), Some(1));
        assert_eq!(p.block_of(6), Some(2));
        assert_eq!(p.block_of(10), None);
    }

    #[test]
    fn block_sum_examples() {
        let p = make_partition(10, 2).unwrap();
        let ones = vec![vec![1.0]; 10];
        assert_eq!(block_sums(&ones, &p).unwrap(), vec![vec![3.0], vec![3.0], vec![2.0], vec![2.0]]);
        let ind: Vec<Vec<f64>> = (0..10).map(|j| (0..10).map(|k| f64::from(u8::from(j == k))).collect()).collect();
        let sums = block_sums(&ind, &p).unwrap();
        for j in 0..10 {
            let owner = sums.iter().position(|s| s[j] == 1.0).unwrap();
            assert_eq!(Some(owner), p.block_of(j));
        }
        assert!(block_sums(&ones[..9], &p).is_err());
    }

    #[test]
    fn gap_bound_examples() {
        let p = BlockPartition::uniform(8, 2).unwrap();
        let flip = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.7]);
        let prof = crate::mixing::markov_profile(&flip, &[0.5, 0.5], 4).unwrap();
        assert!((decoupling_gap_bound(&prof, &p, false).unwrap() - 0.16).abs() < 1e-15);
        assert!((decoupling_gap_bound(&prof, &p, true).unwrap() - 0.32).abs() < 1e-15);
        assert_eq!(decoupling_gap_bound(&MixingProfile::iid(), &p, true).unwrap(), 0.0);
    }

    #[test]
    fn uniform_needs_divisibility() {
        assert!(BlockPartition::uniform(10, 2).is_err());
        assert_eq!(BlockPartition::uniform(12, 3).unwrap().m(), 2);
    }

    #[test]
    fn decoupled_has_right_shape_and_is_reproducible() {
        let specs = vec![
            ProcessSpec::GaussianAr(ArSpec::new(vec![0.5, 0.2], 1.0, 2).unwrap().with_warm_start(WarmStart::Steps(0))),
            ProcessSpec::FiniteMarkov(MarkovSpec::symmetric_flip(0.3).unwrap()),
            ProcessSpec::IidGaussian(GaussianLinear::new(2, 1, None, 1.0).unwrap()),
        ];
        let p = make_partition(13, 2).unwrap();
        for spec in specs {
            let a = decoupled_resample(&spec, &p, 5).unwrap();
            assert_eq!(a.len(), 13);
            assert_eq!(a, decoupled_resample(&spec, &p, 5).unwrap());
        }
    }

    #[test]
    fn decoupled_block_constant_aligned_blocks_are_constant() {
        let spec = ProcessSpec::BlockConstant(crate::process::BlockConstantSpec {
            block_len: 4,
            law: GaussianLinear::new(1, 1, None, 1.0).unwrap(),
        });
        let p = BlockPartition::uniform(16, 4).unwrap();
        let t = decoupled_resample(&spec, &p, 1).unwrap();
        for r in p.ranges() {
            assert!(r.clone().all(|j| t.x(j) == t.x(r.start)));
        }
        assert_ne!(t.x(0), t.x(4));
    }
}
