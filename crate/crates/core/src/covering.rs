//! delta-covering numbers of finite point clouds.
//!
//! For `Q_p` a ball of radius `p^{-k}` is a coset of `p^k Z_p`, so counting
//! distinct residues mod `p^k` is the covering number exactly. For the reals
//! we count occupied cells of the axis-aligned grid of side `delta`, which is
//! within a factor `2^n` of the minimal covering.
//!
//! Cell keys are exact integer tuples. Small key boxes are counted in a dense
//! bitmap, larger ones in a hash set of packed keys; neither is probabilistic.

use rayon::prelude::*;
use rustc_hash::FxHashSet;

use crate::localfield::{LocalField, Scale};

/// A finite list of points of `F^n`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud<F: LocalField> {
    pub field: F,
    pub dim: usize,
    pub data: Vec<F::Elem>,
}

impl<F: LocalField> PointCloud<F> {
    pub fn new(field: F, dim: usize) -> Self {
        PointCloud { field, dim, data: Vec::new() }
    }

    pub fn from_points(field: F, dim: usize, points: impl IntoIterator<Item = Vec<F::Elem>>) -> Self {
        let mut cloud = Self::new(field, dim);
        for p in points {
            cloud.push(&p);
        }
        cloud
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, p: &[F::Elem]) {
        assert_eq!(p.len(), self.dim, "point dimension");
        self.data.extend_from_slice(p);
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[F::Elem] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[F::Elem]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Sub-cloud of the points with the given indices.
    pub fn select(&self, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut out = Self::new(self.field, self.dim);
        for i in idx {
            out.data.extend_from_slice(self.point(i));
        }
        out
    }

    /// Image under a coordinate map `F^n -> F^dim`.
    pub fn map(&self, dim: usize, mut f: impl FnMut(&[F::Elem], &mut [F::Elem])) -> Self {
        let mut out = Self::new(self.field, dim);
        out.data = vec![self.field.zero(); dim * self.len()];
        for (src, dst) in self.points().zip(out.data.chunks_exact_mut(dim.max(1))) {
            f(src, dst);
        }
        out
    }
}

/// Counters exposed for performance work.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CoverStats {
    pub cells_touched: u64,
    pub peak_set_size: usize,
    pub dense: bool,
}

/// Largest key box counted with a dense bitmap (bits).
const DENSE_LIMIT: u128 = 1 << 31;

enum Store {
    Dense { bits: Vec<u64>, strides: Vec<u64> },
    Packed { set: FxHashSet<u128>, shifts: Vec<u32> },
    Boxed(FxHashSet<Box<[i64]>>),
}

/// A set of integer cell keys confined to a known bounding box.
pub struct CellSet {
    lo: Vec<i64>,
    len: usize,
    touched: u64,
    store: Store,
}

impl CellSet {
    /// `lo`/`hi` are inclusive per-coordinate key bounds.
    pub fn with_bounds(lo: &[i64], hi: &[i64]) -> Self {
        let extents = Self::extents(lo, hi);
        let volume = extents.iter().try_fold(1u128, |acc, &e| acc.checked_mul(e));
        let store = match volume {
            Some(v) if v <= DENSE_LIMIT => {
                let mut strides = Vec::with_capacity(extents.len());
                let mut s = 1u64;
                for &e in &extents {
                    strides.push(s);
                    s *= e as u64;
                }
                Store::Dense { bits: vec![0; (v as usize).div_ceil(64)], strides }
            }
            _ => {
                let widths: Vec<u32> = extents.iter().map(|&e| 128 - (e - 1).leading_zeros()).collect();
                if widths.iter().sum::<u32>() <= 128 {
                    let mut shifts = Vec::with_capacity(widths.len());
                    let mut acc = 0;
                    for w in widths {
                        shifts.push(acc);
                        acc += w;
                    }
                    Store::Packed { set: FxHashSet::default(), shifts }
                } else {
                    Store::Boxed(FxHashSet::default())
                }
            }
        };
        CellSet { lo: lo.to_vec(), len: 0, touched: 0, store }
    }

    fn extents(lo: &[i64], hi: &[i64]) -> Vec<u128> {
        lo.iter().zip(hi).map(|(&l, &h)| (h - l + 1).max(1) as u128).collect()
    }

    /// Whether a set with these bounds uses the dense bitmap.
    pub fn dense_for(lo: &[i64], hi: &[i64]) -> bool {
        Self::extents(lo, hi).iter().try_fold(1u128, |acc, &e| acc.checked_mul(e)).is_some_and(|v| v <= DENSE_LIMIT)
    }

    #[inline]
    pub fn insert(&mut self, key: &[i64]) -> bool {
        self.touched += 1;
        let fresh = match &mut self.store {
            Store::Dense { bits, strides } => {
                let mut idx = 0u64;
                for ((&k, &l), &s) in key.iter().zip(&self.lo).zip(strides.iter()) {
                    idx += (k - l) as u64 * s;
                }
                let (w, b) = ((idx / 64) as usize, idx % 64);
                let fresh = bits[w] & (1 << b) == 0;
                bits[w] |= 1 << b;
                fresh
            }
            Store::Packed { set, shifts } => {
                let mut packed = 0u128;
                for ((&k, &l), &s) in key.iter().zip(&self.lo).zip(shifts.iter()) {
                    packed |= ((k - l) as u128) << s;
                }
                set.insert(packed)
            }
            Store::Boxed(set) => {
                if set.contains(key) {
                    false
                } else {
                    set.insert(key.into())
                }
            }
        };
        if fresh {
            self.len += 1;
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.store, Store::Dense { .. })
    }

    /// Union of two sets built with identical bounds.
    pub fn merge(&mut self, other: CellSet) {
        self.touched += other.touched;
        match (&mut self.store, other.store) {
            (Store::Dense { bits, .. }, Store::Dense { bits: ob, .. }) => {
                for (a, b) in bits.iter_mut().zip(ob) {
                    *a |= b;
                }
                self.len = bits.iter().map(|w| w.count_ones() as usize).sum();
            }
            (Store::Packed { set, .. }, Store::Packed { set: os, .. }) => {
                set.extend(os);
                self.len = set.len();
            }
            (Store::Boxed(set), Store::Boxed(os)) => {
                set.extend(os);
                self.len = set.len();
            }
            _ => unreachable!("merged cell sets must share bounds"),
        }
    }

    pub fn stats(&self) -> CoverStats {
        CoverStats { cells_touched: self.touched, peak_set_size: self.len, dense: self.is_dense() }
    }
}

/// Counts distinct keys emitted by `emit`, which is called twice: once to
/// find the key bounding box and once to insert.
pub fn count_distinct_keys(dim: usize, mut emit: impl FnMut(&mut dyn FnMut(&[i64]))) -> (usize, CoverStats) {
    let mut lo = vec![i64::MAX; dim];
    let mut hi = vec![i64::MIN; dim];
    let mut any = false;
    emit(&mut |key: &[i64]| {
        any = true;
        for ((l, h), &k) in lo.iter_mut().zip(hi.iter_mut()).zip(key) {
            *l = (*l).min(k);
            *h = (*h).max(k);
        }
    });
    if !any {
        return (0, CoverStats::default());
    }
    let mut set = CellSet::with_bounds(&lo, &hi);
    emit(&mut |key: &[i64]| {
        set.insert(key);
    });
    (set.len(), set.stats())
}

/// Counts distinct keys in a flat buffer of `dim`-tuples.
pub fn count_key_buffer(dim: usize, keys: &[i64]) -> (usize, CoverStats) {
    if keys.is_empty() {
        return (0, CoverStats::default());
    }
    let mut lo = keys[..dim].to_vec();
    let mut hi = lo.clone();
    for key in keys.chunks_exact(dim) {
        for ((l, h), &k) in lo.iter_mut().zip(hi.iter_mut()).zip(key) {
            *l = (*l).min(k);
            *h = (*h).max(k);
        }
    }
    let mut set = CellSet::with_bounds(&lo, &hi);
    for key in keys.chunks_exact(dim) {
        set.insert(key);
    }
    (set.len(), set.stats())
}

/// Points per shard when counting in parallel.
const SHARD: usize = 1 << 15;

/// delta-covering number of a cloud, with profiling counters.
pub fn covering_number_with_stats<F: LocalField>(cloud: &PointCloud<F>, scale: Scale) -> (usize, CoverStats) {
    let f = cloud.field;
    let n = cloud.dim;
    if cloud.is_empty() {
        return (0, CoverStats::default());
    }
    let mut lo = vec![i64::MAX; n];
    let mut hi = vec![i64::MIN; n];
    let cp = f.cell_param(&scale);
    for p in cloud.points() {
        for i in 0..n {
            let k = f.cell_of(p[i], cp);
            lo[i] = lo[i].min(k);
            hi[i] = hi[i].max(k);
        }
    }
    let fill = |points: &[F::Elem]| {
        let mut set = CellSet::with_bounds(&lo, &hi);
        let mut key = vec![0i64; n];
        for p in points.chunks_exact(n) {
            for (k, &x) in key.iter_mut().zip(p) {
                *k = f.cell_of(x, cp);
            }
            set.insert(&key);
        }
        set
    };
    let set = if cloud.len() > SHARD && rayon::current_num_threads() > 1 && !CellSet::dense_for(&lo, &hi) {
        // shard into per-worker hash sets, merged by union in shard order
        cloud
            .data
            .par_chunks(SHARD * n)
            .map(fill)
            .reduce_with(|mut a, b| {
                a.merge(b);
                a
            })
            .expect("nonempty")
    } else {
        fill(&cloud.data)
    };
    (set.len(), set.stats())
}

pub fn covering_number<F: LocalField>(cloud: &PointCloud<F>, scale: Scale) -> usize {
    covering_number_with_stats(cloud, scale).0
}

/// Local dimension estimate between two scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimEstimate {
    pub value: f64,
    /// Both covering numbers were 1; `value` is then 0.
    pub degenerate: bool,
}

/// `(ln N_{k2} - ln N_{k1}) / ln(delta_1 / delta_2)`.
pub fn local_dimension<F: LocalField>(cloud: &PointCloud<F>, coarse: Scale, fine: Scale) -> DimEstimate {
    assert!(fine.k > coarse.k, "local_dimension needs k2 > k1");
    let n1 = covering_number(cloud, coarse);
    let n2 = covering_number(cloud, fine);
    if n1 <= 1 && n2 <= 1 {
        return DimEstimate { value: 0.0, degenerate: true };
    }
    let span = fine.log_inv_delta(&cloud.field) - coarse.log_inv_delta(&cloud.field);
    DimEstimate { value: ((n2 as f64).ln() - (n1 as f64).ln()) / span, degenerate: false }
}

/// Something points can be measured against.
pub trait CenterSet<F: LocalField> {
    fn distance(&self, x: &[F::Elem]) -> f64;
}

/// A finite center set under the field norm of `F^n`.
pub struct FiniteCenters<'a, F: LocalField>(pub &'a PointCloud<F>);

impl<F: LocalField> CenterSet<F> for FiniteCenters<'_, F> {
    fn distance(&self, x: &[F::Elem]) -> f64 {
        let f = self.0.field;
        let mut diff = vec![f.zero(); x.len()];
        self.0
            .points()
            .map(|c| {
                for ((d, &a), &b) in diff.iter_mut().zip(x).zip(c) {
                    *d = f.sub(a, b);
                }
                f.norm(&diff)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Sub-cloud within `radius` of `centers`.
pub fn nhd_filter<F: LocalField, C: CenterSet<F> + Sync>(cloud: &PointCloud<F>, centers: &C, radius: f64) -> PointCloud<F> {
    let keep: Vec<usize> = (0..cloud.len())
        .into_par_iter()
        .filter(|&i| centers.distance(cloud.point(i)) <= radius)
        .collect();
    cloud.select(keep)
}

/// Covering number of the part of `cloud` within `radius` of `centers`.
pub fn nhd_covering<F: LocalField, C: CenterSet<F> + Sync>(
    cloud: &PointCloud<F>,
    centers: &C,
    radius: f64,
    scale: Scale,
) -> usize {
    covering_number(&nhd_filter(cloud, centers, radius), scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localfield::{Padic, Reals};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    #[test]
    fn single_point() {
        let c = PointCloud::from_points(Reals, 2, [vec![0.3, -0.2]]);
        assert_eq!(covering_number(&c, Scale::ladder(5)), 1);
    }

    #[test]
    fn dyadic_line() {
        let c = PointCloud::from_points(Reals, 1, [0.0, 0.25, 0.5, 0.75].map(|x| vec![x]));
        assert_eq!(covering_number(&c, Scale::dyadic(2)), 4);
    }

    #[test]
    fn residues_mod_27() {
        let f = Padic::new(3, 6).unwrap();
        let c = PointCloud::from_points(f, 1, (0..27).map(|x| vec![x]));
        assert_eq!(covering_number(&c, Scale::ladder(2)), 9);
    }

    #[test]
    fn full_grid_has_dimension_two() {
        let s = 400;
        let pts = (0..=s).flat_map(|i| (0..=s).map(move |j| vec![-1.0 + 2.0 * i as f64 / s as f64, -1.0 + 2.0 * j as f64 / s as f64]));
        let c = PointCloud::from_points(Reals, 2, pts);
        let d = local_dimension(&c, Scale::ladder(2), Scale::ladder(5));
        assert!((d.value - 2.0).abs() < 0.1, "{d:?}");
    }

    #[test]
    fn single_point_dimension_is_degenerate() {
        let c = PointCloud::from_points(Reals, 1, [vec![0.5]]);
        let d = local_dimension(&c, Scale::ladder(1), Scale::ladder(4));
        assert!(d.degenerate);
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn padic_matches_brute_force_and_is_monotone() {
        let f = Padic::new(5, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<u64>> = (0..3000).map(|_| (0..2).map(|_| rng.gen_range(0..f.modulus())).collect()).collect();
        let c = PointCloud::from_points(f, 2, pts.clone());
        let mut prev = 0;
        for k in 0..=5 {
            let m = f.p_pow(k);
            let brute: BTreeSet<Vec<u64>> = pts.iter().map(|p| p.iter().map(|x| x % m).collect()).collect();
            let n = covering_number(&c, Scale::ladder(k));
            assert_eq!(n, brute.len());
            assert!(n >= prev && n <= c.len());
            prev = n;
        }
    }

    #[test]
    fn sparse_store_agrees_with_dense() {
        // spread over a key box too large for the bitmap
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = PointCloud::from_points(Reals, 4, (0..5000).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()));
        let (n, stats) = covering_number_with_stats(&c, Scale::ladder(7));
        assert!(!stats.dense);
        let brute: BTreeSet<Vec<i64>> = c
            .points()
            .map(|p| p.iter().map(|&x| Reals.cell_index(x, &Scale::ladder(7))).collect())
            .collect();
        assert_eq!(n, brute.len());
        assert_eq!(stats.cells_touched, 5000);
    }

    #[test]
    fn nhd_covering_of_finite_centers() {
        let c = PointCloud::from_points(Reals, 1, [0.0, 0.1, 0.5, 0.9].map(|x| vec![x]));
        let centers = PointCloud::from_points(Reals, 1, [vec![0.05]]);
        assert_eq!(nhd_filter(&c, &FiniteCenters(&centers), 0.06).len(), 2);
        assert_eq!(nhd_covering(&c, &FiniteCenters(&centers), 1.0, Scale::dyadic(1)), 2);
        assert_eq!(nhd_covering(&c, &FiniteCenters(&centers), 0.01, Scale::dyadic(1)), 0);
    }

    #[test]
    fn union_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = PointCloud::from_points(Reals, 2, (0..500).map(|_| vec![rng.gen_range(-1.0..0.2), rng.gen::<f64>()]));
        let b = PointCloud::from_points(Reals, 2, (0..500).map(|_| vec![rng.gen_range(-0.2..1.0), rng.gen::<f64>()]));
        let mut u = a.clone();
        u.data.extend_from_slice(&b.data);
        let s = Scale::ladder(3);
        assert!(covering_number(&u, s) <= covering_number(&a, s) + covering_number(&b, s));
    }
}
