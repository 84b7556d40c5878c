//! Covering numbers of `Theta_1 + r Theta_2`, the exceptional set of `r`,
//! and extraction of a box shape shared by both clouds.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::boxfit::{densest_cells, ladder_neighbours, BoxFitting};
use crate::covering::{covering_number, CellSet, PointCloud};
use crate::error::{Error, Result};
use crate::localfield::{LocalField, Scale};
use crate::projection::{sample_rs, wilson_interval};
use crate::rep::{log_box_covering_number, PhiCloud, RepBox, RepSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumProdConfig {
    pub alpha_hat: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub c_big: f64,
    pub c_small: f64,
    pub scale: Scale,
    pub r_samples: usize,
    /// Maximum number of pair insertions per `r`.
    pub budget: u64,
    /// Fail instead of subsampling above the budget.
    pub strict: bool,
    pub anchor_budget: usize,
    /// Stop each sum count at the threshold (see `ProjConfig::cap_counts`).
    pub cap_counts: bool,
}

impl SumProdConfig {
    pub fn new(alpha_hat: f64, scale: Scale) -> Self {
        SumProdConfig {
            alpha_hat,
            eps1: 0.3,
            eps2: 0.3,
            c_big: 2.0,
            c_small: 1.0,
            scale,
            r_samples: 200,
            budget: 100_000_000,
            strict: false,
            anchor_budget: 4,
            cap_counts: false,
        }
    }

    /// `max(eps1, eps2)`.
    pub fn eps(&self) -> f64 {
        self.eps1.max(self.eps2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumCount {
    pub count: usize,
    /// Pairs actually inserted.
    pub pairs: u64,
    /// All pairs were inserted; otherwise `count` is a lower bound from a
    /// uniform subsample of both clouds.
    pub exact: bool,
}

/// `N_delta({t1 + r t2})`. Above the budget both clouds are subsampled to
/// sizes whose product fits, using `seed`.
pub fn sum_covering<F: LocalField>(
    t1: &PointCloud<F>,
    t2: &PointCloud<F>,
    r: F::Elem,
    scale: Scale,
    budget: u64,
    strict: bool,
    seed: u64,
) -> Result<SumCount> {
    sum_covering_capped(t1, t2, r, scale, budget, strict, seed, None)
}

/// As [`sum_covering`]; with `cap` the count is exactly `min(N, cap)`.
#[allow(clippy::too_many_arguments)]
pub fn sum_covering_capped<F: LocalField>(
    t1: &PointCloud<F>,
    t2: &PointCloud<F>,
    r: F::Elem,
    scale: Scale,
    budget: u64,
    strict: bool,
    seed: u64,
    cap: Option<usize>,
) -> Result<SumCount> {
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if t1.dim != t2.dim {
        return Err(Error::DimensionMismatch { expected: t1.dim, got: t2.dim });
    }
    let f = t1.field;
    let m = t1.dim;
    let total = t1.len() as u64 * t2.len() as u64;
    let (a, b, exact);
    let (sub1, sub2);
    if total <= budget {
        (a, b, exact) = (t1, t2, true);
    } else {
        if strict {
            return Err(Error::BudgetExceeded(budget));
        }
        let shrink = (budget as f64 / total as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = ((t1.len() as f64 * shrink) as usize).max(1);
        let n2 = ((t2.len() as f64 * shrink) as usize).max(1);
        let mut i1 = sample(&mut rng, t1.len(), n1).into_vec();
        let mut i2 = sample(&mut rng, t2.len(), n2).into_vec();
        i1.sort_unstable();
        i2.sort_unstable();
        sub1 = t1.select(i1);
        sub2 = t2.select(i2);
        (a, b, exact) = (&sub1, &sub2, false);
    }
    let rb = b.map(m, |x, out| out.iter_mut().zip(x).for_each(|(o, &v)| *o = f.mul(r, v)));
    let cp = f.cell_param(&scale);
    let bounds = |t: &PointCloud<F>| {
        let mut bb = vec![(i64::MAX, i64::MIN); m];
        for p in t.points() {
            for (b, &x) in bb.iter_mut().zip(p) {
                let k = f.cell_of(x, cp);
                *b = (b.0.min(k), b.1.max(k));
            }
        }
        bb
    };
    let (ba, bb) = (bounds(a), bounds(&rb));
    let (lo, hi): (Vec<i64>, Vec<i64>) = ba.iter().zip(&bb).map(|(&x, &y)| f.cell_sum_bounds(x, y, cp)).unzip();
    let mut set = CellSet::with_bounds(&lo, &hi);
    let mut key = vec![0i64; m];
    let cap = cap.unwrap_or(usize::MAX);
    for x in a.points() {
        if set.len() >= cap {
            break;
        }
        for y in rb.points() {
            for c in 0..m {
                key[c] = f.cell_of(f.add(x[c], y[c]), cp);
            }
            set.insert(&key);
        }
    }
    let (count, stats) = (set.len().min(cap), set.stats());
    Ok(SumCount { count, pairs: stats.cells_touched, exact })
}

#[derive(Clone, Debug)]
pub struct ExcProfile<E> {
    pub rs: Vec<E>,
    pub counts: Vec<SumCount>,
    /// `delta^{-alpha_hat - eps1}`.
    pub threshold: f64,
    /// Whether both `N_delta(Theta_i) >= delta^{-alpha_hat}`.
    pub precondition_ok: bool,
}

impl<E> ExcProfile<E> {
    /// Strict inequality: a count equal to the threshold is not exceptional.
    pub fn is_exceptional(&self, i: usize) -> bool {
        (self.counts[i].count as f64) < self.threshold
    }

    pub fn exceptional_count(&self) -> usize {
        (0..self.counts.len()).filter(|&i| self.is_exceptional(i)).count()
    }

    pub fn fraction(&self) -> f64 {
        self.exceptional_count() as f64 / self.counts.len().max(1) as f64
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.exceptional_count(), self.counts.len(), 1.96)
    }

    pub fn all_exact(&self) -> bool {
        self.counts.iter().all(|c| c.exact)
    }
}

pub fn exceptional_measure<F: LocalField, R: Rng + ?Sized>(
    t1: &PointCloud<F>,
    t2: &PointCloud<F>,
    cfg: &SumProdConfig,
    rng: &mut R,
) -> Result<ExcProfile<F::Elem>> {
    let f = t1.field;
    let big_l = cfg.scale.log_inv_delta(&f);
    let need = cfg.alpha_hat * big_l - 1e-9;
    let precondition_ok = [t1, t2].iter().all(|t| (covering_number(t, cfg.scale) as f64).ln() >= need);
    let threshold = (big_l * (cfg.alpha_hat + cfg.eps1)).exp();
    let cap = cfg.cap_counts.then(|| threshold.ceil() as usize);
    let rs = sample_rs(&f, cfg.r_samples, rng);
    let seeds: Vec<u64> = (0..rs.len()).map(|_| rng.gen()).collect();
    let counts = rs
        .par_iter()
        .zip(&seeds)
        .map(|(&r, &s)| sum_covering_capped(t1, t2, r, cfg.scale, cfg.budget, cfg.strict, s, cap))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExcProfile { rs, counts, threshold, precondition_ok })
}

/// Base points of both clouds with a shared box shape `L` in `F^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CommonBox<F: LocalField> {
    pub box1: RepBox<F>,
    pub box2: RepBox<F>,
}

impl<F: LocalField> CommonBox<F> {
    pub fn ks(&self) -> &[u32] {
        &self.box1.ks
    }

    /// `N_delta(L) = prod max(rho_j / delta, 1)`.
    pub fn log_cover(&self, scale: Scale) -> f64 {
        log_box_covering_number(&self.box1, scale)
    }
}

fn as_rows<F: LocalField>(t: &PointCloud<F>) -> PhiCloud<F> {
    PhiCloud { rep: RepSpace::new(0, t.dim), points: t.clone() }
}

/// Both displays for both clouds with the shared shape.
pub fn verify_common_box<F: LocalField>(t1: &PointCloud<F>, t2: &PointCloud<F>, cb: &CommonBox<F>, cfg: &SumProdConfig) -> bool {
    let f = t1.field;
    let big_l = cfg.scale.log_inv_delta(&f);
    let slack = cfg.c_big * cfg.eps() * big_l;
    if (cb.log_cover(cfg.scale) - cfg.alpha_hat * big_l).abs() > slack + 1e-9 {
        return false;
    }
    let radius = cfg.c_big * cfg.scale.delta(&f);
    let need = cfg.c_small.ln() + cfg.alpha_hat * big_l - slack - 1e-9;
    [(t1, &cb.box1), (t2, &cb.box2)].iter().all(|(t, b)| {
        let near = crate::covering::nhd_filter(t, *b, radius);
        (covering_number(&near, cfg.scale) as f64).ln() >= need
    })
}

fn joint_fit<F: BoxFitting>(w1: (&PhiCloud<F>, &[usize]), w2: (&PhiCloud<F>, &[usize]), k_delta: u32) -> Option<CommonBox<F>> {
    let f = w1.0.field();
    let m = w1.0.rep.m;
    let base1 = F::window_base(w1.0, w1.1);
    let base2 = F::window_base(w2.0, w2.1);
    // recentre both windows and fit one shape to their union
    let mut pooled = PhiCloud::new(f, w1.0.rep);
    for (c, idx, base) in [(w1.0, w1.1, &base1), (w2.0, w2.1, &base2)] {
        for &i in idx {
            let y: Vec<F::Elem> = c.point(i).iter().zip(base.iter()).map(|(&a, &b)| f.sub(a, b)).collect();
            pooled.push(&y);
        }
    }
    let all: Vec<usize> = (0..pooled.len()).collect();
    let (dirs, ks) = F::fit_directions(&pooled, &all, &vec![f.zero(); m], k_delta);
    let rep = w1.0.rep;
    Some(CommonBox {
        box1: RepBox::new(f, rep, base1, &dirs, ks.clone()).ok()?,
        box2: RepBox::new(f, rep, base2, &dirs, ks).ok()?,
    })
}

#[derive(Clone, Debug)]
pub struct CommonBoxSearch<F: LocalField> {
    pub fitted: Option<CommonBox<F>>,
    pub found: Option<CommonBox<F>>,
}

/// Joint fit on the whole clouds, then on paired densest
/// `delta^{1/2}`-cells; each fit is tried with one-step ladder neighbours.
pub fn find_common_box<F: BoxFitting>(t1: &PointCloud<F>, t2: &PointCloud<F>, cfg: &SumProdConfig) -> CommonBoxSearch<F> {
    let (c1, c2) = (as_rows(t1), as_rows(t2));
    let k_delta = cfg.scale.k;
    let try_fit = |cb: &CommonBox<F>| -> Option<CommonBox<F>> {
        let cands: Vec<CommonBox<F>> = ladder_neighbours(&cb.box1, k_delta)
            .into_iter()
            .map(|b1| {
                let mut b2 = cb.box2.clone();
                b2.ks = b1.ks.clone();
                CommonBox { box1: b1, box2: b2 }
            })
            .collect();
        let ok: Vec<bool> = cands.par_iter().map(|cb| verify_common_box(t1, t2, cb, cfg)).collect();
        ok.iter().position(|&x| x).map(|i| cands[i].clone())
    };
    let all1: Vec<usize> = (0..c1.len()).collect();
    let all2: Vec<usize> = (0..c2.len()).collect();
    if all1.is_empty() || all2.is_empty() {
        return CommonBoxSearch { fitted: None, found: None };
    }
    let fitted = joint_fit((&c1, &all1), (&c2, &all2), k_delta);
    if let Some(found) = fitted.as_ref().and_then(try_fit) {
        return CommonBoxSearch { fitted, found: Some(found) };
    }
    let coarse = Scale { k: k_delta.div_ceil(2), base: cfg.scale.base };
    let a1 = densest_cells(&c1, coarse, cfg.anchor_budget);
    let a2 = densest_cells(&c2, coarse, cfg.anchor_budget);
    for (w1, w2) in a1.iter().zip(&a2) {
        if let Some(found) = joint_fit((&c1, w1), (&c2, w2), k_delta).as_ref().and_then(try_fit) {
            return CommonBoxSearch { fitted, found: Some(found) };
        }
    }
    CommonBoxSearch { fitted, found: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localfield::{Padic, Reals};
    use rand::SeedableRng;

    fn grid(step: f64) -> PointCloud<Reals> {
        let n = (1.0 / step) as i64;
        let pts = (-n..=n).flat_map(|i| (-n..=n).map(move |j| vec![i as f64 * step, j as f64 * step]));
        PointCloud::from_points(Reals, 2, pts.filter(|p| p[0] * p[0] + p[1] * p[1] <= 1.0))
    }

    #[test]
    fn zero_translates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t1 = PointCloud::from_points(Reals, 2, (0..300).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]));
        let zero = PointCloud::from_points(Reals, 2, [vec![0.0, 0.0]]);
        let s = Scale::ladder(4);
        let n1 = covering_number(&t1, s);
        assert_eq!(sum_covering(&t1, &zero, 0.7, s, 1 << 30, true, 0).unwrap().count, n1);
        assert_eq!(sum_covering(&t1, &t1, 0.0, s, 1 << 30, true, 0).unwrap().count, n1);
    }

    #[test]
    fn grid_sums_stay_in_b2() {
        let s = Scale::ladder(3);
        let g = grid(s.delta(&Reals));
        // grid cells meeting the disc of radius 2
        let bound = std::f64::consts::PI * (2.0 * (3.0f64).exp() + 2f64.sqrt()).powi(2);
        for r in [-1.0, -0.3, 0.5, 1.0] {
            let c = sum_covering(&g, &g, r, s, 1 << 30, true, 0).unwrap();
            assert!(c.exact && (c.count as f64) <= bound, "{r} {c:?}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let g = grid(0.1);
        assert!(matches!(sum_covering(&g, &g, 0.5, Scale::ladder(2), 100, true, 0), Err(Error::BudgetExceeded(100))));
        let c = sum_covering(&g, &g, 0.5, Scale::ladder(2), 100, false, 0).unwrap();
        assert!(!c.exact && c.pairs <= 100);
    }

    #[test]
    fn line_is_always_exceptional() {
        let s = Scale::ladder(6);
        let n = 400;
        let line = PointCloud::from_points(Reals, 2, (0..=n).map(|i| {
            let t = -1.0 + 2.0 * i as f64 / n as f64;
            vec![0.6 * t, 0.8 * t]
        }));
        let cfg = SumProdConfig { r_samples: 40, eps1: 0.3, ..SumProdConfig::new(1.0, s) };
        let p = exceptional_measure(&line, &line, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(p.fraction(), 1.0);
    }

    #[test]
    fn ties_are_not_exceptional() {
        let p = ExcProfile::<f64> { rs: vec![0.0], counts: vec![SumCount { count: 10, pairs: 1, exact: true }], threshold: 10.0, precondition_ok: true };
        assert!(!p.is_exceptional(0));
    }

    #[test]
    fn padic_shared_box_is_found() {
        let f = Padic::new(3, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = RepSpace::new(0, 2);
        let l = RepBox::new(f, rep, vec![4, 11], &[vec![1, 5]], vec![3]).unwrap();
        let mut l2 = l.clone();
        l2.base = vec![100, 7];
        let t1 = PointCloud::from_points(f, 2, (0..200).map(|_| l.sample(&mut rng)));
        let t2 = PointCloud::from_points(f, 2, (0..200).map(|_| l2.sample(&mut rng)));
        let cfg = SumProdConfig { r_samples: 50, eps1: 0.2, eps2: 0.2, ..SumProdConfig::new(0.5, Scale::ladder(6)) };
        let p = exceptional_measure(&t1, &t2, &cfg, &mut rng).unwrap();
        assert_eq!(p.fraction(), 1.0);
        let s = find_common_box(&t1, &t2, &cfg);
        assert_eq!(s.found.expect("common box").ks(), &[3]);
    }
}
