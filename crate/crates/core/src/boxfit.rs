//! Fitting representation boxes to point clouds and searching for one that
//! passes a caller-supplied verification predicate.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::localfield::{LocalField, Padic, Reals, Scale};
use crate::rep::{phi_norm, PhiCloud, RepBox};

/// Field-specific extent estimation for a window of a cloud.
pub trait BoxFitting: LocalField {
    /// Centre of a window; a point of the window or its mean.
    fn window_base(cloud: &PhiCloud<Self>, idx: &[usize]) -> Vec<Self::Elem>;

    /// Directions in `F^m` and ladder indices `k_j < k_delta` of the
    /// recentred rows of the window.
    fn fit_directions(cloud: &PhiCloud<Self>, idx: &[usize], base: &[Self::Elem], k_delta: u32) -> (Vec<Vec<Self::Elem>>, Vec<u32>);
}

impl BoxFitting for Reals {
    fn window_base(cloud: &PhiCloud<Self>, idx: &[usize]) -> Vec<f64> {
        let mut mean = vec![0.0; cloud.rep.dim()];
        for &i in idx {
            mean.iter_mut().zip(cloud.point(i)).for_each(|(a, b)| *a += b);
        }
        let n = idx.len().max(1) as f64;
        mean.iter_mut().for_each(|a| *a /= n);
        mean
    }

    fn fit_directions(cloud: &PhiCloud<Self>, idx: &[usize], base: &[f64], k_delta: u32) -> (Vec<Vec<f64>>, Vec<u32>) {
        let m = cloud.rep.m;
        let rows = cloud.rep.rows();
        // pooled second moment of the recentred rows; a uniform coefficient
        // in [-rho, rho] has variance rho^2 / 3
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for &p in idx {
            let x = cloud.point(p);
            for i in 0..rows {
                for a in 0..m {
                    let ya = x[i * m + a] - base[i * m + a];
                    for b in 0..m {
                        cov[(a, b)] += ya * (x[i * m + b] - base[i * m + b]);
                    }
                }
            }
        }
        cov /= (idx.len() * rows).max(1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut dirs = Vec::new();
        let mut ks = Vec::new();
        for j in order {
            let rho = (3.0 * eig.eigenvalues[j].max(0.0)).sqrt();
            let k = snap(rho, k_delta);
            if k < k_delta {
                dirs.push(eig.eigenvectors.column(j).iter().copied().collect());
                ks.push(k);
            }
        }
        (dirs, ks)
    }
}

/// Nearest ladder index `round(ln(1/rho))`, clamped to `[0, k_delta]`.
pub fn snap(rho: f64, k_delta: u32) -> u32 {
    if rho <= 0.0 {
        return k_delta;
    }
    (-rho.ln()).round().clamp(0.0, k_delta as f64) as u32
}

impl BoxFitting for Padic {
    fn window_base(cloud: &PhiCloud<Self>, idx: &[usize]) -> Vec<u64> {
        cloud.point(idx[0]).to_vec()
    }

    fn fit_directions(cloud: &PhiCloud<Self>, idx: &[usize], base: &[u64], k_delta: u32) -> (Vec<Vec<u64>>, Vec<u32>) {
        let f = cloud.field();
        let m = cloud.rep.m;
        let rows = cloud.rep.rows();
        let mut vecs: Vec<Vec<u64>> = Vec::with_capacity(idx.len() * rows);
        for &p in idx {
            let x = cloud.point(p);
            for i in 0..rows {
                let v: Vec<u64> = (0..m).map(|c| f.sub(x[i * m + c], base[i * m + c])).collect();
                if v.iter().any(|&a| a != 0) {
                    vecs.push(v);
                }
            }
        }
        // greedy reduction of the Z_p-module spanned by the differences:
        // the generator of least valuation fixes the next direction
        let mut dirs = Vec::new();
        let mut ks = Vec::new();
        let mut used = vec![false; m];
        for _ in 0..m {
            let mut best: Option<(u32, usize, usize)> = None;
            for (vi, v) in vecs.iter().enumerate() {
                for c in (0..m).filter(|&c| !used[c]) {
                    let val = f.valuation(v[c]);
                    if best.is_none_or(|(bv, _, _)| val < bv) {
                        best = Some((val, vi, c));
                    }
                }
            }
            let Some((val, vi, c)) = best else { break };
            if val >= k_delta {
                break;
            }
            let w: Vec<u64> = vecs[vi].iter().map(|&a| f.div_p_pow(a, val).unwrap_or(0)).collect();
            let inv = f.unit_inverse(w[c]).expect("pivot is a unit");
            let u: Vec<u64> = w.iter().map(|&a| f.mul(a, inv)).collect();
            for v in vecs.iter_mut() {
                let coef = v[c];
                if coef != 0 {
                    v.iter_mut().zip(&u).for_each(|(a, &b)| *a = f.sub(*a, f.mul(coef, b)));
                }
            }
            used[c] = true;
            dirs.push(u);
            ks.push(val);
        }
        (dirs, ks)
    }
}

/// Indices of the points in the `budget` most populated cells at `scale`,
/// densest first, ties broken by first occurrence.
pub fn densest_cells<F: LocalField>(cloud: &PhiCloud<F>, scale: Scale, budget: usize) -> Vec<Vec<usize>> {
    let f = cloud.field();
    let cp = f.cell_param(&scale);
    let n = cloud.points.dim;
    let key_of = |p: &[F::Elem], out: &mut [i64]| out.iter_mut().zip(p).for_each(|(k, &x)| *k = f.cell_of(x, cp));
    let mut lo = vec![i64::MAX; n];
    let mut hi = vec![i64::MIN; n];
    let mut key = vec![0i64; n];
    for p in cloud.points.points() {
        key_of(p, &mut key);
        for i in 0..n {
            lo[i] = lo[i].min(key[i]);
            hi[i] = hi[i].max(key[i]);
        }
    }
    let widths: Vec<u32> = lo.iter().zip(&hi).map(|(&l, &h)| 64 - ((h - l) as u64).leading_zeros()).collect();
    if widths.iter().sum::<u32>() > 128 {
        return densest_cells_boxed(cloud, scale, budget);
    }
    let pack = |key: &[i64]| {
        let mut v = 0u128;
        let mut shift = 0;
        for ((&k, &l), &w) in key.iter().zip(&lo).zip(&widths) {
            v |= ((k - l) as u128) << shift;
            shift += w;
        }
        v
    };
    // (count, first index) per cell
    let mut cells: FxHashMap<u128, (usize, usize)> = FxHashMap::default();
    for (i, p) in cloud.points.points().enumerate() {
        key_of(p, &mut key);
        cells.entry(pack(&key)).or_insert((0, i)).0 += 1;
    }
    let mut ranked: Vec<(u128, usize, usize)> = cells.into_iter().map(|(k, (c, first))| (k, c, first)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(budget);
    let slot: FxHashMap<u128, usize> = ranked.iter().enumerate().map(|(s, r)| (r.0, s)).collect();
    let mut groups = vec![Vec::new(); ranked.len()];
    for (i, p) in cloud.points.points().enumerate() {
        key_of(p, &mut key);
        if let Some(&s) = slot.get(&pack(&key)) {
            groups[s].push(i);
        }
    }
    groups
}

fn densest_cells_boxed<F: LocalField>(cloud: &PhiCloud<F>, scale: Scale, budget: usize) -> Vec<Vec<usize>> {
    let f = cloud.field();
    let mut cells: FxHashMap<Vec<i64>, Vec<usize>> = FxHashMap::default();
    for (i, p) in cloud.points.points().enumerate() {
        let key: Vec<i64> = p.iter().map(|&x| f.cell_index(x, &scale)).collect();
        cells.entry(key).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = cells.into_values().collect();
    groups.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    groups.truncate(budget);
    groups
}

/// Box fitted to a window of the cloud.
pub fn fit_box<F: BoxFitting>(cloud: &PhiCloud<F>, idx: &[usize], k_delta: u32) -> Option<RepBox<F>> {
    if idx.is_empty() {
        return None;
    }
    let base = F::window_base(cloud, idx);
    let (dirs, ks) = F::fit_directions(cloud, idx, &base, k_delta);
    RepBox::new(cloud.field(), cloud.rep, base, &dirs, ks).ok()
}

/// The fitted box and its one-step ladder neighbours.
pub fn ladder_neighbours<F: LocalField>(b: &RepBox<F>, k_delta: u32) -> Vec<RepBox<F>> {
    let mut out = vec![b.clone()];
    for j in 0..b.ks.len() {
        for step in [-1i64, 1] {
            let k = b.ks[j] as i64 + step;
            if (0..=k_delta as i64).contains(&k) {
                let mut nb = b.clone();
                nb.ks[j] = k as u32;
                out.push(nb);
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct BoxSearch<F: LocalField> {
    /// Box fitted to the whole cloud, before verification.
    pub fitted: Option<RepBox<F>>,
    /// First candidate passing verification.
    pub found: Option<RepBox<F>>,
    pub candidates_tried: usize,
}

/// Anchored search: the whole cloud first, then windows of radius
/// `2 delta^{1/2}` around the densest `delta^{1/2}`-cells, each fitted,
/// snapped and perturbed by one ladder step, until `verify` accepts.
pub fn search_box<F: BoxFitting>(
    cloud: &PhiCloud<F>,
    scale: Scale,
    anchor_budget: usize,
    verify: impl Fn(&RepBox<F>) -> bool + Sync,
) -> BoxSearch<F> {
    let k_delta = scale.k;
    let all: Vec<usize> = (0..cloud.len()).collect();
    let fitted = fit_box(cloud, &all, k_delta);
    let mut tried = 0;
    let mut try_all = |b: &RepBox<F>| -> Option<RepBox<F>> {
        let cands = ladder_neighbours(b, k_delta);
        tried += cands.len();
        let ok: Vec<bool> = cands.par_iter().map(&verify).collect();
        ok.iter().position(|&x| x).map(|i| cands[i].clone())
    };
    if let Some(found) = fitted.as_ref().and_then(&mut try_all) {
        return BoxSearch { fitted, found: Some(found), candidates_tried: tried };
    }
    let f = cloud.field();
    let coarse = Scale { k: k_delta.div_ceil(2), base: scale.base };
    let window = 2.0 * coarse.delta(&f);
    let mut diff = vec![f.zero(); cloud.rep.dim()];
    for cell in densest_cells(cloud, coarse, anchor_budget) {
        let centre = F::window_base(cloud, &cell);
        let idx: Vec<usize> = (0..cloud.len())
            .filter(|&i| {
                diff.iter_mut().zip(cloud.point(i)).zip(&centre).for_each(|((d, &a), &b)| *d = f.sub(a, b));
                phi_norm(&f, cloud.rep, &diff) <= window
            })
            .collect();
        if let Some(found) = fit_box(cloud, &idx, k_delta).as_ref().and_then(&mut try_all) {
            return BoxSearch { fitted, found: Some(found), candidates_tried: tried };
        }
    }
    BoxSearch { fitted, found: None, candidates_tried: tried }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rep::RepSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn snapping() {
        assert_eq!(snap(1.0, 8), 0);
        assert_eq!(snap((-4.3f64).exp(), 8), 4);
        assert_eq!(snap(1e-9, 8), 8);
        assert_eq!(snap(0.0, 8), 8);
        assert_eq!(snap(3.0, 8), 0);
    }

    #[test]
    fn real_fit_recovers_planted_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rep = RepSpace::new(2, 2);
        let b = RepBox::new(Reals, rep, vec![0.2; 6], &[vec![0.6, -0.8]], vec![2]).unwrap();
        let mut c = PhiCloud::new(Reals, rep);
        for _ in 0..5000 {
            c.push(&b.sample(&mut rng));
        }
        let all: Vec<usize> = (0..c.len()).collect();
        let fit = fit_box(&c, &all, 8).unwrap();
        assert_eq!(fit.ks, vec![2]);
        let u = &fit.frame.dirs[0];
        assert!((u[0] * 0.6 - u[1] * 0.8).abs() > 0.999);
    }

    #[test]
    fn padic_fit_recovers_planted_module() {
        let f = Padic::new(3, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let rep = RepSpace::new(1, 2);
        let b = RepBox::new(f, rep, vec![5, 7, 1, 2], &[vec![1, 4], vec![0, 1]], vec![1, 3]).unwrap();
        let mut c = PhiCloud::new(f, rep);
        for _ in 0..300 {
            c.push(&b.sample(&mut rng));
        }
        let fit = fit_box(&c, &(0..c.len()).collect::<Vec<_>>(), 6).unwrap();
        assert_eq!(fit.ks, vec![1, 3]);
        for i in 0..c.len() {
            assert_eq!(fit.distance(c.point(i)), 0.0);
        }
    }

    #[test]
    fn neighbours_stay_on_ladder() {
        let rep = RepSpace::new(1, 1);
        let b = RepBox::new(Reals, rep, vec![0.0; 2], &[vec![1.0]], vec![0]).unwrap();
        let ks: Vec<Vec<u32>> = ladder_neighbours(&b, 4).into_iter().map(|b| b.ks).collect();
        assert_eq!(ks, vec![vec![0], vec![1]]);
    }
}
