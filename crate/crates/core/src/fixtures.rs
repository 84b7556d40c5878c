//! Synthetic clouds and measures with known structure.

use rand::Rng;
use rustc_hash::FxHashSet;

use crate::covering::PointCloud;
use crate::error::Result;
use crate::focusing::WeightedMeasure;
use crate::localfield::{sample_unit_ball, LocalField, Padic, Reals, Scale};
use crate::projection::planted_box_generator;
use crate::rep::{PhiCloud, RepBox, RepSpace};

/// Unit vector at angle `theta` in the plane spanned by the first two axes.
pub fn planar_direction(m: usize, theta: f64) -> Vec<f64> {
    let mut u = vec![0.0; m];
    u[0] = theta.cos();
    if m > 1 {
        u[1] = theta.sin();
    }
    u
}

/// Random orthonormal directions of `R^m` (Gram-Schmidt on uniform ball
/// samples).
pub fn random_frame<R: Rng + ?Sized>(m: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    random_frame_in(Reals, m, count, rng)
}

/// `count` orthonormal directions of `F^m` from uniform ball samples,
/// redrawn until independent.
pub fn random_frame_in<F: LocalField, R: Rng + ?Sized>(f: F, m: usize, count: usize, rng: &mut R) -> Vec<Vec<F::Elem>> {
    loop {
        let vs: Vec<Vec<F::Elem>> = (0..count).map(|_| sample_unit_ball(&f, m, rng)).collect();
        if let Ok(fr) = f.frame(&vs) {
            return fr.dirs;
        }
    }
}

/// A planted box over any field: random frame, base in `B_{q^-2}`.
pub fn planted_box<F: LocalField, R: Rng + ?Sized>(f: F, rep: RepSpace, ks: &[u32], noise: f64, count: usize, rng: &mut R) -> crate::error::Result<(RepBox<F>, PhiCloud<F>)> {
    if ks.len() > rep.m {
        return Err(crate::error::Error::InvalidConfig(format!("{} directions in F^{}", ks.len(), rep.m)));
    }
    let dirs = random_frame_in(f, rep.m, ks.len(), rng);
    let small = f.radius_scalar(f.q_pow(-2));
    let base: Vec<F::Elem> = (0..rep.dim()).map(|_| f.mul(small, f.sample_unit(rng))).collect();
    let b = RepBox::new(f, rep, base, &dirs, ks.to_vec())?;
    let cloud = planted_box_generator(&b, count, noise, rng);
    Ok((b, cloud))
}

/// Middle-thirds Cantor set of `[-1, 1]` at `depth`, in every coordinate of
/// `R^m`: `2^{depth m}` points.
pub fn real_cantor_set(m: usize, depth: u32) -> PointCloud<Reals> {
    let mut pts = vec![-1.0];
    for i in 0..depth {
        let step = 2.0 * 3f64.powi(-(i as i32) - 1);
        pts = pts.iter().flat_map(|&x| [x, x + 2.0 * step]).collect();
    }
    product_cloud(Reals, m, &pts)
}

/// `sum_{i < depth} a_i p^i` with digits `a_i <= (p - 1) / 2`, in every
/// coordinate of `Q_p^m`.
pub fn padic_cantor_set(f: Padic, m: usize, depth: u32) -> PointCloud<Padic> {
    let mut pts = vec![0u64];
    for i in 0..depth.min(f.precision()) {
        let place = f.p_pow(i);
        pts = pts.iter().flat_map(|&x| (0..=(f.p() - 1) / 2).map(move |a| f.add(x, f.mul(a, place)))).collect();
    }
    product_cloud(f, m, &pts)
}

fn product_cloud<F: LocalField>(f: F, m: usize, line: &[F::Elem]) -> PointCloud<F> {
    let mut c = PointCloud::new(f, m);
    let mut idx = vec![0usize; m];
    loop {
        let p: Vec<F::Elem> = idx.iter().map(|&i| line[i]).collect();
        c.push(&p);
        let mut j = 0;
        while j < m && idx[j] + 1 == line.len() {
            idx[j] = 0;
            j += 1;
        }
        if j == m {
            return c;
        }
        idx[j] += 1;
    }
}

/// A planted real box in `Phi` with random directions and centre near 0,
/// sampled with `count` points in its `noise`-neighbourhood.
pub fn planted_real_box<R: Rng + ?Sized>(rep: RepSpace, ks: &[u32], noise: f64, count: usize, rng: &mut R) -> (RepBox<Reals>, PhiCloud<Reals>) {
    let dirs = random_frame(rep.m, ks.len(), rng);
    let base: Vec<f64> = (0..rep.dim()).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let b = RepBox::new(Reals, rep, base, &dirs, ks.to_vec()).expect("independent directions");
    let cloud = planted_box_generator(&b, count, noise, rng);
    (b, cloud)
}

/// The `delta`-grid of the lowest weight row: points `(0, 0, t)`, `m = 1`.
pub fn lowest_weight_grid(k: u32) -> PhiCloud<Reals> {
    let delta = (-(k as f64)).exp();
    let n = (1.0 / delta).floor() as i64;
    let mut c = PhiCloud::new(Reals, RepSpace::new(2, 1));
    for i in -n..=n {
        c.push(&[0.0, 0.0, i as f64 * delta]);
    }
    c
}

/// `n` i.i.d. uniform points of `B_1^{F^m}`.
pub fn iid_ball<F: LocalField, R: Rng + ?Sized>(f: F, m: usize, n: usize, rng: &mut R) -> PointCloud<F> {
    let mut c = PointCloud::new(f, m);
    for _ in 0..n {
        c.push(&sample_unit_ball(&f, m, rng));
    }
    c
}

/// Uniform measure on `y + Nhd_{delta_2}(V)`, `V` spanned by `dirs` at radius
/// `delta_1 = e^{-k1}`, with weights `delta_1^alpha / n`, `alpha = 3 |dirs|`.
pub fn planted_focus_measure<R: Rng + ?Sized>(
    rep: RepSpace,
    y: &[f64],
    dirs: &[Vec<f64>],
    k1: u32,
    k2: u32,
    n: usize,
    rng: &mut R,
) -> Result<(RepBox<Reals>, WeightedMeasure<Reals>)> {
    let b = RepBox::new(Reals, rep, y.to_vec(), dirs, vec![k1; dirs.len()])?;
    let cloud = planted_box_generator(&b, n, (-(k2 as f64)).exp(), rng);
    let alpha = 3.0 * dirs.len() as f64;
    let total = (-alpha * k1 as f64).exp();
    Ok((b, WeightedMeasure::uniform(cloud, total)?))
}

/// Two-scale measure for `m = 1`: `clusters` centres uniform in `B_1^Phi`,
/// each carrying `per` points uniform in a cube of radius `e^{-k_small}`.
pub fn two_scale_measure<R: Rng + ?Sized>(clusters: usize, per: usize, k_small: u32, rng: &mut R) -> Result<WeightedMeasure<Reals>> {
    let rep = RepSpace::new(2, 1);
    let rho = (-(k_small as f64)).exp();
    let mut c = PhiCloud::new(Reals, rep);
    for _ in 0..clusters {
        let centre: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for _ in 0..per {
            let x: Vec<f64> = centre.iter().map(|&v| v + rho * rng.gen_range(-1.0..1.0)).collect();
            c.push(&x);
        }
    }
    WeightedMeasure::uniform(c, 1.0)
}

/// Generic cloud of exponent `alpha` at `delta = e^{-k}`: `ceil(delta^{-alpha})`
/// i.i.d. uniform points of `B_1^Phi`, so that `N_delta` is about `delta^{-alpha}`
/// whenever that is far below the number of cells.
pub fn generic_phi_cloud<R: Rng + ?Sized>(rep: RepSpace, alpha: f64, k: u32, rng: &mut R) -> PhiCloud<Reals> {
    let n = (alpha * k as f64).exp().ceil() as usize;
    PhiCloud::sample_uniform(Reals, rep, n, rng)
}

/// `delta`-spaced points `base + t u`, `|t| <= e^{-k}`, in `R^m`.
pub fn real_segment(base: &[f64], u: &[f64], k: u32, k_delta: u32) -> PointCloud<Reals> {
    let rho = (-(k as f64)).exp();
    let delta = (-(k_delta as f64)).exp();
    let n = (rho / delta).floor() as i64;
    let pts = (-n..=n).map(|i| base.iter().zip(u).map(|(&b, &ui)| b + i as f64 * delta * ui).collect());
    PointCloud::from_points(Reals, base.len(), pts)
}

/// The points `base + t u` with `t` running over `p^k Z_p / p^{k_delta}`,
/// one per coset: `p^{k_delta - k}` points.
pub fn padic_segment(f: Padic, base: &[u64], u: &[u64], k: u32, k_delta: u32) -> PointCloud<Padic> {
    let step = f.p_pow(k);
    let n = f.p_pow(k_delta.saturating_sub(k));
    let pts = (0..n).map(|j| {
        let t = f.mul(step, j);
        base.iter().zip(u).map(|(&b, &ui)| f.add(b, f.mul(t, ui))).collect()
    });
    PointCloud::from_points(f, base.len(), pts)
}

/// i.i.d. uniform points of `B_1^{F^m}` drawn until exactly `target` distinct
/// cells at `scale` are occupied.
pub fn iid_ball_with_cover<F: LocalField, R: Rng + ?Sized>(f: F, m: usize, scale: Scale, target: usize, rng: &mut R) -> PointCloud<F> {
    let cp = f.cell_param(&scale);
    let mut seen: FxHashSet<Vec<i64>> = FxHashSet::default();
    let mut c = PointCloud::new(f, m);
    while seen.len() < target {
        let p = sample_unit_ball(&f, m, rng);
        seen.insert(p.iter().map(|&x| f.cell_of(x, cp)).collect());
        c.push(&p);
    }
    c
}
