//! Expanding unipotent arcs on `X = SL_2(R)^3 / SL_2(Z)^3`.
//!
//! A point `x = (g_1, g_2, g_3) Gamma` is stored through reduced
//! representatives: `Gamma` acts on the right, so the invariant base point
//! of a factor is `w = g^{-1} i`, which reduction moves into the standard
//! fundamental domain.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerance for fundamental-domain membership.
pub const FD_TOL: f64 = 1e-9;
/// Cusp cutoff for Haar sampling.
pub const HAAR_HEIGHT_CAP: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Integer 2x2 matrix, row-major.
pub type IMat2 = [[i64; 2]; 2];

pub const INT_IDENTITY: IMat2 = [[1, 0], [0, 1]];

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { a: 1.0, b: 0.0, c: 0.0, d: 1.0 };

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { a, b, c, d }
    }

    pub fn from_int(m: IMat2) -> Self {
        Mat2::new(m[0][0] as f64, m[0][1] as f64, m[1][0] as f64, m[1][1] as f64)
    }

    pub fn u(r: f64) -> Self {
        Mat2::new(1.0, r, 0.0, 1.0)
    }

    pub fn a(t: f64) -> Self {
        Mat2::new(t.exp(), 0.0, 0.0, (-t).exp())
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    /// Inverse, assuming `det = 1`.
    pub fn inv_unimodular(&self) -> Mat2 {
        Mat2::new(self.d, -self.b, -self.c, self.a)
    }

    pub fn neg(&self) -> Mat2 {
        Mat2::new(-self.a, -self.b, -self.c, -self.d)
    }

    pub fn frobenius(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn max_abs_diff(&self, o: &Mat2) -> f64 {
        self.entries().iter().zip(o.entries()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Möbius action on the upper half plane, `z = (x, y)`.
    pub fn mobius(&self, z: (f64, f64)) -> (f64, f64) {
        let (x, y) = z;
        let (nr, ni) = (self.a * x + self.b, self.a * y);
        let (dr, di) = (self.c * x + self.d, self.c * y);
        let den = dr * dr + di * di;
        ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den)
    }

    /// `exp` of a traceless matrix.
    pub fn exp_traceless(x: &Mat2) -> Mat2 {
        // X^2 = -det(X) I for traceless X
        let s = -x.det();
        let (c, k) = if s > 0.0 {
            let r = s.sqrt();
            (r.cosh(), r.sinh() / r)
        } else if s < 0.0 {
            let r = (-s).sqrt();
            (r.cos(), r.sin() / r)
        } else {
            (1.0, 1.0)
        };
        Mat2::new(c + k * x.a, k * x.b, k * x.c, c + k * x.d)
    }
}

fn imul(x: IMat2, y: IMat2) -> IMat2 {
    let mut o = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            o[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    o
}

/// Base point `g^{-1} i` of a factor.
pub fn base_point(g: &Mat2) -> (f64, f64) {
    g.inv_unimodular().mobius((0.0, 1.0))
}

/// Standard fundamental domain test with tolerance `tol`.
pub fn in_fundamental_domain(z: (f64, f64), tol: f64) -> bool {
    z.0.abs() <= 0.5 + tol && z.0 * z.0 + z.1 * z.1 >= 1.0 - tol
}

/// Right reduction `g -> g gamma`, `gamma in SL_2(Z)`, moving `g^{-1} i` into
/// the fundamental domain by translations and the inversion `z -> -1/z`.
pub fn reduce(g: &Mat2) -> Result<(Mat2, IMat2)> {
    let det = g.det();
    if (det - 1.0).abs() > 1e-6 {
        return Err(Error::NonUnimodular(det));
    }
    let cap = (10.0 * (1.0 + g.frobenius().max(1.0).ln())).ceil() as usize;
    let mut g = *g;
    let mut gamma = INT_IDENTITY;
    for _ in 0..=cap {
        let w = base_point(&g);
        if w.0.abs() > 0.5 + 1e-12 {
            let n = w.0.round();
            // w -> w - n is g -> g T^n
            g = g.mul(&Mat2::u(n));
            gamma = imul(gamma, [[1, n as i64], [0, 1]]);
        } else if w.0 * w.0 + w.1 * w.1 < 1.0 - 1e-12 {
            // w -> -1/w is g -> g S^{-1}
            g = g.mul(&Mat2::new(0.0, 1.0, -1.0, 0.0));
            gamma = imul(gamma, [[0, 1], [-1, 0]]);
        } else {
            return Ok((g, gamma));
        }
    }
    Err(Error::IterationCap(cap))
}

/// A point of `X` through reduced representatives of its three factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GPoint {
    pub g: [Mat2; 3],
    /// `g_j^{-1} i`, in the fundamental domain.
    pub z: [(f64, f64); 3],
}

impl GPoint {
    pub fn new(g: [Mat2; 3]) -> Result<Self> {
        let mut out = [Mat2::IDENTITY; 3];
        for j in 0..3 {
            out[j] = reduce(&g[j])?.0;
        }
        Ok(Self::from_reduced(out))
    }

    fn from_reduced(g: [Mat2; 3]) -> Self {
        GPoint { g, z: [base_point(&g[0]), base_point(&g[1]), base_point(&g[2])] }
    }

    pub fn identity() -> Self {
        Self::from_reduced([Mat2::IDENTITY; 3])
    }

    /// `(h, h, h) x`, reduced.
    pub fn act(&self, h: &Mat2) -> Result<Self> {
        GPoint::new([h.mul(&self.g[0]), h.mul(&self.g[1]), h.mul(&self.g[2])])
    }

    pub fn is_reduced(&self) -> [bool; 3] {
        self.z.map(|z| in_fundamental_domain(z, FD_TOL))
    }

    /// 12 matrix entries followed by 3 reduced flags.
    pub fn csv_fields(&self) -> Vec<String> {
        let mut v: Vec<String> = self.g.iter().flat_map(|m| m.entries()).map(|e| format!("{e:.12e}")).collect();
        v.extend(self.is_reduced().iter().map(|&b| (b as u8).to_string()));
        v
    }
}

/// `a_T u_r x0` with `u_r` applied once, then `T` single `a_1` steps, each
/// followed by reduction, so entries stay bounded in terms of the cusp
/// height of the visited points.
pub fn arc_point(x0: &GPoint, t: u32, r: f64) -> Result<GPoint> {
    let mut x = if r == 0.0 { *x0 } else { x0.act(&Mat2::u(r))? };
    let a1 = Mat2::a(1.0);
    for _ in 0..t {
        x = x.act(&a1)?;
    }
    Ok(x)
}

/// `nR` equispaced parameters `(i + 1/2) / nR` of `[0, 1]`.
pub fn equispaced(n: usize) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
}

/// Arc points for all `rs`, in order.
pub fn arc_points(x0: &GPoint, t: u32, rs: &[f64]) -> Result<Vec<GPoint>> {
    rs.par_iter().map(|&r| arc_point(x0, t, r)).collect()
}

/// One factor of a Haar-random point: `w` with density `dx dy / y^2` on the
/// fundamental domain truncated at [`HAAR_HEIGHT_CAP`], rotation uniform;
/// `g = (n(x) a(y) k(theta))^{-1}`.
fn haar_factor<R: Rng + ?Sized>(rng: &mut R) -> Mat2 {
    let y0 = 3f64.sqrt() / 2.0;
    let (x, y) = loop {
        let x = rng.gen_range(-0.5..0.5);
        let u: f64 = rng.gen();
        // inverse CDF of dy / y^2 on [y0, cap]
        let y = 1.0 / (1.0 / y0 - u * (1.0 / y0 - 1.0 / HAAR_HEIGHT_CAP));
        if x * x + y * y >= 1.0 {
            break (x, y);
        }
    };
    let theta = rng.gen_range(0.0..2.0 * PI);
    let s = y.sqrt();
    let h = Mat2::new(1.0, x, 0.0, 1.0).mul(&Mat2::new(s, 0.0, 0.0, 1.0 / s)).mul(&Mat2::new(theta.cos(), -theta.sin(), theta.sin(), theta.cos()));
    h.inv_unimodular()
}

pub fn haar_sample<R: Rng + ?Sized>(rng: &mut R) -> GPoint {
    let g = [haar_factor(rng), haar_factor(rng), haar_factor(rng)];
    // already reduced up to rounding; reduce() only fixes boundary rounding
    GPoint::new(g).unwrap_or_else(|_| GPoint::from_reduced(g))
}

/// Haar mass lost to the cusp truncation, `3 / (pi cap)`.
pub fn haar_deficit() -> f64 {
    3.0 / (PI * HAAR_HEIGHT_CAP)
}

pub fn haar_samples<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<GPoint> {
    (0..n).map(|_| haar_sample(rng)).collect()
}

/// Smooth plateau in `(Re w, Im w)`: 1 on `[xc - xh, xc + xh] x [y_lo, y_hi]`,
/// 0 outside the `ramp`-enlargement. With `xh >= 1/2` the function does
/// not depend on `Re w` (it is then continuous across the glued sides).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bump {
    pub x_centre: f64,
    pub x_half: f64,
    pub y_lo: f64,
    pub y_hi: f64,
    pub ramp: f64,
}

/// `C^infinity` step from 0 (`t <= 0`) to 1 (`t >= 1`).
fn smooth_step(t: f64) -> f64 {
    let e = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let (a, b) = (e(t), e(1.0 - t));
    a / (a + b)
}

fn plateau(v: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    smooth_step((v - lo + ramp) / ramp) * smooth_step((hi + ramp - v) / ramp)
}

impl Bump {
    pub fn new(x_centre: f64, x_half: f64, y_lo: f64, y_hi: f64, ramp: f64) -> Result<Self> {
        if !(ramp > 0.0 && y_lo < y_hi && x_half >= 0.0) || y_hi + ramp > HAAR_HEIGHT_CAP {
            return Err(Error::InvalidConfig("bump needs ramp > 0, y_lo < y_hi, x_half >= 0 and support below the cusp cap".into()));
        }
        Ok(Bump { x_centre, x_half, y_lo, y_hi, ramp })
    }

    /// Plateau in `Im w` only.
    pub fn height(y_lo: f64, y_hi: f64, ramp: f64) -> Result<Self> {
        Self::new(0.0, 0.5, y_lo, y_hi, ramp)
    }

    pub fn eval(&self, w: (f64, f64)) -> f64 {
        let fy = plateau(w.1, self.y_lo, self.y_hi, self.ramp);
        if self.x_half >= 0.5 || fy == 0.0 {
            return fy;
        }
        fy * plateau(w.0, self.x_centre - self.x_half, self.x_centre + self.x_half, self.ramp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    Constant,
    /// A bump on one factor (0-based).
    Factor(usize, Bump),
    /// Product of per-factor bumps.
    Product(Vec<(usize, Bump)>),
}

impl TestFunction {
    pub fn eval(&self, x: &GPoint) -> f64 {
        match self {
            TestFunction::Constant => 1.0,
            TestFunction::Factor(j, b) => b.eval(x.z[*j]),
            TestFunction::Product(ps) => ps.iter().map(|(j, b)| b.eval(x.z[*j])).product(),
        }
    }
}

/// The fixed suite: plateau bumps on `Im w in [1.25, 4]` multiplied over the
/// factor pairs (1,2), (2,3), (1,3). On the diagonal orbit the two factors
/// agree, so the orbit mean is `E[psi^2]` against `E[psi]^2` for Haar.
pub fn suite() -> Vec<(String, TestFunction)> {
    let psi = Bump::height(1.25, 4.0, 0.2).expect("valid bump");
    vec![
        ("bump12".into(), TestFunction::Product(vec![(0, psi), (1, psi)])),
        ("bump23".into(), TestFunction::Product(vec![(1, psi), (2, psi)])),
        ("bump13".into(), TestFunction::Product(vec![(0, psi), (2, psi)])),
    ]
}

/// Mean and standard error, summed in index order.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Discrepancy {
    pub arc_mean: f64,
    pub arc_se: f64,
    pub haar_mean: f64,
    pub haar_se: f64,
    pub value: f64,
}

/// Discrepancy of `phi` between precomputed arc points and Haar samples.
pub fn discrepancy_of(phi: &TestFunction, arc: &[GPoint], haar: &[GPoint]) -> Discrepancy {
    let va: Vec<f64> = arc.par_iter().map(|x| phi.eval(x)).collect();
    let vh: Vec<f64> = haar.par_iter().map(|x| phi.eval(x)).collect();
    let (arc_mean, arc_se) = mean_se(&va);
    let (haar_mean, haar_se) = mean_se(&vh);
    Discrepancy { arc_mean, arc_se, haar_mean, haar_se, value: (arc_mean - haar_mean).abs() }
}

/// `|mean_r phi(a_T u_r x0) - mean phi(Haar)|` with `nR` equispaced `r`.
pub fn discrepancy<R: Rng + ?Sized>(x0: &GPoint, t: u32, n_r: usize, phi: &TestFunction, n_haar: usize, rng: &mut R) -> Result<Discrepancy> {
    if n_r == 0 || n_haar == 0 {
        return Err(Error::InvalidConfig("nR and nHaar must be positive".into()));
    }
    let arc = arc_points(x0, t, &equispaced(n_r))?;
    let haar = haar_samples(n_haar, rng);
    Ok(discrepancy_of(phi, &arc, &haar))
}

/// Intermediate subgroups `H <= M <= G` (factors 0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubgroupCandidate {
    FullDiagonal,
    PairDiagonal(usize, usize),
    Ambient,
}

impl SubgroupCandidate {
    pub fn all() -> [SubgroupCandidate; 5] {
        use SubgroupCandidate::*;
        [FullDiagonal, PairDiagonal(0, 1), PairDiagonal(1, 2), PairDiagonal(0, 2), Ambient]
    }
}

impl fmt::Display for SubgroupCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubgroupCandidate::FullDiagonal => write!(f, "diagonal"),
            SubgroupCandidate::PairDiagonal(i, j) => write!(f, "pair{}{}", i + 1, j + 1),
            SubgroupCandidate::Ambient => write!(f, "ambient"),
        }
    }
}

/// Frobenius distance from `m` to integer matrices with entries in `[-h, h]`.
pub fn distance_to_integers(m: &Mat2, h: i64) -> f64 {
    let hf = h as f64;
    m.entries().iter().map(|&e| e - e.round().clamp(-hf, hf)).map(|d| d * d).sum::<f64>().sqrt()
}

/// Proxy distance to a periodic orbit of `cand` through rational points of
/// height `<= h`.
pub fn orbit_proximity(x: &GPoint, cand: SubgroupCandidate, h: i64) -> f64 {
    let pair = |i: usize, j: usize| {
        if x.g[i] == x.g[j] || x.g[i] == x.g[j].neg() {
            // g^{-1} g = I exactly; the float product would leave rounding
            return 0.0;
        }
        distance_to_integers(&x.g[j].inv_unimodular().mul(&x.g[i]), h)
    };
    match cand {
        SubgroupCandidate::PairDiagonal(i, j) => pair(i, j),
        SubgroupCandidate::FullDiagonal => pair(0, 1).max(pair(0, 2)),
        SubgroupCandidate::Ambient => 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DichotomyConfig {
    /// The exponent constant `a` of the thresholds.
    pub a: f64,
    /// The rate constant `k` of part (1).
    pub k: f64,
    pub search_height: i64,
    pub n_r: usize,
    pub n_haar: usize,
    /// Arc probes at `tau in [T - tau_window, T]`.
    pub tau_window: u32,
    pub n_probe_r: usize,
}

impl Default for DichotomyConfig {
    fn default() -> Self {
        DichotomyConfig { a: 1.0, k: 0.1, search_height: 10, n_r: 20000, n_haar: 100000, tau_window: 1, n_probe_r: 16 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub id: String,
    pub disc: Discrepancy,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProximityRow {
    pub candidate: SubgroupCandidate,
    /// At `x0`.
    pub at_x0: f64,
    /// Least over the arc probes.
    pub on_arc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DichotomyReport {
    pub t: u32,
    pub r: u32,
    pub rows: Vec<SuiteRow>,
    pub proximity: Vec<ProximityRow>,
    /// `e^{-k R}`.
    pub threshold_equi: f64,
    /// `T^a e^{-2T + a R}`.
    pub threshold_orbit: f64,
    /// Every suite discrepancy is below `threshold_equi`.
    pub part1: bool,
    /// Some proper candidate has `x0`-proximity below `threshold_orbit`.
    pub part2: bool,
    pub haar_deficit: f64,
}

pub fn dichotomy_report<R: Rng + ?Sized>(
    x0: &GPoint,
    t: u32,
    r: u32,
    suite: &[(String, TestFunction)],
    cfg: &DichotomyConfig,
    rng: &mut R,
) -> Result<DichotomyReport> {
    if cfg.n_r == 0 || cfg.n_haar == 0 {
        return Err(Error::InvalidConfig("nR and nHaar must be positive".into()));
    }
    let arc = arc_points(x0, t, &equispaced(cfg.n_r))?;
    let haar = haar_samples(cfg.n_haar, rng);
    let threshold_equi = (-cfg.k * r as f64).exp();
    let threshold_orbit = (t.max(1) as f64).powf(cfg.a) * (-2.0 * t as f64 + cfg.a * r as f64).exp();
    let rows: Vec<SuiteRow> = suite
        .iter()
        .map(|(id, phi)| {
            let disc = discrepancy_of(phi, &arc, &haar);
            SuiteRow { id: id.clone(), disc, within: disc.value <= threshold_equi }
        })
        .collect();
    let probe_rs = equispaced(cfg.n_probe_r);
    let mut probes = Vec::new();
    for tau in t.saturating_sub(cfg.tau_window)..=t {
        probes.extend(arc_points(x0, tau, &probe_rs)?);
    }
    let proximity: Vec<ProximityRow> = SubgroupCandidate::all()
        .into_iter()
        .map(|c| ProximityRow {
            candidate: c,
            at_x0: orbit_proximity(x0, c, cfg.search_height),
            on_arc: probes.iter().map(|p| orbit_proximity(p, c, cfg.search_height)).fold(f64::INFINITY, f64::min),
        })
        .collect();
    let part1 = rows.iter().all(|row| row.within);
    let part2 = proximity.iter().any(|p| p.candidate != SubgroupCandidate::Ambient && p.at_x0 <= threshold_orbit);
    Ok(DichotomyReport { t, r, rows, proximity, threshold_equi, threshold_orbit, part1, part2, haar_deficit: haar_deficit() })
}

/// The fixed generic starting point: `g_j = exp(1e-3 X_j)` with traceless
/// `X_j` built from square roots of primes.
pub fn generic_x0() -> GPoint {
    let s = |p: f64| p.sqrt();
    let xs = [
        Mat2::new(s(2.0), s(3.0), s(5.0), -s(2.0)),
        Mat2::new(-s(7.0), s(11.0), -s(13.0), s(7.0)),
        Mat2::new(s(17.0) - 3.0, -s(19.0), s(23.0), 3.0 - s(17.0)),
    ];
    let g = xs.map(|x| {
        let y = Mat2::new(1e-3 * x.a, 1e-3 * x.b, 1e-3 * x.c, 1e-3 * x.d);
        Mat2::exp_traceless(&y)
    });
    GPoint::new(g).expect("near-identity point reduces")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_sl2<R: Rng>(rng: &mut R) -> Mat2 {
        let x = Mat2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
        let x = Mat2 { d: -x.a, ..x };
        Mat2::exp_traceless(&x).mul(&Mat2::a(rng.gen_range(-2.0..2.0)))
    }

    #[test]
    fn translation_reduces_to_identity() {
        let (g, gamma) = reduce(&Mat2::new(1.0, 5.0, 0.0, 1.0)).unwrap();
        assert!(g.max_abs_diff(&Mat2::IDENTITY) < 1e-12);
        assert_eq!(gamma, [[1, -5], [0, 1]]);
        let w = base_point(&g);
        assert!((w.0).abs() < 1e-12 && (w.1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_input_is_fixed() {
        let (g, gamma) = reduce(&Mat2::IDENTITY).unwrap();
        assert_eq!(g, Mat2::IDENTITY);
        assert_eq!(gamma, INT_IDENTITY);
    }

    #[test]
    fn non_unimodular_rejected() {
        assert!(matches!(reduce(&Mat2::new(2.0, 0.0, 0.0, 1.0)), Err(Error::NonUnimodular(_))));
    }

    #[test]
    fn reduction_is_right_coset_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let g = random_sl2(&mut rng);
            let (g0, gamma) = reduce(&g).unwrap();
            assert!(g.mul(&Mat2::from_int(gamma)).max_abs_diff(&g0) < 1e-9);
            assert!(in_fundamental_domain(base_point(&g0), FD_TOL));
            // random gamma0 of height <= 10 as a word in T^n and S
            let mut gamma0 = Mat2::IDENTITY;
            for _ in 0..4 {
                gamma0 = gamma0.mul(&Mat2::u(rng.gen_range(-3..=3) as f64)).mul(&Mat2::new(0.0, -1.0, 1.0, 0.0));
                if gamma0.entries().iter().any(|e| e.abs() > 10.0) {
                    break;
                }
            }
            let (g1, _) = reduce(&g.mul(&gamma0)).unwrap();
            let d = g1.max_abs_diff(&g0).min(g1.max_abs_diff(&g0.neg()));
            let (w0, w1) = (base_point(&g0), base_point(&g1));
            // points on the boundary of the domain have two representatives
            let boundary = (w0.0.abs() - 0.5).abs() < 1e-9 || (w0.0 * w0.0 + w0.1 * w0.1 - 1.0).abs() < 1e-9;
            assert!(d < 1e-8 || boundary, "{d} {w0:?} {w1:?}");
        }
    }

    #[test]
    fn arc_from_zero_is_start() {
        let x0 = generic_x0();
        assert_eq!(arc_point(&x0, 0, 0.0).unwrap(), x0);
    }

    #[test]
    fn arc_splits_at_u_step() {
        let x0 = generic_x0();
        for &r in &[0.1, 0.37, 0.9] {
            let a = arc_point(&x0, 7, r).unwrap();
            let b = arc_point(&arc_point(&x0, 0, r).unwrap(), 7, 0.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn stepwise_matches_direct_product() {
        let x0 = generic_x0();
        let step = arc_point(&x0, 5, 0.3).unwrap();
        let h = Mat2::a(5.0).mul(&Mat2::u(0.3));
        let direct = GPoint::new([h.mul(&x0.g[0]), h.mul(&x0.g[1]), h.mul(&x0.g[2])]).unwrap();
        for j in 0..3 {
            let d = step.g[j].max_abs_diff(&direct.g[j]).min(step.g[j].max_abs_diff(&direct.g[j].neg()));
            assert!(d < 1e-6, "{d}");
        }
    }

    #[test]
    fn determinant_survives_thirty_steps() {
        let x = arc_point(&generic_x0(), 30, 0.61).unwrap();
        assert!(x.g.iter().all(|g| (g.det() - 1.0).abs() <= 1e-7));
        assert_eq!(x.is_reduced(), [true; 3]);
    }

    #[test]
    fn diagonal_arc_stays_diagonal() {
        let x0 = GPoint::identity();
        for t in [0, 3, 9, 15] {
            for r in equispaced(100) {
                let x = arc_point(&x0, t, r).unwrap();
                for c in SubgroupCandidate::all() {
                    assert_eq!(orbit_proximity(&x, c, 10), 0.0);
                }
            }
        }
    }

    #[test]
    fn proximity_examples() {
        let g = Mat2::a(0.3).mul(&Mat2::u(0.2));
        let h = Mat2::a(-0.4);
        let x = GPoint { g: [g, g, h], z: [base_point(&g), base_point(&g), base_point(&h)] };
        assert_eq!(orbit_proximity(&x, SubgroupCandidate::PairDiagonal(0, 1), 5), 0.0);
        let full = orbit_proximity(&x, SubgroupCandidate::FullDiagonal, 5);
        assert!((full - distance_to_integers(&h.inv_unimodular().mul(&g), 5)).abs() < 1e-15);
        let y = GPoint { g: [Mat2::u(0.5), Mat2::IDENTITY, Mat2::IDENTITY], z: [(0.5, 1.0), (0.0, 1.0), (0.0, 1.0)] };
        assert!((orbit_proximity(&y, SubgroupCandidate::PairDiagonal(0, 1), 1) - 0.5).abs() < 1e-15);
        assert_eq!(orbit_proximity(&y, SubgroupCandidate::Ambient, 1), 0.0);
    }

    #[test]
    fn haar_samples_are_reduced_and_deterministic() {
        let a = haar_samples(100, &mut ChaCha8Rng::seed_from_u64(9));
        let b = haar_samples(100, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.is_reduced() == [true; 3]));
    }

    #[test]
    fn constant_has_zero_discrepancy() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = discrepancy(&generic_x0(), 4, 50, &TestFunction::Constant, 100, &mut rng).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.haar_mean, 1.0);
    }

    #[test]
    fn bump_is_a_plateau() {
        let b = Bump::height(1.25, 4.0, 0.2).unwrap();
        assert_eq!(b.eval((0.1, 2.0)), 1.0);
        assert_eq!(b.eval((0.1, 1.0)), 0.0);
        assert_eq!(b.eval((0.1, 4.3)), 0.0);
        let v = b.eval((0.0, 1.15));
        assert!(v > 0.0 && v < 1.0);
        assert!(Bump::height(2.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn exp_of_nilpotent_is_unipotent() {
        let e = Mat2::exp_traceless(&Mat2::new(0.0, 0.7, 0.0, 0.0));
        assert!(e.max_abs_diff(&Mat2::u(0.7)) < 1e-15);
        let e = Mat2::exp_traceless(&Mat2::new(0.5, 0.0, 0.0, -0.5));
        assert!(e.max_abs_diff(&Mat2::a(0.5)) < 1e-15);
    }
}
