//! Projected covering profiles `r -> N_delta(pi(u_r Theta))`, the dichotomy
//! between improvement and box obstruction, and the trivial-estimate audit.

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashSet;

use crate::boxfit::{search_box, BoxFitting, BoxSearch};
use crate::covering::{count_key_buffer, covering_number, PointCloud};
use crate::error::{Error, Result};
use crate::localfield::{sample_unit_ball, LocalField, Scale};
use crate::rep::{box_nhd_filter, log_box_covering_number, u_matrix, PhiCloud, RepBox};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjConfig {
    pub alpha: f64,
    pub eps: f64,
    /// Exponent constant `C` of the box displays and the neighbourhood `C delta`.
    pub c_big: f64,
    /// Multiplicative constant `c` of the neighbourhood covering display.
    pub c_small: f64,
    pub scale: Scale,
    pub r_samples: usize,
    pub anchor_budget: usize,
    /// Stop each projected count at its threshold; classification is
    /// unchanged but recorded counts become `min(N, ceil(threshold))`.
    pub cap_counts: bool,
}

impl ProjConfig {
    pub fn new(alpha: f64, scale: Scale) -> Self {
        ProjConfig { alpha, eps: 0.15, c_big: 2.0, c_small: 1.0, scale, r_samples: 200, anchor_budget: 4, cap_counts: false }
    }
}

/// Which projection of `u_r Theta` to count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Proj {
    /// Highest-weight row.
    Plus,
    /// Rows of non-negative weight (`d = 2`).
    Zero,
}

/// Rows `0..keep` of `u_r x` for every point of the cloud.
pub fn project_twisted<F: LocalField>(theta: &PhiCloud<F>, r: F::Elem, keep: usize) -> PointCloud<F> {
    let f = theta.field();
    let (rows, m) = (theta.rep.rows(), theta.rep.m);
    let u = u_matrix(&f, r, theta.rep.d);
    theta.points.map(keep * m, |x, out| {
        for j in 0..keep {
            for c in 0..m {
                let mut s = f.zero();
                for i in j..rows {
                    s = f.add(s, f.mul(u.get(j, i), x[i * m + c]));
                }
                out[j * m + c] = s;
            }
        }
    })
}

/// `N_delta(pi(u_r Theta))` for each `r`, in input order.
pub fn projected_counts<F: LocalField>(theta: &PhiCloud<F>, rs: &[F::Elem], scale: Scale, proj: Proj) -> Result<Vec<usize>> {
    projected_counts_capped(theta, rs, scale, proj, None)
}

/// As [`projected_counts`], but each count stops at `cap` when given:
/// the result is exactly `min(N, cap)`, which decides `N >= cap`.
pub fn projected_counts_capped<F: LocalField>(
    theta: &PhiCloud<F>,
    rs: &[F::Elem],
    scale: Scale,
    proj: Proj,
    cap: Option<usize>,
) -> Result<Vec<usize>> {
    let keep = match proj {
        Proj::Plus => 1,
        Proj::Zero if theta.rep.d == 2 => 2,
        Proj::Zero => return Err(Error::WrongDegree(theta.rep.d)),
    };
    let w = keep * theta.rep.m;
    Ok(rs
        .par_iter()
        .map(|&r| match cap {
            None => {
                let mut keys = Vec::with_capacity(theta.len() * w);
                twisted_keys(theta, r, keep, scale, |k| {
                    keys.extend_from_slice(k);
                    true
                });
                count_key_buffer(w, &keys).0
            }
            Some(cap) => {
                let mut seen: FxHashSet<Vec<i64>> = FxHashSet::default();
                if cap > 0 {
                    twisted_keys(theta, r, keep, scale, |k| {
                        if !seen.contains(k) {
                            seen.insert(k.to_vec());
                        }
                        seen.len() < cap
                    });
                }
                seen.len().min(cap)
            }
        })
        .collect())
}

/// Feeds the cell key of rows `0..keep` of `u_r x` for each point to `each`
/// until it returns false.
fn twisted_keys<F: LocalField>(theta: &PhiCloud<F>, r: F::Elem, keep: usize, scale: Scale, mut each: impl FnMut(&[i64]) -> bool) {
    let f = theta.field();
    let (rows, m) = (theta.rep.rows(), theta.rep.m);
    let cp = f.cell_param(&scale);
    let u = u_matrix(&f, r, theta.rep.d);
    let coef: Vec<F::Elem> = (0..keep * rows).map(|t| u.get(t / rows, t % rows)).collect();
    let mut key = vec![0i64; keep * m];
    for x in theta.points.points() {
        for j in 0..keep {
            let row = &coef[j * rows..(j + 1) * rows];
            for c in 0..m {
                let mut s = f.zero();
                for i in j..rows {
                    s = f.add(s, f.mul(row[i], x[i * m + c]));
                }
                key[j * m + c] = f.cell_of(s, cp);
            }
        }
        if !each(&key) {
            return;
        }
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug)]
pub struct ProjProfile<E> {
    pub rs: Vec<E>,
    pub counts: Vec<usize>,
    pub threshold: f64,
    /// `N_delta(Theta)`.
    pub cover: usize,
    /// Whether `N_delta(Theta) >= delta^{-alpha}`.
    pub precondition_ok: bool,
}

impl<E> ProjProfile<E> {
    pub fn is_good(&self, i: usize) -> bool {
        self.counts[i] as f64 >= self.threshold
    }

    pub fn good_count(&self) -> usize {
        (0..self.counts.len()).filter(|&i| self.is_good(i)).count()
    }

    pub fn good_fraction(&self) -> f64 {
        self.good_count() as f64 / self.counts.len().max(1) as f64
    }

    pub fn exceptional_fraction(&self) -> f64 {
        1.0 - self.good_fraction()
    }

    /// 95% Wilson interval for the exceptional measure.
    pub fn exceptional_interval(&self) -> (f64, f64) {
        let n = self.counts.len();
        wilson_interval(n - self.good_count(), n, 1.96)
    }
}

/// Samples `n` parameters uniform in `B_1^F`, sequentially from `rng`.
pub fn sample_rs<F: LocalField, R: Rng + ?Sized>(f: &F, n: usize, rng: &mut R) -> Vec<F::Elem> {
    (0..n).map(|_| sample_unit_ball(f, 1, rng)[0]).collect()
}

/// Counts `N_delta(pi^+(u_r Theta))` for sampled `r` against `delta^{-alpha/(d+1)-eps}`.
pub fn projection_profile<F: LocalField, R: Rng + ?Sized>(theta: &PhiCloud<F>, cfg: &ProjConfig, rng: &mut R) -> Result<ProjProfile<F::Elem>> {
    if theta.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let f = theta.field();
    let big_l = cfg.scale.log_inv_delta(&f);
    let cover = covering_number(&theta.points, cfg.scale);
    let precondition_ok = (cover as f64).ln() >= cfg.alpha * big_l - 1e-9;
    let rs = sample_rs(&f, cfg.r_samples, rng);
    let threshold = (big_l * (cfg.alpha / theta.rep.rows() as f64 + cfg.eps)).exp();
    let cap = cfg.cap_counts.then(|| threshold.ceil() as usize);
    let counts = projected_counts_capped(theta, &rs, cfg.scale, Proj::Plus, cap)?;
    Ok(ProjProfile { rs, counts, threshold, cover, precondition_ok })
}

/// `log N_delta(Theta) / log(1/delta)`; the exponent the trivial estimate is
/// stated for.
pub fn measured_alpha<F: LocalField>(theta: &PhiCloud<F>, scale: Scale) -> f64 {
    let f = theta.field();
    (covering_number(&theta.points, scale).max(1) as f64).ln() / scale.log_inv_delta(&f)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrivialAudit {
    pub zero_threshold: f64,
    pub plus_threshold: f64,
    pub zero_counts: Vec<usize>,
    pub plus_counts: Vec<usize>,
    /// Fraction of `r` with `N(pi^0(u_r Theta)) < delta^{-2 alpha/3 + eps}`.
    pub zero_failure: f64,
    /// Fraction of `r` with `N(pi^+(u_r Theta)) < delta^{-alpha/3 + eps}`.
    pub plus_failure: f64,
}

pub fn trivial_estimate_audit<F: LocalField, R: Rng + ?Sized>(theta: &PhiCloud<F>, cfg: &ProjConfig, rng: &mut R) -> Result<TrivialAudit> {
    if theta.rep.d != 2 {
        return Err(Error::WrongDegree(theta.rep.d));
    }
    if theta.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let f = theta.field();
    let big_l = cfg.scale.log_inv_delta(&f);
    let rs = sample_rs(&f, cfg.r_samples, rng);
    let zero_threshold = (big_l * (2.0 * cfg.alpha / 3.0 - cfg.eps)).exp();
    let plus_threshold = (big_l * (cfg.alpha / 3.0 - cfg.eps)).exp();
    let cap = |t: f64| cfg.cap_counts.then(|| t.ceil() as usize);
    let zero_counts = projected_counts_capped(theta, &rs, cfg.scale, Proj::Zero, cap(zero_threshold))?;
    let plus_counts = projected_counts_capped(theta, &rs, cfg.scale, Proj::Plus, cap(plus_threshold))?;
    let frac = |counts: &[usize], t: f64| counts.iter().filter(|&&c| (c as f64) < t).count() as f64 / counts.len().max(1) as f64;
    Ok(TrivialAudit {
        zero_failure: frac(&zero_counts, zero_threshold),
        plus_failure: frac(&plus_counts, plus_threshold),
        zero_threshold,
        plus_threshold,
        zero_counts,
        plus_counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxVerdict {
    pub log_box_cover: f64,
    pub nhd_cover: usize,
    pub passes: bool,
}

/// Both box displays: `N(V)` within `delta^{-alpha +- C eps}` and
/// `N(Theta cap Nhd_{C delta}(v+V)) >= c delta^{-alpha + C eps}`.
pub fn verify_box<F: LocalField>(theta: &PhiCloud<F>, b: &RepBox<F>, cfg: &ProjConfig) -> BoxVerdict {
    let f = theta.field();
    let big_l = cfg.scale.log_inv_delta(&f);
    let slack = cfg.c_big * cfg.eps * big_l;
    let log_box_cover = log_box_covering_number(b, cfg.scale);
    let in_range = (log_box_cover - cfg.alpha * big_l).abs() <= slack + 1e-9;
    if !in_range {
        return BoxVerdict { log_box_cover, nhd_cover: 0, passes: false };
    }
    let near = box_nhd_filter(theta, b, cfg.c_big * cfg.scale.delta(&f));
    let nhd_cover = covering_number(&near.points, cfg.scale);
    let passes = (nhd_cover as f64).ln() >= cfg.c_small.ln() + cfg.alpha * big_l - slack - 1e-9;
    BoxVerdict { log_box_cover, nhd_cover, passes }
}

/// Heuristic search for a box satisfying both displays. The result is
/// re-verified before being returned.
pub fn find_representation_box<F: BoxFitting>(theta: &PhiCloud<F>, cfg: &ProjConfig) -> BoxSearch<F> {
    let mut s = search_box(theta, cfg.scale, cfg.anchor_budget, |b| verify_box(theta, b, cfg).passes);
    if s.found.as_ref().is_some_and(|b| !verify_box(theta, b, cfg).passes) {
        s.found = None;
    }
    s
}

/// Structured text block describing a box.
pub fn box_report<F: LocalField>(b: &RepBox<F>) -> String {
    let f = b.field;
    let mut s = String::new();
    for (j, (u, k)) in b.frame.dirs.iter().zip(&b.ks).enumerate() {
        let coords: Vec<String> = u.iter().map(|&x| f.format(x)).collect();
        s.push_str(&format!("BOX dir={j} radius=q^-{k} u=({})\n", coords.join(" ")));
    }
    if b.ks.is_empty() {
        s.push_str("BOX point\n");
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dichotomy {
    Obstructed,
    Improving,
    Inconclusive,
}

impl Dichotomy {
    pub fn label(&self) -> &'static str {
        match self {
            Dichotomy::Obstructed => "obstructed",
            Dichotomy::Improving => "improving",
            Dichotomy::Inconclusive => "inconclusive",
        }
    }
}

/// Obstructed: box found and exceptional fraction >= 0.9. Improving: good
/// fraction >= 0.8 and no box.
pub fn classify<E>(profile: &ProjProfile<E>, box_found: bool) -> Dichotomy {
    if box_found && profile.exceptional_fraction() >= 0.9 {
        Dichotomy::Obstructed
    } else if !box_found && profile.good_fraction() >= 0.8 {
        Dichotomy::Improving
    } else {
        Dichotomy::Inconclusive
    }
}

/// `count` points of `Nhd_noise(v+V)`: box samples plus a perturbation of
/// norm at most `noise` in every weight row.
pub fn planted_box_generator<F: LocalField, R: Rng + ?Sized>(b: &RepBox<F>, count: usize, noise: f64, rng: &mut R) -> PhiCloud<F> {
    let f = b.field;
    let m = b.rep.m;
    let mut c = PhiCloud::new(f, b.rep);
    c.points.data.reserve(count * b.rep.dim());
    let scale = f.radius_scalar(noise);
    for _ in 0..count {
        let mut x = b.sample(rng);
        if noise > 0.0 {
            for i in 0..b.rep.rows() {
                let e = sample_unit_ball(&f, m, rng);
                for c in 0..m {
                    x[i * m + c] = f.add(x[i * m + c], f.mul(e[c], scale));
                }
            }
        }
        c.push(&x);
    }
    c
}
