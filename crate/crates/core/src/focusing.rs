//! Focused measures on the linearised model `Phi = sl_2 (x) F^m` (`d = 2`):
//! balls are additive, `B_b(y) = y + B_b^Phi`, and `exp(v+V).y` becomes
//! `y + v + V`.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::boxfit::{search_box, BoxFitting};
use crate::error::{Error, Result};
use crate::localfield::{LocalField, Scale};
use crate::rep::{log_box_covering_number, phi_norm, PhiCloud, RepBox};

/// Finite measure on `Phi`: a cloud with nonnegative weights, total `<= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedMeasure<F: LocalField> {
    pub cloud: PhiCloud<F>,
    pub weights: Vec<f64>,
}

impl<F: LocalField> WeightedMeasure<F> {
    pub fn new(cloud: PhiCloud<F>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != cloud.len() {
            return Err(Error::DimensionMismatch { expected: cloud.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!("total weight {total} exceeds 1")));
        }
        Ok(WeightedMeasure { cloud, weights })
    }

    /// Equal weights `total / n`.
    pub fn uniform(cloud: PhiCloud<F>, total: f64) -> Result<Self> {
        let n = cloud.len().max(1);
        let w = vec![total / n as f64; cloud.len()];
        Self::new(cloud, w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        WeightedMeasure {
            cloud: PhiCloud { rep: self.cloud.rep, points: self.cloud.points.select(idx.iter().copied()) },
            weights: idx.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    /// Pushforward under a coordinate map on `Phi`.
    pub fn map(&self, f: impl FnMut(&[F::Elem], &mut [F::Elem])) -> Self {
        let rep = self.cloud.rep;
        WeightedMeasure { cloud: PhiCloud { rep, points: self.cloud.points.map(rep.dim(), f) }, weights: self.weights.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocusParams {
    pub alpha: f64,
    pub eps_prime: f64,
    /// The constant `A >= 1`.
    pub a: f64,
    /// `delta_1 = q^{-k1}`.
    pub k1: u32,
    /// `delta_2 = q^{-k2}`, `k2 > k1`.
    pub k2: u32,
    /// Neighbourhood factor: points within `nhd_factor * delta_2` of the box count.
    pub nhd_factor: f64,
    /// Negligible-part budget `delta_2^kappa`.
    pub kappa: f64,
    pub anchor_budget: usize,
}

impl FocusParams {
    pub fn new(alpha: f64, k1: u32, k2: u32) -> Self {
        FocusParams { alpha, eps_prime: 0.25, a: 2f64.exp(), k1, k2, nhd_factor: 2.0, kappa: 0.05, anchor_budget: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k2 <= self.k1 {
            return Err(Error::InvalidConfig(format!("need k2 > k1, got k1={} k2={}", self.k1, self.k2)));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime < 1.0) || self.a < 1.0 || self.alpha <= 0.0 {
            return Err(Error::InvalidConfig("need alpha > 0, 0 < eps' < 1, A >= 1".into()));
        }
        Ok(())
    }

    pub fn delta1<F: LocalField>(&self, f: &F) -> f64 {
        f.q_pow(-(self.k1 as i32))
    }

    pub fn delta2<F: LocalField>(&self, f: &F) -> f64 {
        f.q_pow(-(self.k2 as i32))
    }

    /// `ln(delta_1 / delta_2)`.
    pub fn log_ratio<F: LocalField>(&self, f: &F) -> f64 {
        (self.k2 - self.k1) as f64 * f.q().ln()
    }
}

/// Neighbour queries with cells of side `radius` (for `Q_p`, the ball is the cell).
pub struct BallIndex<'a, F: LocalField> {
    cloud: &'a PhiCloud<F>,
    scale: Scale,
    radius: f64,
    cells: FxHashMap<Vec<i64>, Vec<u32>>,
}

impl<'a, F: LocalField> BallIndex<'a, F> {
    /// Indexes the points `idx` of `cloud` for balls of radius `q^{-k}`.
    pub fn new(cloud: &'a PhiCloud<F>, idx: impl IntoIterator<Item = usize>, k: u32) -> Self {
        let f = cloud.field();
        let scale = Scale::ladder(k);
        let mut cells: FxHashMap<Vec<i64>, Vec<u32>> = FxHashMap::default();
        for i in idx {
            let key = cloud.point(i).iter().map(|&x| f.cell_index(x, &scale)).collect();
            cells.entry(key).or_default().push(i as u32);
        }
        BallIndex { cloud, scale, radius: scale.delta(&f), cells }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Calls `visit` for every indexed point within the radius of `z`.
    pub fn for_each_in_ball(&self, z: &[F::Elem], mut visit: impl FnMut(usize)) {
        let f = self.cloud.field();
        let rep = self.cloud.rep;
        let n = z.len();
        let centre: Vec<i64> = z.iter().map(|&x| f.cell_index(x, &self.scale)).collect();
        let mut diff = vec![f.zero(); n];
        let mut check = |key: &Vec<i64>| {
            if let Some(members) = self.cells.get(key) {
                for &i in members {
                    let x = self.cloud.point(i as usize);
                    diff.iter_mut().zip(x).zip(z).for_each(|((d, &a), &b)| *d = f.sub(a, b));
                    if phi_norm(&f, rep, &diff) <= self.radius {
                        visit(i as usize);
                    }
                }
            }
        };
        if f.is_exact() {
            check(&centre);
            return;
        }
        let mut off = vec![-1i64; n];
        let mut key = centre.clone();
        loop {
            for c in 0..n {
                key[c] = centre[c] + off[c];
            }
            check(&key);
            let mut c = 0;
            while c < n && off[c] == 1 {
                off[c] = -1;
                c += 1;
            }
            if c == n {
                break;
            }
            off[c] += 1;
        }
    }

    pub fn mass(&self, z: &[F::Elem], weights: &[f64]) -> f64 {
        let mut s = 0.0;
        let mut hits = Vec::new();
        self.for_each_in_ball(z, |i| hits.push(i));
        // fixed summation order regardless of hash iteration order
        hits.sort_unstable();
        for i in hits {
            s += weights[i];
        }
        s
    }
}

/// Indices of support points in the closed ball `B_r(y)`.
pub fn ball_members<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], r: f64) -> Vec<usize> {
    let f = mu.cloud.field();
    let rep = mu.cloud.rep;
    let mut diff = vec![f.zero(); rep.dim()];
    (0..mu.len())
        .filter(|&i| {
            diff.iter_mut().zip(mu.cloud.point(i)).zip(y).for_each(|((d, &a), &b)| *d = f.sub(a, b));
            phi_norm(&f, rep, &diff) <= r
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocusDiag {
    /// `ln N_{delta_2}(V)`.
    pub log_nv: f64,
    /// Bounds on `ln N_{delta_2}(V)` from the covering condition.
    pub log_nv_lo: f64,
    pub log_nv_hi: f64,
    pub ball_mass: f64,
    pub near_mass: f64,
    /// `near_mass / ball_mass` and its required lower bound.
    pub ratio: f64,
    pub ratio_needed: f64,
    pub inside_2delta1: bool,
    pub covering_ok: bool,
    pub concentration_ok: bool,
}

impl FocusDiag {
    pub fn passes(&self) -> bool {
        self.inside_2delta1 && self.covering_ok && self.concentration_ok
    }
}

/// Upper bound for the norm of points of `v + V`.
fn box_outer_radius<F: LocalField>(b: &RepBox<F>) -> f64 {
    let f = b.field;
    let radii = b.radii();
    let spread = if f.is_exact() { radii.iter().copied().fold(0.0, f64::max) } else { radii.iter().map(|r| r * r).sum::<f64>().sqrt() };
    let base = phi_norm(&f, b.rep, &b.base);
    if f.is_exact() {
        base.max(spread)
    } else {
        base + spread
    }
}

/// Focus conditions for a box `v + V` (with `v` relative to `y`), given the
/// support indices of `B_{delta_1}(y)`.
pub fn focus_check<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], ball: &[usize], b: &RepBox<F>, p: &FocusParams) -> Result<FocusDiag> {
    let f = mu.cloud.field();
    let ball_mass: f64 = ball.iter().map(|&i| mu.weights[i]).sum();
    if ball_mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let lr = p.log_ratio(&f);
    let log_nv = log_box_covering_number(b, Scale::ladder(p.k2));
    let log_nv_lo = -p.a.ln() + (p.alpha - p.eps_prime) * lr;
    let log_nv_hi = p.a.ln() + (p.alpha + p.eps_prime) * lr;
    let radius = p.nhd_factor * p.delta2(&f);
    let mut diff = vec![f.zero(); y.len()];
    let mut near_mass = 0.0;
    for &i in ball {
        diff.iter_mut().zip(mu.cloud.point(i)).zip(y).for_each(|((d, &a), &c)| *d = f.sub(a, c));
        if b.distance(&diff) <= radius {
            near_mass += mu.weights[i];
        }
    }
    let ratio = near_mass / ball_mass;
    let ratio_needed = (-p.a.ln() - p.eps_prime * lr).exp();
    Ok(FocusDiag {
        log_nv,
        log_nv_lo,
        log_nv_hi,
        ball_mass,
        near_mass,
        ratio,
        ratio_needed,
        inside_2delta1: box_outer_radius(b) <= 2.0 * p.delta1(&f) * (1.0 + 1e-12),
        covering_ok: log_nv >= log_nv_lo - 1e-9 && log_nv <= log_nv_hi + 1e-9,
        concentration_ok: ratio >= ratio_needed * (1.0 - 1e-12),
    })
}

/// Whether `mu` is `(delta_2, delta_1)`-focused at `y` with the box `y + v + V`.
pub fn is_focused<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], b: &RepBox<F>, p: &FocusParams) -> Result<FocusDiag> {
    let ball = ball_members(mu, y, p.delta1(&mu.cloud.field()));
    focus_check(mu, y, &ball, b, p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactDiag {
    pub focus: FocusDiag,
    /// Least `mu(B_{delta_2}(z))` over support points `z` of the ball.
    pub min_small_mass: f64,
    /// `A^{-1} (delta_1/delta_2)^{-eps'} delta_2^alpha`.
    pub small_needed: f64,
}

impl ExactDiag {
    pub fn passes(&self) -> bool {
        self.focus.passes() && self.min_small_mass >= self.small_needed * (1.0 - 1e-12)
    }
}

pub fn exact_check<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], ball: &[usize], b: &RepBox<F>, p: &FocusParams) -> Result<ExactDiag> {
    let focus = focus_check(mu, y, ball, b, p)?;
    let f = mu.cloud.field();
    let lr = p.log_ratio(&f);
    let small_needed = (-p.a.ln() - p.eps_prime * lr - p.alpha * p.k2 as f64 * f.q().ln()).exp();
    let mut min_small_mass = f64::INFINITY;
    let mut pending = Vec::new();
    for &z in ball {
        // a point's own atom already certifies the bound
        if mu.weights[z] >= small_needed {
            min_small_mass = min_small_mass.min(mu.weights[z].max(small_needed));
        } else {
            pending.push(z);
        }
    }
    if !pending.is_empty() {
        let reach = ball_members(mu, y, p.delta1(&f) + p.delta2(&f));
        let index = BallIndex::new(&mu.cloud, reach, p.k2);
        for z in pending {
            min_small_mass = min_small_mass.min(index.mass(mu.cloud.point(z), &mu.weights));
        }
    }
    Ok(ExactDiag { focus, min_small_mass, small_needed })
}

pub fn is_exactly_focused<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], b: &RepBox<F>, p: &FocusParams) -> Result<ExactDiag> {
    let ball = ball_members(mu, y, p.delta1(&mu.cloud.field()));
    exact_check(mu, y, &ball, b, p)
}

/// Greedy `r`-separated net of the support, in support order.
pub fn greedy_net<F: LocalField>(mu: &WeightedMeasure<F>, k: u32) -> Vec<usize> {
    let mut net_cloud = PhiCloud::new(mu.cloud.field(), mu.cloud.rep);
    let mut net = Vec::new();
    let mut cells: FxHashMap<Vec<i64>, Vec<u32>> = FxHashMap::default();
    let f = mu.cloud.field();
    let scale = Scale::ladder(k);
    for i in 0..mu.len() {
        if mu.weights[i] <= 0.0 {
            continue;
        }
        let z = mu.cloud.point(i);
        let covered = {
            let idx = BallIndex { cloud: &net_cloud, scale, radius: scale.delta(&f), cells: std::mem::take(&mut cells) };
            let mut hit = false;
            idx.for_each_in_ball(z, |_| hit = true);
            cells = idx.cells;
            hit
        };
        if !covered {
            let key = z.iter().map(|&x| f.cell_index(x, &scale)).collect();
            cells.entry(key).or_default().push(net.len() as u32);
            net_cloud.push(z);
            net.push(i);
        }
    }
    net
}

/// A net point with a box certifying focus there.
#[derive(Clone, Debug)]
pub struct FocusWitness<F: LocalField> {
    pub y_index: usize,
    pub rbox: RepBox<F>,
    pub diag: ExactDiag,
}

#[derive(Clone, Debug)]
pub struct ScanResult<F: LocalField> {
    pub net: Vec<usize>,
    /// Aligned with `net`.
    pub witnesses: Vec<Option<FocusWitness<F>>>,
}

impl<F: LocalField> ScanResult<F> {
    pub fn focused(&self) -> impl Iterator<Item = &FocusWitness<F>> {
        self.witnesses.iter().flatten()
    }

    pub fn focused_fraction(&self) -> f64 {
        self.focused().count() as f64 / self.net.len().max(1) as f64
    }

    pub fn exactly_focused_fraction(&self) -> f64 {
        self.focused().filter(|w| w.diag.passes()).count() as f64 / self.net.len().max(1) as f64
    }
}

/// The ambient box: every direction of `F^m` at radius `>= delta_1`.
fn is_ambient<F: LocalField>(b: &RepBox<F>, k1: u32) -> bool {
    b.rank() == b.rep.m && b.ks.iter().all(|&k| k <= k1)
}

/// Box search at every point of a `delta_1`-net. The ambient box, which
/// satisfies the displays trivially when `alpha = 3m`, is not accepted.
pub fn scan_focused<F: BoxFitting>(mu: &WeightedMeasure<F>, p: &FocusParams) -> ScanResult<F> {
    let f = mu.cloud.field();
    let net = greedy_net(mu, p.k1);
    let index = BallIndex::new(&mu.cloud, 0..mu.len(), p.k1);
    let witnesses = net
        .par_iter()
        .map(|&yi| {
            let y = mu.cloud.point(yi).to_vec();
            let mut ball = Vec::new();
            index.for_each_in_ball(&y, |i| ball.push(i));
            ball.sort_unstable();
            let mut local = PhiCloud::new(f, mu.cloud.rep);
            for &i in &ball {
                let x: Vec<F::Elem> = mu.cloud.point(i).iter().zip(&y).map(|(&a, &b)| f.sub(a, b)).collect();
                local.push(&x);
            }
            let verify = |b: &RepBox<F>| !is_ambient(b, p.k1) && focus_check(mu, &y, &ball, b, p).is_ok_and(|d| d.passes());
            let found = search_box(&local, Scale::ladder(p.k2), p.anchor_budget, verify).found?;
            let diag = exact_check(mu, &y, &ball, &found, p).ok()?;
            diag.focus.passes().then_some(FocusWitness { y_index: yi, rbox: found, diag })
        })
        .collect();
    ScanResult { net, witnesses }
}

/// `mu = ip + fs + negligible`, as a partition of the support.
#[derive(Clone, Debug)]
pub struct DecompResult<F: LocalField> {
    pub ip: Vec<usize>,
    pub fs: Vec<usize>,
    pub negligible: Vec<usize>,
    /// Trimming stopped at the negligible budget with offenders left in `ip`.
    pub budget_exceeded: bool,
    pub budget: f64,
    pub scan: ScanResult<F>,
}

impl<F: LocalField> DecompResult<F> {
    pub fn masses(&self, mu: &WeightedMeasure<F>) -> (f64, f64, f64) {
        let m = |idx: &[usize]| idx.iter().map(|&i| mu.weights[i]).sum::<f64>();
        (m(&self.ip), m(&self.fs), m(&self.negligible))
    }

    /// The three parts as measures on the same space.
    pub fn parts(&self, mu: &WeightedMeasure<F>) -> [WeightedMeasure<F>; 3] {
        [mu.select(&self.ip), mu.select(&self.fs), mu.select(&self.negligible)]
    }

    /// Which part each support point went to: 0 ip, 1 fs, 2 negligible.
    pub fn labels(&self, n: usize) -> Vec<u8> {
        let mut out = vec![0u8; n];
        self.fs.iter().for_each(|&i| out[i] = 1);
        self.negligible.iter().for_each(|&i| out[i] = 2);
        out
    }
}

/// Decomposition at scale `b = q^{-kb}` with `delta_2 = q^{-2l} b`.
///
/// `fs` is the restriction to the `delta_1`-balls of focused net points.
/// Among the remaining points, heaviest offending balls (mass above
/// `A b^alpha`) are trimmed atom by atom, heaviest first, into the
/// negligible part until none offends or the budget
/// `delta_2^kappa * mu(X)` would be exceeded. The rest is `ip`.
pub fn ip_fs_decompose<F: BoxFitting>(mu: &WeightedMeasure<F>, kb: u32, ell: u32, params: &FocusParams) -> Result<DecompResult<F>> {
    let p = FocusParams { k1: kb, k2: kb + 2 * ell, ..*params };
    p.validate()?;
    let f = mu.cloud.field();
    let n = mu.len();
    let scan = scan_focused(mu, &p);
    let mut in_fs = vec![false; n];
    let index = BallIndex::new(&mu.cloud, 0..n, p.k1);
    for w in scan.focused() {
        index.for_each_in_ball(mu.cloud.point(w.y_index), |i| in_fs[i] = true);
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_fs[i]).collect();
    let bound = p.a * (-(p.alpha) * kb as f64 * f.q().ln()).exp();
    let budget = (-p.kappa * p.k2 as f64 * f.q().ln()).exp() * mu.total();
    let rest_index = BallIndex::new(&mu.cloud, rest.iter().copied(), p.k1);
    let mut removed = vec![false; n];
    let ball_of = |z: usize, removed: &[bool]| {
        let mut hits = Vec::new();
        rest_index.for_each_in_ball(mu.cloud.point(z), |i| {
            if !removed[i] {
                hits.push(i)
            }
        });
        hits.sort_unstable();
        hits
    };
    let mut offenders: Vec<(f64, usize)> = rest
        .iter()
        .map(|&z| (ball_of(z, &removed).iter().map(|&i| mu.weights[i]).sum::<f64>(), z))
        .filter(|&(m, _)| m > bound)
        .collect();
    offenders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut neg_mass = 0.0;
    let mut budget_exceeded = false;
    'trim: for (_, z) in offenders {
        loop {
            let mut hits = ball_of(z, &removed);
            let mass: f64 = hits.iter().map(|&i| mu.weights[i]).sum();
            if mass <= bound {
                break;
            }
            hits.sort_by(|&a, &b| mu.weights[b].total_cmp(&mu.weights[a]).then(a.cmp(&b)));
            let heaviest = hits[0];
            if neg_mass + mu.weights[heaviest] > budget {
                budget_exceeded = true;
                break 'trim;
            }
            neg_mass += mu.weights[heaviest];
            removed[heaviest] = true;
        }
    }
    let fs: Vec<usize> = (0..n).filter(|&i| in_fs[i]).collect();
    let negligible: Vec<usize> = (0..n).filter(|&i| removed[i]).collect();
    let ip: Vec<usize> = (0..n).filter(|&i| !in_fs[i] && !removed[i]).collect();
    Ok(DecompResult { ip, fs, negligible, budget_exceeded, budget, scan })
}

/// Unbiased pair collision probability at `scale`:
/// `(sum_Q W_Q^2 - sum w_i^2) / (W^2 - sum w_i^2)` over grid cells `Q`.
/// `None` for fewer than two atoms.
fn collision<F: LocalField>(mu: &WeightedMeasure<F>, scale: Scale) -> Option<f64> {
    let f = mu.cloud.field();
    let cp = f.cell_param(&scale);
    let mut cells: FxHashMap<Vec<i64>, f64> = FxHashMap::default();
    for (p, &w) in mu.cloud.points.points().zip(&mu.weights) {
        *cells.entry(p.iter().map(|&x| f.cell_of(x, cp)).collect()).or_insert(0.0) += w;
    }
    // cell masses summed in a fixed order so the result is reproducible
    let mut masses: Vec<f64> = cells.into_values().collect();
    masses.sort_by(f64::total_cmp);
    let sum_sq_cells: f64 = masses.iter().map(|w| w * w).sum();
    let sum_sq_atoms: f64 = mu.weights.iter().map(|w| w * w).sum();
    let total = mu.total();
    let den = total * total - sum_sq_atoms;
    (den > 1e-300 * total * total).then(|| (sum_sq_cells - sum_sq_atoms) / den)
}

/// Collision dimension at scale `q^{-k}`: the slope `ln(C_k / C_{k+1}) / ln q`
/// of the pair collision probability over one ladder step. A single atom has
/// dimension 0; `None` when no pair collides at `q^{-k-1}`.
pub fn dimension_at_scale<F: LocalField>(mu: &WeightedMeasure<F>, scale: Scale) -> Option<f64> {
    let f = mu.cloud.field();
    if mu.len() < 2 {
        return Some(0.0);
    }
    let c0 = collision(mu, scale)?;
    let c1 = collision(mu, Scale::ladder(scale.k + 1))?;
    if c1 <= 0.0 {
        return None;
    }
    Some((c0 / c1).ln() / f.q_pow(1).ln())
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterpVerdict<E> {
    pub r: E,
    /// Dimension of `u_r mu` at `b_hat`.
    pub alpha1: Option<f64>,
    /// Dimension of `u_r mu` at `e^{-2l} b_hat`.
    pub alpha2: Option<f64>,
    /// Dimension of `a_l u_r mu` at `b_hat`.
    pub pushed: Option<f64>,
}

impl<E> InterpVerdict<E> {
    /// `pushed - (2/3 alpha1 + 1/3 alpha2)`; `None` if any estimate is unresolved.
    pub fn margin(&self) -> Option<f64> {
        Some(self.pushed? - (2.0 * self.alpha1? + self.alpha2?) / 3.0)
    }
}

/// Per-`r` check that `a_l u_r mu` has dimension at least
/// `2/3 alpha1 + 1/3 alpha2` at `b_hat = q^{-k_hat}`. The pushed measure is
/// restricted to `B_1` before its dimension is taken.
pub fn interpolation_audit<F: LocalField>(mu: &WeightedMeasure<F>, ell: u32, rs: &[F::Elem], k_hat: u32) -> Result<Vec<InterpVerdict<F::Elem>>> {
    let rep = mu.cloud.rep;
    if rep.d != 2 {
        return Err(Error::WrongDegree(rep.d));
    }
    let f = mu.cloud.field();
    let a = crate::rep::a_matrix(&f, ell as i32, 2)?;
    let coarse = Scale::ladder(k_hat);
    let fine = Scale::ladder(k_hat + 2 * ell);
    Ok(rs
        .par_iter()
        .map(|&r| {
            let u = crate::rep::u_matrix(&f, r, 2);
            let twisted = mu.map(|x, out| crate::rep::apply_point(&f, rep, &u, x, out));
            let pushed = twisted.map(|x, out| crate::rep::apply_point(&f, rep, &a, x, out));
            // mass pushed out of B_1 is dropped; the collision estimate is
            // normalized, so the rest is effectively rescaled to unit mass
            let inside: Vec<usize> = (0..pushed.len()).filter(|&i| phi_norm(&f, rep, pushed.cloud.point(i)) <= 1.0).collect();
            let pushed = pushed.select(&inside);
            InterpVerdict {
                r,
                alpha1: dimension_at_scale(&twisted, coarse),
                alpha2: dimension_at_scale(&twisted, fine),
                pushed: dimension_at_scale(&pushed, coarse),
            }
        })
        .collect())
}

/// Frame coefficients (all rows) of some points of a cloud, for neighbour
/// queries near a box: a point within `b` of `z` has every coefficient
/// within `b` of `z`'s, so only the cells meeting that range are scanned
/// before the true distance is checked.
struct CoeffIndex<'a, F: LocalField> {
    cloud: &'a PhiCloud<F>,
    ids: Vec<usize>,
    /// Row-major `rows x rank` coefficients, aligned with `ids`.
    coeffs: Vec<F::Elem>,
    width: usize,
}

impl<'a, F: LocalField> CoeffIndex<'a, F> {
    fn new(cloud: &'a PhiCloud<F>, frame: &crate::localfield::Frame<F::Elem>, ids: Vec<usize>) -> Self {
        let width = cloud.rep.rows() * frame.len();
        let mut coeffs = Vec::with_capacity(ids.len() * width);
        for &i in &ids {
            coeffs.extend(coords(cloud, frame, cloud.point(i)));
        }
        CoeffIndex { cloud, ids, coeffs, width }
    }

    fn coeff(&self, pos: usize) -> &[F::Elem] {
        &self.coeffs[pos * self.width..(pos + 1) * self.width]
    }

    /// Cells of side `q^{-k}`; a ball meets at most three per coordinate.
    fn level(&self, k: u32) -> LevelIndex<F> {
        let f = self.cloud.field();
        let scale = Scale::ladder(k);
        let cp = f.cell_param(&scale);
        let mut cells: FxHashMap<Vec<i64>, Vec<u32>> = FxHashMap::default();
        for pos in 0..self.ids.len() {
            let key = self.coeff(pos).iter().map(|&c| f.cell_of(c, cp)).collect();
            cells.entry(key).or_default().push(pos as u32);
        }
        LevelIndex { cp, radius: f.q_pow(-(k as i32)), cells }
    }

    /// `(mu(B_b(z)), #atoms)` for the indexed point at `pos`.
    fn mass(&self, level: &LevelIndex<F>, pos: usize, weights: &[f64]) -> (f64, usize) {
        let f = self.cloud.field();
        let rep = self.cloud.rep;
        let z = self.cloud.point(self.ids[pos]);
        let spans: Vec<(i64, i64)> = self.coeff(pos).iter().map(|&c| f.cell_span(c, level.radius * (1.0 + 1e-9), level.cp)).collect();
        let mut key: Vec<i64> = spans.iter().map(|s| s.0).collect();
        let mut diff = vec![f.zero(); z.len()];
        let (mut mass, mut count) = (0.0, 0);
        loop {
            if let Some(members) = level.cells.get(&key) {
                for &q in members {
                    let i = self.ids[q as usize];
                    diff.iter_mut().zip(self.cloud.point(i)).zip(z).for_each(|((d, &a), &b)| *d = f.sub(a, b));
                    if phi_norm(&f, rep, &diff) <= level.radius {
                        mass += weights[i];
                        count += 1;
                    }
                }
            }
            let mut c = 0;
            while c < key.len() && key[c] == spans[c].1 {
                key[c] = spans[c].0;
                c += 1;
            }
            if c == key.len() {
                break;
            }
            key[c] += 1;
        }
        (mass, count)
    }
}

fn coords<F: LocalField>(cloud: &PhiCloud<F>, frame: &crate::localfield::Frame<F::Elem>, x: &[F::Elem]) -> Vec<F::Elem> {
    let f = cloud.field();
    let (rows, m, rank) = (cloud.rep.rows(), cloud.rep.m, frame.len());
    let mut out = vec![f.zero(); rows * rank];
    for i in 0..rows {
        f.decompose(frame, &x[i * m..(i + 1) * m], &mut out[i * rank..(i + 1) * rank]);
    }
    out
}

/// Query points per ladder level in the multiple-of-three audit.
const AUDIT_QUERIES: usize = 1000;

/// At most `n` elements of `v`, evenly strided.
fn strided(v: &[usize], n: usize) -> Vec<usize> {
    let step = v.len().div_ceil(n).max(1);
    v.iter().step_by(step).copied().collect()
}

struct LevelIndex<F: LocalField> {
    cp: F::Cell,
    radius: f64,
    cells: FxHashMap<Vec<i64>, Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultipleAudit {
    pub alpha_est: f64,
    /// Nearest element of `{3, 6, ..., 3m}`.
    pub nearest: usize,
    pub gap: f64,
    /// Ladder window `[k_lo, k_hi]` resolved by the sample.
    pub window: (u32, u32),
    /// Interior support points used as centres.
    pub centres: usize,
    /// Box directions of length about `delta_1` (within one ladder step).
    pub long_dirs: usize,
    /// Every box direction is either about `delta_1` or about `delta_2`,
    /// and `3 * long_dirs` is the nearest multiple.
    pub profile_ok: bool,
}

/// Local dimension of an exactly focused, upper-regular measure near `y`
/// and its distance to a multiple of 3.
///
/// The estimate is the mass dimension `ln(M_lo / M_hi) / ln(b_lo / b_hi)`,
/// `M_k` the mean of `mu(B_{q^-k}(z) \ {z})` over support points `z` of
/// the box whose `q^{-k_lo}`-ball stays inside it in every coefficient.
/// Centres away from the box boundary see `mu(B_b(z)) ~ b^alpha` exactly,
/// where grid covering counts of a sample are biased by boundary cells.
/// The window runs from `k1 + 1` down to the finest `k` at which the
/// centres still have `min_neighbours` neighbours on average; upper regularity
/// `mu(B_b(z)) <= A b^alpha` is checked on `[k1, k_hi]`. Centres and
/// regularity points are evenly strided subsets of at most 1000 points.
pub fn multiple_of_three_audit<F: LocalField>(mu: &WeightedMeasure<F>, y: &[F::Elem], b: &RepBox<F>, p: &FocusParams, min_neighbours: f64) -> Result<MultipleAudit> {
    p.validate()?;
    let f = mu.cloud.field();
    let ball = ball_members(mu, y, p.delta1(&f));
    let exact = exact_check(mu, y, &ball, b, p)?;
    if !exact.passes() {
        return Err(Error::PreconditionFailed(format!("not exactly focused: {exact:?}")));
    }
    let reach = ball_members(mu, y, 2.0 * p.delta1(&f));
    let in_ball: Vec<bool> = reach.iter().map(|i| ball.binary_search(i).is_ok()).collect();
    let index = CoeffIndex::new(&mu.cloud, &b.frame, reach);
    let k_lo = p.k1 + 1;
    let margin = f.q_pow(-(k_lo as i32));
    let base: Vec<F::Elem> = b.base.iter().zip(y).map(|(&v, &c)| f.add(v, c)).collect();
    let base_c = coords(&mu.cloud, &b.frame, &base);
    let radii = b.radii();
    let rank = b.rank().max(1);
    let centres: Vec<usize> = (0..index.ids.len())
        .filter(|&pos| {
            in_ball[pos]
                && index.coeff(pos).iter().zip(&base_c).enumerate().all(|(t, (&c, &c0))| f.abs(f.sub(c, c0)) + margin <= radii[t % rank])
        })
        .collect();
    if centres.is_empty() {
        return Err(Error::PreconditionFailed("no support point lies inside the box".into()));
    }
    let centres = strided(&centres, AUDIT_QUERIES);
    let mut profile = Vec::new();
    for k in k_lo..=p.k2 {
        let level = index.level(k);
        let per: Vec<(f64, usize)> = centres.par_iter().map(|&pos| index.mass(&level, pos, &mu.weights)).collect();
        let mass: f64 = per.iter().zip(&centres).map(|(&(m, _), &pos)| m - mu.weights[index.ids[pos]]).sum();
        let pairs: usize = per.iter().map(|&(_, n)| n - 1).sum();
        if (pairs as f64) < min_neighbours * centres.len() as f64 {
            break;
        }
        profile.push((k, mass / centres.len() as f64));
    }
    if profile.len() < 2 {
        return Err(Error::PreconditionFailed(format!("sample resolves fewer than two scales below k1={}", p.k1)));
    }
    let (lo, hi) = (profile[0], profile[profile.len() - 1]);
    let alpha_est = (lo.1 / hi.1).ln() / ((hi.0 - lo.0) as f64 * f.q().ln());
    let ball_pos: Vec<usize> = (0..index.ids.len()).filter(|&pos| in_ball[pos]).collect();
    let ball_pos = strided(&ball_pos, AUDIT_QUERIES);
    for k in p.k1..=hi.0 {
        let level = index.level(k);
        let bound = p.a * (-p.alpha * k as f64 * f.q().ln()).exp() * (1.0 + 1e-12);
        let offender = ball_pos.par_iter().find_first(|&&pos| index.mass(&level, pos, &mu.weights).0 > bound);
        if let Some(&pos) = offender {
            return Err(Error::PreconditionFailed(format!("upper regularity fails at k={k} around support point {}", index.ids[pos])));
        }
    }
    let m = mu.cloud.rep.m;
    let nearest = ((alpha_est / 3.0).round() as usize).clamp(1, m) * 3;
    let long_dirs = b.ks.iter().filter(|&&k| k <= p.k1 + 1).count();
    let short_ok = b.ks.iter().all(|&k| k <= p.k1 + 1 || k + 1 >= p.k2);
    Ok(MultipleAudit {
        alpha_est,
        nearest,
        gap: (alpha_est - nearest as f64).abs(),
        window: (lo.0, hi.0),
        centres: centres.len(),
        long_dirs,
        profile_ok: short_ok && 3 * long_dirs == nearest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{planted_focus_measure, two_scale_measure};
    use crate::localfield::{Padic, Reals};
    use crate::rep::RepSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(rep: RepSpace, pts: &[Vec<f64>]) -> PhiCloud<Reals> {
        let mut c = PhiCloud::new(Reals, rep);
        pts.iter().for_each(|p| c.push(p));
        c
    }

    #[test]
    fn weights_are_validated() {
        let rep = RepSpace::new(2, 1);
        let c = cloud(rep, &[vec![0.0; 3], vec![0.1; 3]]);
        assert!(WeightedMeasure::new(c.clone(), vec![0.7, 0.7]).is_err());
        assert!(WeightedMeasure::new(c.clone(), vec![-0.1, 0.5]).is_err());
        assert!(WeightedMeasure::new(c.clone(), vec![0.5]).is_err());
        assert!(WeightedMeasure::new(c, vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn ball_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rep = RepSpace::new(2, 2);
        let mu = WeightedMeasure::uniform(PhiCloud::sample_uniform(Reals, rep, 3000, &mut rng), 1.0).unwrap();
        let index = BallIndex::new(&mu.cloud, 0..mu.len(), 1);
        for z in (0..mu.len()).step_by(97) {
            let y = mu.cloud.point(z).to_vec();
            let mut got = Vec::new();
            index.for_each_in_ball(&y, |i| got.push(i));
            got.sort_unstable();
            assert_eq!(got, ball_members(&mu, &y, index.radius()));
        }
    }

    #[test]
    fn padic_ball_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = Padic::new(3, 8).unwrap();
        let rep = RepSpace::new(2, 1);
        let mu = WeightedMeasure::uniform(PhiCloud::sample_uniform(f, rep, 2000, &mut rng), 1.0).unwrap();
        let index = BallIndex::new(&mu.cloud, 0..mu.len(), 2);
        for z in (0..mu.len()).step_by(53) {
            let y = mu.cloud.point(z).to_vec();
            let mut got = Vec::new();
            index.for_each_in_ball(&y, |i| got.push(i));
            got.sort_unstable();
            assert_eq!(got, ball_members(&mu, &y, index.radius()));
        }
    }

    #[test]
    fn greedy_net_is_separated_and_covers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rep = RepSpace::new(2, 1);
        let mu = WeightedMeasure::uniform(PhiCloud::sample_uniform(Reals, rep, 2000, &mut rng), 1.0).unwrap();
        let net = greedy_net(&mu, 1);
        let r = (-1f64).exp();
        for (a, &i) in net.iter().enumerate() {
            for &j in &net[a + 1..] {
                let d: Vec<f64> = mu.cloud.point(i).iter().zip(mu.cloud.point(j)).map(|(x, y)| x - y).collect();
                assert!(phi_norm(&Reals, rep, &d) > r);
            }
        }
        for z in 0..mu.len() {
            assert!(net.iter().any(|&i| {
                let d: Vec<f64> = mu.cloud.point(i).iter().zip(mu.cloud.point(z)).map(|(x, y)| x - y).collect();
                phi_norm(&Reals, rep, &d) <= r
            }));
        }
    }

    #[test]
    fn atom_has_dimension_zero_and_zero_margin() {
        let rep = RepSpace::new(2, 1);
        let mu = WeightedMeasure::uniform(cloud(rep, &vec![vec![0.2, -0.1, 0.3]; 5]), 1.0).unwrap();
        assert_eq!(dimension_at_scale(&mu, Scale::ladder(3)), Some(0.0));
        let v = interpolation_audit(&mu, 1, &[0.0, 0.5], 2).unwrap();
        assert!(v.iter().all(|x| x.margin() == Some(0.0)));
    }

    #[test]
    fn uniform_sample_has_collision_dimension_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rep = RepSpace::new(2, 1);
        let pts: Vec<Vec<f64>> = (0..40000).map(|_| (0..3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect()).collect();
        let mu = WeightedMeasure::uniform(cloud(rep, &pts), 1.0).unwrap();
        let d = dimension_at_scale(&mu, Scale::ladder(1)).unwrap();
        assert!((d - 3.0).abs() < 0.3, "{d}");
    }

    #[test]
    fn interpolation_needs_d_two() {
        let rep = RepSpace::new(3, 1);
        let mu = WeightedMeasure::uniform(PhiCloud::new(Reals, rep), 1.0).unwrap();
        assert!(matches!(interpolation_audit(&mu, 1, &[0.0], 2), Err(Error::WrongDegree(3))));
    }

    #[test]
    fn planted_measure_is_exactly_focused_at_its_centre() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rep = RepSpace::new(2, 2);
        let y = vec![0.0; rep.dim()];
        let (b, mu) = planted_focus_measure(rep, &y, &[vec![1.0, 0.0]], 4, 12, 4000, &mut rng).unwrap();
        let p = FocusParams::new(3.0, 4, 12);
        let d = is_exactly_focused(&mu, &y, &b, &p).unwrap();
        assert!(d.passes(), "{d:?}");
        // the ambient box is too large for the covering bounds
        let amb = RepBox::new(Reals, rep, y.clone(), &[vec![1.0, 0.0], vec![0.0, 1.0]], vec![4, 4]).unwrap();
        assert!(!is_focused(&mu, &y, &amb, &p).unwrap().covering_ok);
    }

    #[test]
    fn decomposition_partitions_the_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mu = two_scale_measure(40, 25, 6, &mut rng).unwrap();
        let p = FocusParams::new(3.0, 2, 4);
        let dec = ip_fs_decompose(&mu, 2, 1, &p).unwrap();
        let mut all: Vec<usize> = dec.ip.iter().chain(&dec.fs).chain(&dec.negligible).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..mu.len()).collect::<Vec<_>>());
        let (a, b, c) = dec.masses(&mu);
        assert!((a + b + c - mu.total()).abs() < 1e-12);
        assert!(c <= dec.budget + 1e-15);
    }

    #[test]
    fn audit_rejects_unfocused_box() {
        let rep = RepSpace::new(2, 1);
        let mu = WeightedMeasure::uniform(cloud(rep, &[vec![0.0; 3], vec![0.5; 3]]), 1.0).unwrap();
        let b = RepBox::new(Reals, rep, vec![0.0; 3], &[vec![1.0]], vec![4]).unwrap();
        let p = FocusParams::new(3.0, 4, 12);
        assert!(multiple_of_three_audit(&mu, &[0.0; 3], &b, &p, 20.0).is_err());
    }
}
