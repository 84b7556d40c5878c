//! The `(d+1)`-dimensional irreducible representation of `SL_2(F)` realised
//! as `Sym^d` in the monomial basis `e_i = x^{d-i} y^i`, the sum
//! `Phi = Phi_0 (x) F^m` as `(d+1) x m` matrices, and representation boxes.

use rand::Rng;

use rayon::prelude::*;

use crate::covering::{CenterSet, PointCloud};
use crate::error::{Error, Result};
use crate::localfield::{sample_unit_ball, Frame, LocalField, Scale};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RepSpace {
    pub d: usize,
    pub m: usize,
}

impl RepSpace {
    pub fn new(d: usize, m: usize) -> Self {
        RepSpace { d, m }
    }

    pub fn rows(&self) -> usize {
        self.d + 1
    }

    pub fn dim(&self) -> usize {
        (self.d + 1) * self.m
    }
}

/// Small dense square matrix over a field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SqMat<E> {
    pub n: usize,
    pub a: Vec<E>,
}

impl<E: Copy> SqMat<E> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> E {
        self.a[i * self.n + j]
    }
}

pub fn identity<F: LocalField>(f: &F, n: usize) -> SqMat<F::Elem> {
    let mut a = vec![f.zero(); n * n];
    for i in 0..n {
        a[i * n + i] = f.one();
    }
    SqMat { n, a }
}

pub fn mat_mul<F: LocalField>(f: &F, x: &SqMat<F::Elem>, y: &SqMat<F::Elem>) -> SqMat<F::Elem> {
    let n = x.n;
    let mut a = vec![f.zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = f.zero();
            for k in 0..n {
                s = f.add(s, f.mul(x.get(i, k), y.get(k, j)));
            }
            a[i * n + j] = s;
        }
    }
    SqMat { n, a }
}

/// Max-entry distance between two matrices.
pub fn mat_dist<F: LocalField>(f: &F, x: &SqMat<F::Elem>, y: &SqMat<F::Elem>) -> f64 {
    x.a.iter().zip(&y.a).map(|(&a, &b)| f.abs(f.sub(a, b))).fold(0.0, f64::max)
}

/// Determinant by cofactor expansion; matrices here are at most 4x4.
pub fn det<F: LocalField>(f: &F, x: &SqMat<F::Elem>) -> F::Elem {
    fn rec<F: LocalField>(f: &F, x: &SqMat<F::Elem>, rows: &[usize], cols: &mut Vec<usize>) -> F::Elem {
        let Some((&r, rest)) = rows.split_first() else {
            return f.one();
        };
        let mut s = f.zero();
        for idx in 0..cols.len() {
            let c = cols.remove(idx);
            let term = f.mul(x.get(r, c), rec(f, x, rest, cols));
            s = if idx % 2 == 0 { f.add(s, term) } else { f.sub(s, term) };
            cols.insert(idx, c);
        }
        s
    }
    let rows: Vec<usize> = (0..x.n).collect();
    rec(f, x, &rows, &mut rows.clone())
}

fn binomial(n: usize, k: usize) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// `u_r` on `Sym^d`: entry `(j, i) = C(i, j) r^{i-j}` for `j <= i`.
pub fn u_matrix<F: LocalField>(f: &F, r: F::Elem, d: usize) -> SqMat<F::Elem> {
    let n = d + 1;
    let mut pows = vec![f.one(); n];
    for i in 1..n {
        pows[i] = f.mul(pows[i - 1], r);
    }
    let mut a = vec![f.zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            a[j * n + i] = f.mul(f.from_i64(binomial(i, j)), pows[i - j]);
        }
    }
    SqMat { n, a }
}

/// `a_t = diag(varpi^{-t(d-2i)})`.
pub fn a_matrix<F: LocalField>(f: &F, t: i32, d: usize) -> Result<SqMat<F::Elem>> {
    let n = d + 1;
    let mut a = vec![f.zero(); n * n];
    for i in 0..n {
        a[i * n + i] = f.uniformizer_pow(-t * (d as i32 - 2 * i as i32))?;
    }
    Ok(SqMat { n, a })
}

/// `a_t M a_{-t}` computed entrywise as `M_{jk} varpi^{2t(j-k)}`, which stays
/// integral over `Q_p` whenever the result is.
pub fn conjugate_a<F: LocalField>(f: &F, t: i32, x: &SqMat<F::Elem>) -> Result<SqMat<F::Elem>> {
    let n = x.n;
    let mut a = x.a.clone();
    for j in 0..n {
        for k in 0..n {
            a[j * n + k] = f.shift(x.get(j, k), 2 * t * (j as i32 - k as i32))?;
        }
    }
    Ok(SqMat { n, a })
}

/// Left-multiplies one `(d+1) x m` point by `g`.
pub fn apply_point<F: LocalField>(f: &F, rep: RepSpace, g: &SqMat<F::Elem>, x: &[F::Elem], out: &mut [F::Elem]) {
    let (n, m) = (rep.rows(), rep.m);
    for i in 0..n {
        for c in 0..m {
            let mut s = f.zero();
            for k in 0..n {
                s = f.add(s, f.mul(g.get(i, k), x[k * m + c]));
            }
            out[i * m + c] = s;
        }
    }
}

/// A finite subset of `Phi`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiCloud<F: LocalField> {
    pub rep: RepSpace,
    pub points: PointCloud<F>,
}

impl<F: LocalField> PhiCloud<F> {
    pub fn new(field: F, rep: RepSpace) -> Self {
        PhiCloud { rep, points: PointCloud::new(field, rep.dim()) }
    }

    pub fn field(&self) -> F {
        self.points.field
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[F::Elem] {
        self.points.point(i)
    }

    pub fn push(&mut self, p: &[F::Elem]) {
        self.points.push(p)
    }

    /// `n` points uniform in `B_1^Phi`, row by row.
    pub fn sample_uniform<R: Rng + ?Sized>(field: F, rep: RepSpace, n: usize, rng: &mut R) -> Self {
        let mut c = Self::new(field, rep);
        c.points.data.reserve(n * rep.dim());
        for _ in 0..n {
            for _ in 0..rep.rows() {
                c.points.data.extend(sample_unit_ball(&field, rep.m, rng));
            }
        }
        c
    }
}

pub fn apply_group<F: LocalField>(g: &SqMat<F::Elem>, cloud: &PhiCloud<F>) -> Result<PhiCloud<F>> {
    if g.n != cloud.rep.rows() {
        return Err(Error::DimensionMismatch { expected: cloud.rep.rows(), got: g.n });
    }
    let f = cloud.field();
    let rep = cloud.rep;
    let points = cloud.points.map(rep.dim(), |x, out| apply_point(&f, rep, g, x, out));
    Ok(PhiCloud { rep, points })
}

/// Highest-weight row.
pub fn pi_plus<E: Copy>(rep: RepSpace, x: &[E]) -> Vec<E> {
    x[..rep.m].to_vec()
}

/// Rows of weight 2 and 0, flattened row-major; only for `d = 2`.
pub fn pi_zero<E: Copy>(rep: RepSpace, x: &[E]) -> Result<Vec<E>> {
    if rep.d != 2 {
        return Err(Error::WrongDegree(rep.d));
    }
    Ok(x[..2 * rep.m].to_vec())
}

/// Max over weight rows of the row norm.
pub fn phi_norm<F: LocalField>(f: &F, rep: RepSpace, x: &[F::Elem]) -> f64 {
    x.chunks_exact(rep.m).map(|row| f.norm(row)).fold(0.0, f64::max)
}

/// `base + V` with `V = {sum r_ij e_i (x) rho_j u_j : |r_ij| <= 1}`, `u_j`
/// unit directions of an orthogonal frame and `rho_j = q^{-k_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct RepBox<F: LocalField> {
    pub field: F,
    pub rep: RepSpace,
    pub base: Vec<F::Elem>,
    pub frame: Frame<F::Elem>,
    pub ks: Vec<u32>,
}

impl<F: LocalField> RepBox<F> {
    pub fn new(field: F, rep: RepSpace, base: Vec<F::Elem>, dirs: &[Vec<F::Elem>], ks: Vec<u32>) -> Result<Self> {
        if base.len() != rep.dim() {
            return Err(Error::DimensionMismatch { expected: rep.dim(), got: base.len() });
        }
        if dirs.len() != ks.len() {
            return Err(Error::DimensionMismatch { expected: dirs.len(), got: ks.len() });
        }
        let frame = field.frame(dirs)?;
        Ok(RepBox { field, rep, base, frame, ks })
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.field.q_pow(-(self.ks[j] as i32))
    }

    pub fn radii(&self) -> Vec<f64> {
        (0..self.ks.len()).map(|j| self.radius(j)).collect()
    }

    /// Rank of `V` over `Phi_0`, i.e. the number of directions.
    pub fn rank(&self) -> usize {
        self.ks.len()
    }

    /// Random point of the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<F::Elem> {
        let f = &self.field;
        let m = self.rep.m;
        let mut x = self.base.clone();
        for i in 0..self.rep.rows() {
            for (u, &k) in self.frame.dirs.iter().zip(&self.ks) {
                let s = f.mul(f.sample_unit(rng), f.uniformizer_pow(k as i32).expect("k >= 0"));
                for c in 0..m {
                    x[i * m + c] = f.add(x[i * m + c], f.mul(s, u[c]));
                }
            }
        }
        x
    }

    /// Distance from `x` to the box: per weight row, the largest excess of a
    /// frame coefficient beyond its extent, or the off-frame residual.
    pub fn distance(&self, x: &[F::Elem]) -> f64 {
        let f = &self.field;
        let mut y = vec![f.zero(); self.rep.m];
        let mut coeffs = vec![f.zero(); self.frame.len()];
        self.distance_buf(x, &mut y, &mut coeffs)
    }

    /// [`RepBox::distance`] with caller-provided scratch of lengths `m` and
    /// `rank`.
    pub fn distance_buf(&self, x: &[F::Elem], y: &mut [F::Elem], coeffs: &mut [F::Elem]) -> f64 {
        let f = &self.field;
        let m = self.rep.m;
        let mut worst = 0.0f64;
        for i in 0..self.rep.rows() {
            for c in 0..m {
                y[c] = f.sub(x[i * m + c], self.base[i * m + c]);
            }
            let residual = f.decompose(&self.frame, y, coeffs);
            worst = worst.max(residual);
            for (j, &c) in coeffs.iter().enumerate() {
                worst = worst.max(f.abs(c) - self.radius(j));
            }
        }
        worst
    }
}

impl<F: LocalField> CenterSet<F> for RepBox<F> {
    fn distance(&self, x: &[F::Elem]) -> f64 {
        RepBox::distance(self, x)
    }
}

/// `prod_j max(rho_j / delta, 1)^{d+1}`.
pub fn box_covering_number<F: LocalField>(b: &RepBox<F>, scale: Scale) -> f64 {
    log_box_covering_number(b, scale).exp()
}

/// Natural log of `box_covering_number`, exact on the ladder.
pub fn log_box_covering_number<F: LocalField>(b: &RepBox<F>, scale: Scale) -> f64 {
    let ln_delta = -scale.log_inv_delta(&b.field);
    let ln_q = b.field.q().ln();
    let per_row: f64 = b.ks.iter().map(|&k| (-(k as f64) * ln_q - ln_delta).max(0.0)).sum();
    per_row * b.rep.rows() as f64
}

pub fn box_nhd_filter<F: LocalField>(cloud: &PhiCloud<F>, b: &RepBox<F>, radius: f64) -> PhiCloud<F> {
    // |c_j| <= rho_j + radius and residual <= radius bound every coordinate of
    // a row; points failing that cheap test are dropped before decomposing
    let f = b.field;
    let radii = b.radii();
    let bound = if !f.is_exact() {
        (radii.iter().map(|r| (r + radius).powi(2)).sum::<f64>() + radius * radius).sqrt()
    } else {
        radii.iter().map(|r| r + radius).fold(radius, f64::max)
    } * (1.0 + 1e-12);
    let keep: Vec<usize> = (0..cloud.len())
        .into_par_iter()
        .map_init(
            || (vec![f.zero(); b.rep.m], vec![f.zero(); b.rank()]),
            |(y, coeffs), i| {
                let x = cloud.point(i);
                let near = x.iter().zip(&b.base).all(|(&a, &c)| f.abs(f.sub(a, c)) <= bound) && b.distance_buf(x, y, coeffs) <= radius;
                near.then_some(i)
            },
        )
        .flatten()
        .collect();
    PhiCloud { rep: cloud.rep, points: cloud.points.select(keep) }
}
