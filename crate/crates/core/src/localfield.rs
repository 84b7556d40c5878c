//! The two supported local fields, the real numbers and the p-adic numbers at
//! fixed precision, together with norms, unit-ball sampling, orthogonal frames
//! and the scale ladder `delta = q^{-k}`.
//!
//! Everything downstream is generic over [`LocalField`]; the runtime choice of
//! field (from a config file) is carried by [`FieldDesc`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};

/// Config-level description of a local field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldDesc {
    Real,
    Padic { p: u64, precision: u32 },
}

impl FieldDesc {
    /// Residue norm `q`: `e` for the reals, `p` for `Q_p`.
    pub fn q(&self) -> f64 {
        match self {
            FieldDesc::Real => std::f64::consts::E,
            FieldDesc::Padic { p, .. } => *p as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let FieldDesc::Padic { p, precision } = *self {
            Padic::new(p, precision)?;
        }
        Ok(())
    }
}

impl fmt::Display for FieldDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldDesc::Real => write!(f, "real"),
            FieldDesc::Padic { p, precision } => write!(f, "padic:p={p},K={precision}"),
        }
    }
}

impl FromStr for FieldDesc {
    type Err = Error;

    /// Parses `real` or `padic:p=3,K=12`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "real" {
            return Ok(FieldDesc::Real);
        }
        let rest = s
            .strip_prefix("padic:")
            .ok_or_else(|| Error::Parse(format!("unknown field descriptor `{s}`")))?;
        let mut p = None;
        let mut precision = None;
        for part in rest.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed field parameter `{part}`")))?;
            let value: u64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("non-integer field parameter `{part}`")))?;
            match key.trim() {
                "p" => p = Some(value),
                "K" => precision = Some(value as u32),
                other => return Err(Error::Parse(format!("unknown field parameter `{other}`"))),
            }
        }
        let desc = FieldDesc::Padic {
            p: p.ok_or_else(|| Error::Parse("padic field needs p".into()))?,
            precision: precision.ok_or_else(|| Error::Parse("padic field needs K".into()))?,
        };
        desc.validate()?;
        Ok(desc)
    }
}

/// Which ladder a [`Scale`] index lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScaleBase {
    /// `delta = q^{-k}`; one step of `a_1` moves the index by an integer.
    #[default]
    Uniformizer,
    /// `delta = 2^{-k}`, for human-friendly real examples.
    Dyadic,
}

impl FromStr for ScaleBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "e" | "p" | "q" => Ok(ScaleBase::Uniformizer),
            "2" => Ok(ScaleBase::Dyadic),
            other => Err(Error::Parse(format!("unknown scale base `{other}`"))),
        }
    }
}

/// A scale index `k`, meaning `delta = q^{-k}` (or `2^{-k}` on the dyadic ladder).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scale {
    pub k: u32,
    pub base: ScaleBase,
}

impl Scale {
    pub fn ladder(k: u32) -> Self {
        Scale { k, base: ScaleBase::Uniformizer }
    }

    pub fn dyadic(k: u32) -> Self {
        Scale { k, base: ScaleBase::Dyadic }
    }

    /// Base of the ladder for the given field.
    pub fn ratio<F: LocalField>(&self, field: &F) -> f64 {
        match self.base {
            ScaleBase::Uniformizer => field.q(),
            ScaleBase::Dyadic => 2.0,
        }
    }

    pub fn delta<F: LocalField>(&self, field: &F) -> f64 {
        match self.base {
            ScaleBase::Uniformizer => field.q_pow(-(self.k as i32)),
            ScaleBase::Dyadic => 2f64.powi(-(self.k as i32)),
        }
    }

    /// `ln(1/delta)`.
    pub fn log_inv_delta<F: LocalField>(&self, field: &F) -> f64 {
        self.k as f64 * self.ratio(field).ln()
    }

    pub fn finer(&self, steps: u32) -> Self {
        Scale { k: self.k + steps, base: self.base }
    }
}

/// An orthogonal frame of unit vectors in `F^m`, ready for coordinate
/// decomposition. For `Q_p` each direction has a unit pivot entry equal to 1
/// and every later direction vanishes at earlier pivots.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<E> {
    pub dim: usize,
    pub dirs: Vec<Vec<E>>,
    pub pivots: Vec<usize>,
}

impl<E> Frame<E> {
    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// A local field of characteristic zero realised at working precision.
pub trait LocalField: Copy + Send + Sync + fmt::Debug + 'static {
    type Elem: Copy + Send + Sync + PartialEq + fmt::Debug + 'static;
    /// Per-scale constant of [`LocalField::cell_of`], hoisted out of hot loops.
    type Cell: Copy + Send + Sync;

    fn desc(&self) -> FieldDesc;
    fn q(&self) -> f64;
    /// `q^n` as a real number.
    fn q_pow(&self, n: i32) -> f64;
    fn is_exact(&self) -> bool;

    fn zero(&self) -> Self::Elem;
    fn one(&self) -> Self::Elem;
    fn from_i64(&self, n: i64) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(&self, a: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;

    /// Absolute value; `|0| = 0`.
    fn abs(&self, x: Self::Elem) -> f64;
    /// The uniformizer: `e^{-1}` for the reals, `p` for `Q_p`.
    fn uniformizer(&self) -> Self::Elem;
    /// `varpi^n`; negative powers fail for `Q_p` at fixed precision.
    fn uniformizer_pow(&self, n: i32) -> Result<Self::Elem>;
    /// Multiply by `varpi^n` where the result must stay integral.
    fn shift(&self, x: Self::Elem, n: i32) -> Result<Self::Elem>;
    /// A scalar of the largest absolute value `<= r` (for `0 < r <= 1`).
    fn radius_scalar(&self, r: f64) -> Self::Elem;

    /// Uniform sample of `B_1^F`.
    fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Elem;
    /// Grid (real) or coset (p-adic) index of `x` at the given scale.
    #[inline]
    fn cell_index(&self, x: Self::Elem, scale: &Scale) -> i64 {
        self.cell_of(x, self.cell_param(scale))
    }
    fn cell_param(&self, scale: &Scale) -> Self::Cell;
    fn cell_of(&self, x: Self::Elem, c: Self::Cell) -> i64;
    /// Inclusive range of cells (per coordinate) meeting the closed ball of
    /// `radius` around `x`. For `Q_p` `radius` must not exceed the cell size.
    fn cell_span(&self, x: Self::Elem, radius: f64, c: Self::Cell) -> (i64, i64);
    /// Inclusive bounds on `cell_of(a + b)` from inclusive bounds on
    /// `cell_of(a)` and `cell_of(b)`.
    fn cell_sum_bounds(&self, a: (i64, i64), b: (i64, i64), c: Self::Cell) -> (i64, i64);
    /// Euclidean norm (real) or max norm (p-adic).
    fn norm(&self, v: &[Self::Elem]) -> f64;

    fn approx_eq(&self, a: Self::Elem, b: Self::Elem, tol: f64) -> bool;
    fn to_f64_lossy(&self, x: Self::Elem) -> f64;
    fn format(&self, x: Self::Elem) -> String;
    fn parse(&self, s: &str) -> Result<Self::Elem>;

    /// Replaces `vs` by an orthogonal family spanning the same space.
    fn orthogonalize(&self, vs: &[Vec<Self::Elem>]) -> Result<Vec<Vec<Self::Elem>>>;
    /// Orthogonalizes and normalises into a [`Frame`].
    fn frame(&self, vs: &[Vec<Self::Elem>]) -> Result<Frame<Self::Elem>>;
    /// Writes the frame coordinates of `y` into `coeffs` and returns the norm
    /// of the component orthogonal to the frame.
    fn decompose(&self, frame: &Frame<Self::Elem>, y: &[Self::Elem], coeffs: &mut [Self::Elem]) -> f64;
}

/// The real numbers with uniformizer `e^{-1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Reals;

const REAL_DEPENDENCE_TOL: f64 = 1e-10;

impl LocalField for Reals {
    type Elem = f64;
    type Cell = f64;

    fn desc(&self) -> FieldDesc {
        FieldDesc::Real
    }

    fn q(&self) -> f64 {
        std::f64::consts::E
    }

    fn q_pow(&self, n: i32) -> f64 {
        (n as f64).exp()
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn zero(&self) -> f64 {
        0.0
    }

    fn one(&self) -> f64 {
        1.0
    }

    fn from_i64(&self, n: i64) -> f64 {
        n as f64
    }

    #[inline]
    fn add(&self, a: f64, b: f64) -> f64 {
        a + b
    }

    #[inline]
    fn sub(&self, a: f64, b: f64) -> f64 {
        a - b
    }

    #[inline]
    fn neg(&self, a: f64) -> f64 {
        -a
    }

    #[inline]
    fn mul(&self, a: f64, b: f64) -> f64 {
        a * b
    }

    fn abs(&self, x: f64) -> f64 {
        x.abs()
    }

    fn uniformizer(&self) -> f64 {
        (-1f64).exp()
    }

    fn uniformizer_pow(&self, n: i32) -> Result<f64> {
        Ok((-(n as f64)).exp())
    }

    fn shift(&self, x: f64, n: i32) -> Result<f64> {
        Ok(x * (-(n as f64)).exp())
    }

    fn radius_scalar(&self, r: f64) -> f64 {
        r
    }

    fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.gen_range(-1.0..=1.0)
    }

    fn cell_param(&self, scale: &Scale) -> f64 {
        scale.delta(self)
    }

    #[inline]
    fn cell_of(&self, x: f64, delta: f64) -> i64 {
        // same as floor() for |x/delta| < 2^63, without the libm call
        let t = x / delta;
        let i = t as i64;
        i - ((i as f64) > t) as i64
    }

    fn cell_span(&self, x: f64, radius: f64, delta: f64) -> (i64, i64) {
        (self.cell_of(x - radius, delta), self.cell_of(x + radius, delta))
    }

    fn cell_sum_bounds(&self, a: (i64, i64), b: (i64, i64), _: f64) -> (i64, i64) {
        // floor(x + y) is floor(x) + floor(y) or one more
        (a.0 + b.0, a.1 + b.1 + 1)
    }

    fn norm(&self, v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn approx_eq(&self, a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    fn to_f64_lossy(&self, x: f64) -> f64 {
        x
    }

    fn format(&self, x: f64) -> String {
        format!("{x}")
    }

    fn parse(&self, s: &str) -> Result<f64> {
        s.trim().parse().map_err(|_| Error::Parse(format!("not a real number: `{s}`")))
    }

    fn orthogonalize(&self, vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
        for v in vs {
            let scale = self.norm(v);
            let mut w = v.clone();
            // modified Gram-Schmidt, two passes for stability
            for _ in 0..2 {
                for u in &out {
                    let uu = dot(u, u);
                    let c = dot(&w, u) / uu;
                    w.iter_mut().zip(u).for_each(|(wi, ui)| *wi -= c * ui);
                }
            }
            if scale == 0.0 || self.norm(&w) <= REAL_DEPENDENCE_TOL * scale {
                return Err(Error::DependentInput);
            }
            out.push(w);
        }
        Ok(out)
    }

    fn frame(&self, vs: &[Vec<f64>]) -> Result<Frame<f64>> {
        let dim = vs.first().map_or(0, Vec::len);
        let dirs = self
            .orthogonalize(vs)?
            .into_iter()
            .map(|w| {
                let n = self.norm(&w);
                w.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Ok(Frame { dim, dirs, pivots: Vec::new() })
    }

    fn decompose(&self, frame: &Frame<f64>, y: &[f64], coeffs: &mut [f64]) -> f64 {
        // explicit residual; subtracting squared norms loses all precision near the span
        for (c, u) in coeffs.iter_mut().zip(&frame.dirs) {
            *c = dot(y, u);
        }
        let mut sq = 0.0;
        for (a, &ya) in y.iter().enumerate() {
            let r = ya - coeffs.iter().zip(&frame.dirs).map(|(c, u)| c * u[a]).sum::<f64>();
            sq += r * r;
        }
        sq.sqrt()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Q_p` realised as residues modulo `p^K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Padic {
    p: u64,
    precision: u32,
    modulus: u64,
}

impl Padic {
    pub fn new(p: u64, precision: u32) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidConfig(format!("p = {p} is not prime")));
        }
        if precision == 0 {
            return Err(Error::InvalidConfig("p-adic precision K must be at least 1".into()));
        }
        let modulus = (p as u128)
            .checked_pow(precision)
            .filter(|&m| m < (1u128 << 62))
            .ok_or_else(|| Error::InvalidConfig(format!("p^K = {p}^{precision} does not fit in 62 bits")))?
            as u64;
        Ok(Padic { p, precision, modulus })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// `p^k` for `k <= K`.
    pub fn p_pow(&self, k: u32) -> u64 {
        self.p.pow(k)
    }

    /// p-adic valuation of a residue; `K` for zero.
    pub fn valuation(&self, x: u64) -> u32 {
        if x == 0 {
            return self.precision;
        }
        let mut v = 0;
        let mut y = x;
        while y % self.p == 0 {
            y /= self.p;
            v += 1;
        }
        v
    }

    /// Inverse of a unit modulo `p^K`.
    pub fn unit_inverse(&self, x: u64) -> Option<u64> {
        if x % self.p == 0 {
            return None;
        }
        let (mut old_r, mut r) = (x as i128, self.modulus as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let quot = old_r / r;
            (old_r, r) = (r, old_r - quot * r);
            (old_s, s) = (s, old_s - quot * s);
        }
        Some(old_s.rem_euclid(self.modulus as i128) as u64)
    }

    /// Exact division by `p^e` of a residue divisible by it. The top `e`
    /// digits of the quotient are unknown and set to zero.
    pub fn div_p_pow(&self, x: u64, e: u32) -> Option<u64> {
        let d = self.p_pow(e);
        (x % d == 0).then_some(x / d)
    }

    fn reduce_i128(&self, x: i128) -> u64 {
        x.rem_euclid(self.modulus as i128) as u64
    }
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut i = 2;
    while i * i <= p {
        if p % i == 0 {
            return false;
        }
        i += 1;
    }
    true
}

impl LocalField for Padic {
    type Elem = u64;
    type Cell = u64;

    fn desc(&self) -> FieldDesc {
        FieldDesc::Padic { p: self.p, precision: self.precision }
    }

    fn q(&self) -> f64 {
        self.p as f64
    }

    fn q_pow(&self, n: i32) -> f64 {
        (self.p as f64).powi(n)
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn zero(&self) -> u64 {
        0
    }

    fn one(&self) -> u64 {
        1 % self.modulus
    }

    fn from_i64(&self, n: i64) -> u64 {
        self.reduce_i128(n as i128)
    }

    #[inline]
    fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.modulus as u128) as u64
    }

    fn abs(&self, x: u64) -> f64 {
        if x == 0 {
            0.0
        } else {
            self.q_pow(-(self.valuation(x) as i32))
        }
    }

    fn uniformizer(&self) -> u64 {
        self.p % self.modulus
    }

    fn uniformizer_pow(&self, n: i32) -> Result<u64> {
        if n < 0 {
            return Err(Error::PrecisionExceeded {
                precision: self.precision,
                what: format!("p^{n}"),
            });
        }
        if n as u32 >= self.precision {
            return Ok(0);
        }
        Ok(self.p_pow(n as u32))
    }

    fn shift(&self, x: u64, n: i32) -> Result<u64> {
        if n >= 0 {
            return Ok(self.mul(x, self.uniformizer_pow(n)?));
        }
        let e = (-n) as u32;
        if e > self.precision {
            return Err(Error::PrecisionExceeded { precision: self.precision, what: format!("p^{n}") });
        }
        self.div_p_pow(x, e).ok_or_else(|| Error::PrecisionExceeded {
            precision: self.precision,
            what: format!("{x} * p^{n} is not integral"),
        })
    }

    fn radius_scalar(&self, r: f64) -> u64 {
        let j = (-r.ln() / self.q().ln() - 1e-9).ceil().max(0.0) as i32;
        self.uniformizer_pow(j).expect("j >= 0")
    }

    fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.modulus)
    }

    fn cell_param(&self, scale: &Scale) -> u64 {
        // balls of radius p^{-k} are the cosets of p^k Z_p
        self.p_pow(scale.k.min(self.precision))
    }

    #[inline]
    fn cell_of(&self, x: u64, pk: u64) -> i64 {
        (x % pk) as i64
    }

    fn cell_span(&self, x: u64, _: f64, pk: u64) -> (i64, i64) {
        let c = self.cell_of(x, pk);
        (c, c)
    }

    fn cell_sum_bounds(&self, _: (i64, i64), _: (i64, i64), pk: u64) -> (i64, i64) {
        (0, pk as i64 - 1)
    }

    fn norm(&self, v: &[u64]) -> f64 {
        v.iter().map(|&x| self.abs(x)).fold(0.0, f64::max)
    }

    fn approx_eq(&self, a: u64, b: u64, _tol: f64) -> bool {
        a == b
    }

    fn to_f64_lossy(&self, x: u64) -> f64 {
        x as f64
    }

    fn format(&self, x: u64) -> String {
        x.to_string()
    }

    fn parse(&self, s: &str) -> Result<u64> {
        let x: u64 = s.trim().parse().map_err(|_| Error::Parse(format!("not a residue: `{s}`")))?;
        if x >= self.modulus {
            return Err(Error::Parse(format!("residue {x} out of range [0, {})", self.modulus)));
        }
        Ok(x)
    }

    fn orthogonalize(&self, vs: &[Vec<u64>]) -> Result<Vec<Vec<u64>>> {
        Ok(padic_echelon(self, vs)?.0)
    }

    fn frame(&self, vs: &[Vec<u64>]) -> Result<Frame<u64>> {
        let dim = vs.first().map_or(0, Vec::len);
        let (_, dirs, pivots) = padic_echelon(self, vs)?;
        Ok(Frame { dim, dirs, pivots })
    }

    fn decompose(&self, frame: &Frame<u64>, y: &[u64], coeffs: &mut [u64]) -> f64 {
        let mut rest = y.to_vec();
        for ((c, u), &piv) in coeffs.iter_mut().zip(&frame.dirs).zip(&frame.pivots) {
            *c = rest[piv];
            for (r, &ui) in rest.iter_mut().zip(u) {
                *r = self.sub(*r, self.mul(*c, ui));
            }
        }
        self.norm(&rest)
    }
}

/// Valuation-pivoted elimination. Returns the eliminated (unnormalised)
/// vectors, their normalised versions with unit pivot 1, and the pivots.
fn padic_echelon(f: &Padic, vs: &[Vec<u64>]) -> Result<(Vec<Vec<u64>>, Vec<Vec<u64>>, Vec<usize>)> {
    let mut raw = Vec::with_capacity(vs.len());
    let mut normed: Vec<Vec<u64>> = Vec::with_capacity(vs.len());
    let mut pivots = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v.clone();
        for (u, &piv) in normed.iter().zip(&pivots) {
            let c = w[piv];
            if c != 0 {
                for (wi, &ui) in w.iter_mut().zip(u) {
                    *wi = f.sub(*wi, f.mul(c, ui));
                }
            }
        }
        let (piv, val) = w
            .iter()
            .enumerate()
            .map(|(i, &x)| (i, f.valuation(x)))
            .min_by_key(|&(i, v)| (v, i))
            .ok_or(Error::DependentInput)?;
        if val >= f.precision {
            return Err(Error::DependentInput);
        }
        let scaled: Vec<u64> = w.iter().map(|&x| x / f.p_pow(val)).collect();
        let inv = f.unit_inverse(scaled[piv]).expect("pivot is a unit");
        normed.push(scaled.iter().map(|&x| f.mul(x, inv)).collect());
        pivots.push(piv);
        raw.push(w);
    }
    Ok((raw, normed, pivots))
}

/// `|x|` for a scalar.
pub fn abs_val<F: LocalField>(field: &F, x: F::Elem) -> f64 {
    field.abs(x)
}

/// Uniform sample of the unit ball of `F^m`: rejection from the cube for the
/// reals, uniform residues for `Q_p`.
pub fn sample_unit_ball<F: LocalField, R: Rng + ?Sized>(field: &F, m: usize, rng: &mut R) -> Vec<F::Elem> {
    let mut v = vec![field.zero(); m];
    loop {
        for x in v.iter_mut() {
            *x = field.sample_unit(rng);
        }
        if field.norm(&v) <= 1.0 {
            return v;
        }
    }
}

pub fn orthogonalize<F: LocalField>(field: &F, vs: &[Vec<F::Elem>]) -> Result<Vec<Vec<F::Elem>>> {
    field.orthogonalize(vs)
}

/// Frame spanning all of `F^m`, extending `vs` by standard basis vectors.
pub fn complete_frame<F: LocalField>(field: &F, vs: &[Vec<F::Elem>], m: usize) -> Result<Frame<F::Elem>> {
    let mut all: Vec<Vec<F::Elem>> = vs.to_vec();
    for i in 0..m {
        if all.len() == m {
            break;
        }
        let mut e = vec![field.zero(); m];
        e[i] = field.one();
        let mut trial = all.clone();
        trial.push(e);
        if field.orthogonalize(&trial).is_ok() {
            all = trial;
        }
    }
    field.frame(&all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn q5() -> Padic {
        Padic::new(5, 8).unwrap()
    }

    #[test]
    fn uniformizer_has_abs_one_over_q() {
        let r = Reals;
        assert!((r.abs(r.uniformizer()) - 1.0 / r.q()).abs() < 1e-15);
        let p = q5();
        assert_eq!(p.abs(p.uniformizer()), 0.2);
        assert_eq!(p.abs(0), 0.0);
        assert_eq!(r.abs(0.0), 0.0);
    }

    #[test]
    fn fifty_in_q5() {
        assert_eq!(q5().abs(50), 1.0 / 25.0);
    }

    #[test]
    fn parse_descriptors() {
        assert_eq!("real".parse::<FieldDesc>().unwrap(), FieldDesc::Real);
        assert_eq!(
            "padic:p=3,K=12".parse::<FieldDesc>().unwrap(),
            FieldDesc::Padic { p: 3, precision: 12 }
        );
        assert!("padic:p=4,K=3".parse::<FieldDesc>().is_err());
        assert!("padic:p=3,K=0".parse::<FieldDesc>().is_err());
        assert!("complex".parse::<FieldDesc>().is_err());
        let d = FieldDesc::Padic { p: 7, precision: 5 };
        assert_eq!(d.to_string().parse::<FieldDesc>().unwrap(), d);
    }

    #[test]
    fn padic_sampling_is_uniform_on_residues() {
        let f = Padic::new(3, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hist = vec![0u32; 81];
        let n = 81_000;
        for _ in 0..n {
            let v = sample_unit_ball(&f, 1, &mut rng);
            hist[v[0] as usize] += 1;
        }
        // each residue expected 1000 times; 5 sigma band
        assert!(hist.iter().all(|&c| (c as f64 - 1000.0).abs() < 5.0 * 1000f64.sqrt()));
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_unit_ball(&Reals, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_unit_ball(&Reals, 3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn disc_mean_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| Reals.norm(&sample_unit_ball(&Reals, 2, &mut rng))).sum::<f64>() / n as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.01, "mean norm {mean}");
    }

    #[test]
    fn orthogonalize_standard_basis_unchanged() {
        let vs = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(Reals.orthogonalize(&vs).unwrap(), vs);
        let f = q5();
        let vs = vec![vec![1, 0], vec![0, 1]];
        assert_eq!(f.orthogonalize(&vs).unwrap(), vs);
    }

    #[test]
    fn gram_schmidt_by_hand() {
        let out = Reals.orthogonalize(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(out[0], vec![1.0, 0.0]);
        assert!(out[1][0].abs() < 1e-15 && (out[1][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn padic_elimination_by_hand() {
        let f = Padic::new(3, 6).unwrap();
        let out = f.orthogonalize(&[vec![1, 0], vec![1, 3]]).unwrap();
        assert_eq!(out[1], vec![0, 3]);
        let frame = f.frame(&[vec![1, 0], vec![1, 3]]).unwrap();
        let red: Vec<Vec<u64>> = frame.dirs.iter().map(|u| u.iter().map(|x| x % 3).collect()).collect();
        assert_eq!(red, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn dependent_inputs_rejected() {
        assert!(matches!(
            Reals.orthogonalize(&[vec![1.0, 2.0], vec![2.0, 4.0]]),
            Err(Error::DependentInput)
        ));
        let f = q5();
        assert!(matches!(f.orthogonalize(&[vec![1, 2], vec![2, 4]]), Err(Error::DependentInput)));
    }

    #[test]
    fn padic_shift_and_negative_powers() {
        let f = Padic::new(3, 6).unwrap();
        assert!(f.uniformizer_pow(-1).is_err());
        assert_eq!(f.shift(18, -2).unwrap(), 2);
        assert!(f.shift(4, -1).is_err());
        assert_eq!(f.unit_inverse(2).map(|i| f.mul(i, 2)), Some(1));
    }

    #[test]
    fn frame_decomposition_padic_max_orthogonality() {
        let f = Padic::new(3, 6).unwrap();
        let frame = f.frame(&[vec![1, 2, 0], vec![4, 0, 3]]).unwrap();
        let mut c = vec![0; 2];
        // y = 9 u0 + 1 u1 is in the span
        let y: Vec<u64> = (0..3).map(|i| f.add(f.mul(9, frame.dirs[0][i]), frame.dirs[1][i])).collect();
        let resid = f.decompose(&frame, &y, &mut c);
        assert_eq!(resid, 0.0);
        assert_eq!(c, vec![9, 1]);
        assert_eq!(f.norm(&y), f.abs(9).max(f.abs(1)));
    }
}
