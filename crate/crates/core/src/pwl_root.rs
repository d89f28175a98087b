//! Root of a sum of monotone one-breakpoint piecewise-linear functions.
//!
//! Each clamp `u_j(eta) = clamp(eta * b_j - alpha_j, 0, 1)` is written as the
//! average of two one-breakpoint terms
//!
//! ```text
//! V_j(eta) = |eta * b_j - alpha_j|
//! W_j(eta) = 1 - |eta * b_j - (alpha_j + 1)|
//! ```
//!
//! so `g(eta) = 1/2 sum V_j + 1/2 sum W_j - k = sum_j u_j(eta) - k`, which is
//! nondecreasing in `eta`. [`find_root`] locates the smallest root with the
//! randomized breakpoint-pruning search (expected linear time);
//! [`find_root_bisection`] is a plain bisection used to cross-check it.
//!
//! `V_j` and `W_j` grow like `eta * b_j`, and summing them directly cancels
//! catastrophically once `eta * b_j` is large (a near-zero group pushes the
//! bracket out to `1 / b_min`). Each term is therefore split into a bounded
//! part and a linear part,
//!
//! ```text
//! V = 2 max(alpha - eta b, 0)         + (eta b - alpha)
//! W = 1 + 2 min(eta b - alpha - 1, 0) - (eta b - alpha - 1)
//! ```
//!
//! The linear parts of a `V`/`W` pair cancel, so they are summed once with
//! compensation and every other quantity stays of order `alpha + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermKind {
    V,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwlTerm<T> {
    pub kind: TermKind,
    pub b: T,
    pub alpha: T,
}

/// Affine piece `slope * eta + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine<T> {
    slope: T,
    intercept: T,
}

impl<T: Scalar> Affine<T> {
    fn zero() -> Self {
        Self { slope: T::zero(), intercept: T::zero() }
    }

    fn at(&self, eta: T) -> T {
        self.slope * eta + self.intercept
    }

    fn add(&mut self, other: Affine<T>) {
        self.slope += other.slope;
        self.intercept += other.intercept;
    }
}

impl<T: Scalar> PwlTerm<T> {
    /// `b >= 0`, `alpha >= 0`. Prox terms have `alpha > 0`; the envelope value
    /// uses the `alpha = 0` limit.
    pub fn new(kind: TermKind, b: T, alpha: T) -> Result<Self> {
        if !(b >= T::zero()) || !(alpha >= T::zero()) || !b.is_finite() || !alpha.is_finite() {
            return Err(Error::InvalidParams(format!(
                "piecewise-linear term needs b >= 0 and alpha >= 0, got b = {b}, alpha = {alpha}"
            )));
        }
        Ok(Self { kind, b, alpha })
    }

    /// The `V`/`W` pair whose average is `clamp(eta * b - alpha, 0, 1)`.
    pub fn pair(b: T, alpha: T) -> Result<[Self; 2]> {
        Ok([Self::new(TermKind::V, b, alpha)?, Self::new(TermKind::W, b, alpha)?])
    }

    pub fn eval(&self, eta: T) -> T {
        let x = eta * self.b;
        match self.kind {
            TermKind::V => (x - self.alpha).abs(),
            TermKind::W => T::one() - (x - (self.alpha + T::one())).abs(),
        }
    }

    /// The term minus its linear part.
    fn bounded(&self, eta: T) -> T {
        let x = eta * self.b;
        let two = T::lit(2.0);
        match self.kind {
            TermKind::V => two * (self.alpha - x).max(T::zero()),
            TermKind::W => T::one() + two * (x - (self.alpha + T::one())).min(T::zero()),
        }
    }

    /// `(slope, intercept)` of the linear part.
    fn linear(&self) -> (T, T) {
        match self.kind {
            TermKind::V => (self.b, -self.alpha),
            TermKind::W => (-self.b, self.alpha + T::one()),
        }
    }

    /// Offset at which the inner absolute value changes sign.
    fn offset(&self) -> T {
        match self.kind {
            TermKind::V => self.alpha,
            TermKind::W => self.alpha + T::one(),
        }
    }

    pub fn breakpoint(&self) -> T {
        self.offset() / self.b
    }

    /// Half of the bounded part's affine piece left (`right = false`) or right
    /// of the breakpoint.
    fn half_piece(&self, right: bool) -> Affine<T> {
        let c = self.offset();
        // V: left = 2 (c - eta b), right = 0.  W: left = 1 + 2 (eta b - c), right = 1.
        match (self.kind, right) {
            (TermKind::V, false) => Affine { slope: -self.b, intercept: c },
            (TermKind::V, true) => Affine::zero(),
            (TermKind::W, false) => Affine { slope: self.b, intercept: T::half() - c },
            (TermKind::W, true) => Affine { slope: T::zero(), intercept: T::half() },
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy)]
struct Compensated<T> {
    sum: T,
    carry: T,
}

impl<T: Scalar> Compensated<T> {
    fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Half the summed linear parts of the active terms.
fn linear_part<T: Scalar>(terms: &[PwlTerm<T>]) -> Affine<T> {
    let (mut slope, mut intercept) = (Compensated::new(), Compensated::new());
    for t in terms.iter().filter(|t| t.b > T::zero()) {
        let (s, c) = t.linear();
        slope.add(s);
        intercept.add(c);
    }
    Affine { slope: T::half() * slope.value(), intercept: T::half() * intercept.value() }
}

/// Builds the `2m` terms for `u_j = clamp(eta b_j - alpha_j, 0, 1)`.
pub fn clamp_terms<T: Scalar>(b: &[T], alpha: &[T]) -> Result<Vec<PwlTerm<T>>> {
    if b.len() != alpha.len() {
        return Err(Error::DimensionMismatch { expected: b.len(), actual: alpha.len() });
    }
    let mut terms = Vec::with_capacity(2 * b.len());
    for (&bj, &aj) in b.iter().zip(alpha) {
        terms.extend(PwlTerm::pair(bj, aj)?);
    }
    Ok(terms)
}

/// `g(eta) = 1/2 sum_terms term(eta) - k`.
pub fn eval_g<T: Scalar>(terms: &[PwlTerm<T>], k: usize, eta: T) -> Result<T> {
    if !(eta > T::zero()) {
        return Err(Error::NonpositiveEta(eta.as_f64()));
    }
    Ok(eval_unchecked(terms, k, eta))
}

fn eval_unchecked<T: Scalar>(terms: &[PwlTerm<T>], k: usize, eta: T) -> T {
    let s: T = terms
        .iter()
        .filter(|t| t.b > T::zero())
        .map(|t| t.bounded(eta))
        .sum();
    linear_part(terms).at(eta) + T::half() * s - T::from_usize_lossy(k)
}

/// Rounding noise of `g(eta)`: a multiple of machine epsilon times the
/// magnitude of the bounded parts plus the leftover linear slope. Values of
/// `g` above `-noise` count as nonnegative so a flat stretch at zero is not
/// lost to cancellation.
#[derive(Debug, Clone, Copy)]
struct Noise<T> {
    base: T,
    slope: T,
}

impl<T: Scalar> Noise<T> {
    fn new(terms: &[PwlTerm<T>], k: usize, linear: Affine<T>) -> Self {
        let mut base = T::from_usize_lossy(k);
        for t in terms.iter().filter(|t| t.b > T::zero()) {
            base += t.alpha + T::one();
        }
        let c = T::lit(16.0) * T::epsilon();
        Self { base: c * base, slope: c * linear.slope.abs() }
    }

    fn negative(&self, g: T, eta: T) -> bool {
        g < -(self.base + self.slope * eta)
    }
}

/// `lo < hi` with `g(lo) < 0 <= g(hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootBracket<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> RootBracket<T> {
    /// Endpoints `min alpha / max b` (every clamp at 0) and `(max alpha + 1) / min b`
    /// over positive `b` (every clamp at 1). Fails unless `g` changes sign on it.
    pub fn from_terms(terms: &[PwlTerm<T>], k: usize) -> Result<Self> {
        let active = terms.iter().filter(|t| t.b > T::zero());
        let mut min_alpha = T::infinity();
        let mut max_alpha = T::zero();
        let mut min_b = T::infinity();
        let mut max_b = T::zero();
        for t in active {
            min_alpha = min_alpha.min(t.alpha);
            max_alpha = max_alpha.max(t.alpha);
            min_b = min_b.min(t.b);
            max_b = max_b.max(t.b);
        }
        if !(max_b > T::zero()) || k == 0 {
            return Err(Error::NoSignChange { lo: 0.0, hi: 0.0 });
        }
        let bracket = Self { lo: min_alpha / max_b, hi: (max_alpha + T::one()) / min_b };
        let g_lo = eval_unchecked(terms, k, bracket.lo);
        let g_hi = eval_unchecked(terms, k, bracket.hi);
        if !(g_lo < T::zero() && g_hi >= T::zero() && bracket.lo < bracket.hi) {
            return Err(Error::NoSignChange { lo: bracket.lo.as_f64(), hi: bracket.hi.as_f64() });
        }
        Ok(bracket)
    }
}

/// Smallest root of `g` by randomized breakpoint pruning.
///
/// Each round evaluates `g` at a uniformly drawn unresolved breakpoint and
/// shrinks the bracket to the side containing the root. Terms whose breakpoint
/// leaves the bracket are folded into a running affine function. Once no
/// breakpoint remains inside, `g` is affine on the bracket and the root is
/// solved in closed form. If `g` vanishes on a plateau the left end is returned.
pub fn find_root<T: Scalar>(terms: &[PwlTerm<T>], k: usize, seed: u64) -> Result<T> {
    let mut bracket = RootBracket::from_terms(terms, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kk = T::from_usize_lossy(k);
    let mut resolved = linear_part(terms);
    let noise = Noise::new(terms, k, resolved);

    let mut open: Vec<(T, PwlTerm<T>)> = Vec::with_capacity(terms.len());
    for t in terms.iter().filter(|t| t.b > T::zero()) {
        let p = t.breakpoint();
        if p <= bracket.lo {
            resolved.add(t.half_piece(true));
        } else if p >= bracket.hi {
            resolved.add(t.half_piece(false));
        } else {
            open.push((p, *t));
        }
    }

    while !open.is_empty() {
        let pivot = open[rng.random_range(0..open.len())].0;
        let g = resolved.at(pivot) + open.iter().map(|(_, t)| T::half() * t.bounded(pivot)).sum::<T>() - kk;
        if noise.negative(g, pivot) {
            bracket.lo = pivot;
        } else {
            bracket.hi = pivot;
        }
        open.retain(|&(p, t)| {
            if p <= bracket.lo {
                resolved.add(t.half_piece(true));
                false
            } else if p >= bracket.hi {
                resolved.add(t.half_piece(false));
                false
            } else {
                true
            }
        });
    }

    Ok(polish(terms, k, solve_affine(resolved, kk, bracket)))
}

/// One Newton step on the affine piece next to `eta`, undoing the cancellation
/// error of the accumulated pieces. Flat stretches are left alone.
fn polish<T: Scalar>(terms: &[PwlTerm<T>], k: usize, eta: T) -> T {
    let g = eval_unchecked(terms, k, eta);
    let linear = linear_part(terms).slope;
    let (mut left, mut right) = (linear, linear);
    for t in terms.iter().filter(|t| t.b > T::zero()) {
        let p = t.breakpoint();
        left += t.half_piece(eta > p).slope;
        right += t.half_piece(eta >= p).slope;
    }
    let slope = if g < T::zero() { right } else { left };
    if g == T::zero() || !(slope > T::zero()) {
        return eta;
    }
    let next = eta - g / slope;
    if next > T::zero() && next.is_finite() {
        next
    } else {
        eta
    }
}

fn solve_affine<T: Scalar>(piece: Affine<T>, k: T, bracket: RootBracket<T>) -> T {
    if piece.slope > T::zero() {
        ((k - piece.intercept) / piece.slope).max(bracket.lo).min(bracket.hi)
    } else {
        bracket.hi
    }
}

/// Bisection on the bracket until its width is at most `abs_tol` or no
/// breakpoint lies strictly inside, then a linear solve on the final piece.
pub fn find_root_bisection<T: Scalar>(terms: &[PwlTerm<T>], k: usize, abs_tol: T) -> Result<T> {
    if !(abs_tol > T::zero()) {
        return Err(Error::InvalidParams(format!("abs_tol must be positive, got {abs_tol}")));
    }
    let mut bracket = RootBracket::from_terms(terms, k)?;
    let active: Vec<PwlTerm<T>> = terms.iter().copied().filter(|t| t.b > T::zero()).collect();
    let noise = Noise::new(&active, k, linear_part(&active));
    let has_inner_breakpoint =
        |lo: T, hi: T| active.iter().any(|t| {
            let p = t.breakpoint();
            p > lo && p < hi
        });
    while bracket.hi - bracket.lo > abs_tol && has_inner_breakpoint(bracket.lo, bracket.hi) {
        let mid = T::half() * (bracket.lo + bracket.hi);
        if mid <= bracket.lo || mid >= bracket.hi {
            break;
        }
        if noise.negative(eval_unchecked(&active, k, mid), mid) {
            bracket.lo = mid;
        } else {
            bracket.hi = mid;
        }
    }
    let mid = T::half() * (bracket.lo + bracket.hi);
    let mut piece = linear_part(&active);
    for t in &active {
        piece.add(t.half_piece(mid >= t.breakpoint()));
    }
    Ok(polish(&active, k, solve_affine(piece, T::from_usize_lossy(k), bracket)))
}
