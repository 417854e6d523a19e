//! Objective interface and the dense quadratic / least-squares instances.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{LipschitzInfo, ProblemSpec};

/// Smooth objective over `ℝⁿ`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.grad(x)[i]
    }

    fn hessian_entry(&self, _i: usize, _j: usize) -> Option<f64> {
        None
    }

    /// Column `i` of a constant Hessian, when the objective is quadratic.
    ///
    /// Enables the O(n) incremental gradient update `∇f ← ∇f + Σ dₘ H[:, m]`.
    fn hessian_column(&self, _i: usize) -> Option<&[f64]> {
        None
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (**self).eval(x)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (**self).grad_into(x, out)
    }
    fn partial(&self, x: &[f64], i: usize) -> f64 {
        (**self).partial(x, i)
    }
    fn hessian_entry(&self, i: usize, j: usize) -> Option<f64> {
        (**self).hessian_entry(i, j)
    }
    fn hessian_column(&self, i: usize) -> Option<&[f64]> {
        (**self).hessian_column(i)
    }
}

/// `f(x) = ½ xᵀHx − cᵀx + k` with symmetric positive semidefinite `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    h: DMatrix<f64>,
    c: DVector<f64>,
    constant: f64,
}

impl Quadratic {
    pub fn new(h: DMatrix<f64>, c: DVector<f64>, constant: f64) -> Result<Self> {
        let n = h.nrows();
        if h.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: h.ncols() });
        }
        if c.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: c.len() });
        }
        let scale = h.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (h[(i, j)] - h[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!(
                        "Hessian is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { h, c, constant })
    }

    pub fn from_rows(rows: &[Vec<f64>], c: &[f64]) -> Result<Self> {
        let n = rows.len();
        let mut h = DMatrix::zeros(n, n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                h[(i, j)] = *v;
            }
        }
        Self::new(h, DVector::from_column_slice(c), 0.0)
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// The same quadratic in variables `yᵢ = aᵢxᵢ`: `H ↦ D⁻¹HD⁻¹`, `c ↦ D⁻¹c`.
    pub fn reparameterized(&self, weights: &[f64]) -> Result<Self> {
        check_weights(self.dim(), weights)?;
        let n = self.dim();
        let h = DMatrix::from_fn(n, n, |i, j| self.h[(i, j)] / (weights[i] * weights[j]));
        let c = DVector::from_fn(n, |i, _| self.c[i] / weights[i]);
        Ok(Self { h, c, constant: self.constant })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        0.5 * x.dot(&(&self.h * &x)) - self.c.dot(&x) + self.constant
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.dim();
        for (o, ci) in out.iter_mut().zip(self.c.iter()) {
            *o = -ci;
        }
        for (j, &xj) in x.iter().enumerate().take(n) {
            if xj != 0.0 {
                for (o, hij) in out.iter_mut().zip(self.h.column(j).iter()) {
                    *o += hij * xj;
                }
            }
        }
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        // Column i equals row i by symmetry and is contiguous.
        self.h.column(i).iter().zip(x).map(|(h, x)| h * x).sum::<f64>() - self.c[i]
    }

    fn hessian_entry(&self, i: usize, j: usize) -> Option<f64> {
        Some(self.h[(i, j)])
    }

    fn hessian_column(&self, i: usize) -> Option<&[f64]> {
        let n = self.dim();
        Some(&self.h.as_slice()[i * n..(i + 1) * n])
    }
}

/// `f(x) = ½‖Ax − b‖² + (λ/2)‖x‖²` with the Gram matrix `AᵀA + λI` cached.
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    a: DMatrix<f64>,
    b: DVector<f64>,
    ridge: f64,
    quad: Quadratic,
}

impl LeastSquares {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        Self::with_ridge_parts(a, b, 0.0)
    }

    fn with_ridge_parts(a: DMatrix<f64>, b: DVector<f64>, ridge: f64) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        if !(ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!("ridge must be >= 0, got {ridge}")));
        }
        let mut gram = a.tr_mul(&a);
        // Products of the same columns can differ in the last bit; mirror the upper triangle.
        gram.fill_lower_triangle_with_upper_triangle();
        for i in 0..gram.nrows() {
            gram[(i, i)] += ridge;
        }
        let atb = a.tr_mul(&b);
        let quad = Quadratic { h: gram, c: atb, constant: 0.5 * b.norm_squared() };
        Ok(Self { a, b, ridge, quad })
    }

    /// Adds `(λ/2)‖x‖²`.
    pub fn with_ridge(self, ridge: f64) -> Result<Self> {
        Self::with_ridge_parts(self.a, self.b, ridge)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn quadratic(&self) -> &Quadratic {
        &self.quad
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.quad.h
    }

    /// `∇f(x) = Aᵀ(Ax − b) + λx`, the residual route.
    pub fn grad_via_residual(&self, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        let r = &self.a * &xv - &self.b;
        let g = self.a.tr_mul(&r) + xv * self.ridge;
        g.as_slice().to_vec()
    }

    /// Least squares in `yᵢ = aᵢxᵢ`: the columns of `A` are divided by the weights.
    pub fn reparameterized(&self, weights: &[f64]) -> Result<Self> {
        check_weights(self.dim(), weights)?;
        if self.ridge != 0.0 {
            return Err(Error::InvalidParameter(
                "reparameterize ridge problems through Quadratic::reparameterized".into(),
            ));
        }
        let mut a = self.a.clone();
        for (j, w) in weights.iter().enumerate() {
            a.column_mut(j).unscale_mut(*w);
        }
        Self::new(a, self.b.clone())
    }
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let r = &self.a * &xv - &self.b;
        0.5 * r.norm_squared() + 0.5 * self.ridge * xv.norm_squared()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.quad.grad_into(x, out)
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.quad.partial(x, i)
    }

    fn hessian_entry(&self, i: usize, j: usize) -> Option<f64> {
        self.quad.hessian_entry(i, j)
    }

    fn hessian_column(&self, i: usize) -> Option<&[f64]> {
        self.quad.hessian_column(i)
    }
}

/// Output of the synthetic generator.
#[derive(Clone, Debug)]
pub struct SyntheticProblem {
    pub problem: LeastSquares,
    pub x_true: Vec<f64>,
    /// Per-column multipliers when the columns were scaled.
    pub column_scales: Option<Vec<f64>>,
}

/// Random least-squares instance: `A` with i.i.d. standard-normal entries, `b = A x_true + z`.
///
/// Normals come from the ziggurat sampler of `rand_distr` driven by a ChaCha8 stream seeded
/// with `seed`. Draw order: `A` row-major, then `x_true`, then `z`, then the column scales.
/// With `column_scaled`, column `j` of `A` is multiplied by its own standard-normal draw
/// before `b` is formed.
pub fn make_least_squares(n: usize, m: usize, seed: u64, column_scaled: bool) -> Result<SyntheticProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_least_squares_with(n, m, column_scaled, || StandardNormal.sample(&mut rng))
}

/// Same as [`make_least_squares`] with an explicit normal sampler.
pub fn make_least_squares_with<F>(n: usize, m: usize, column_scaled: bool, mut normal: F) -> Result<SyntheticProblem>
where
    F: FnMut() -> f64,
{
    if n == 0 || m == 0 {
        return Err(Error::TooFewCoordinates { min: 1, got: n.min(m) });
    }
    let mut a = DMatrix::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            a[(r, c)] = normal();
        }
    }
    let x_true: Vec<f64> = (0..n).map(|_| normal()).collect();
    let z: Vec<f64> = (0..m).map(|_| normal()).collect();
    let column_scales = if column_scaled {
        let scales: Vec<f64> = (0..n).map(|_| normal()).collect();
        for (j, s) in scales.iter().enumerate() {
            a.column_mut(j).scale_mut(*s);
        }
        Some(scales)
    } else {
        None
    };
    let b = &a * DVector::from_column_slice(&x_true) + DVector::from_vec(z);
    Ok(SyntheticProblem { problem: LeastSquares::new(a, b)?, x_true, column_scales })
}

/// Largest curvature along `(eᵢ − eⱼ)/√2`: `max_{i<j} (Hᵢᵢ + Hⱼⱼ − 2Hᵢⱼ)/2`.
pub fn compute_l2_exact(q: &Quadratic) -> Result<f64> {
    let n = q.dim();
    if n < 2 {
        return Err(Error::TooFewCoordinates { min: 2, got: n });
    }
    let h = q.hessian();
    let mut best = f64::NEG_INFINITY;
    for j in 1..n {
        let hjj = h[(j, j)];
        for i in 0..j {
            best = best.max((h[(i, i)] + hjj - 2.0 * h[(i, j)]) / 2.0);
        }
    }
    Ok(best)
}

/// 1-norm smoothness constant, exactly half of [`compute_l2_exact`].
pub fn compute_l1_exact(q: &Quadratic) -> Result<f64> {
    Ok(compute_l2_exact(q)? / 2.0)
}

/// `Lᵢ = Hᵢᵢ`.
pub fn compute_li(q: &Quadratic) -> Vec<f64> {
    q.hessian().diagonal().iter().copied().collect()
}

/// Cheap O(n) bound `L₂ ≤ 2 maxᵢ Hᵢᵢ`, usable when the exact pair scan is too costly.
pub fn l2_upper_bound(q: &Quadratic) -> f64 {
    2.0 * q.hessian().diagonal().max()
}

/// Exact `L₂`, `L₁` and `Lᵢ` of a quadratic.
pub fn lipschitz_info(q: &Quadratic) -> Result<LipschitzInfo> {
    LipschitzInfo::new(compute_l2_exact(q)?, compute_li(q))
}

/// Largest central-difference error `|(f(x+heᵢ) − f(x−heᵢ))/2h − ∇ᵢf(x)|` over coordinates.
pub fn grad_check<O: Objective + ?Sized>(obj: &O, x: &[f64], h: f64) -> f64 {
    let g = obj.grad(x);
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = obj.eval(&probe);
        probe[i] = x[i] - h;
        let fm = obj.eval(&probe);
        probe[i] = x[i];
        worst = worst.max(((fp - fm) / (2.0 * h) - g[i]).abs());
    }
    worst
}

/// `g(y) = f(y₁/a₁, …, yₙ/aₙ)`.
#[derive(Clone, Debug)]
pub struct Reparameterized<O> {
    inner: O,
    weights: Vec<f64>,
}

impl<O: Objective> Reparameterized<O> {
    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.weights).map(|(y, a)| y / a).collect()
    }

    /// Maps a point of the transformed problem back: `xᵢ = yᵢ/aᵢ`.
    pub fn to_original(&self, y: &[f64]) -> Vec<f64> {
        self.unscale(y)
    }

    /// `yᵢ = aᵢxᵢ`.
    pub fn from_original(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(x, a)| x * a).collect()
    }
}

impl<O: Objective> Objective for Reparameterized<O> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, y: &[f64]) -> f64 {
        self.inner.eval(&self.unscale(y))
    }

    fn grad_into(&self, y: &[f64], out: &mut [f64]) {
        self.inner.grad_into(&self.unscale(y), out);
        for (o, a) in out.iter_mut().zip(&self.weights) {
            *o /= a;
        }
    }

    fn hessian_entry(&self, i: usize, j: usize) -> Option<f64> {
        self.inner
            .hessian_entry(i, j)
            .map(|h| h / (self.weights[i] * self.weights[j]))
    }
}

/// Turns `Σ aᵢxᵢ = γ` into `Σ yᵢ = γ` through `yᵢ = aᵢxᵢ`; bounds map to `[aᵢlᵢ, aᵢuᵢ]`.
pub fn reparameterize_weighted<O: Objective>(obj: O, spec: &ProblemSpec) -> Result<(Reparameterized<O>, ProblemSpec)> {
    let n = spec.n();
    if obj.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: obj.dim() });
    }
    let weights = spec.weights().map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    check_weights(n, &weights)?;
    let mapped = reparameterize_spec(spec)?;
    Ok((Reparameterized { inner: obj, weights }, mapped))
}

/// Unit-weight spec of the reparameterized problem.
pub fn reparameterize_spec(spec: &ProblemSpec) -> Result<ProblemSpec> {
    let n = spec.n();
    let lower = (0..n).map(|i| spec.weight(i) * spec.lower()[i]).collect();
    let upper = (0..n).map(|i| spec.weight(i) * spec.upper()[i]).collect();
    ProblemSpec::new(n, spec.gamma())?.with_bounds(lower, upper)
}

fn check_weights(n: usize, weights: &[f64]) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: weights.len() });
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveWeight { index, value });
        }
    }
    Ok(())
}
