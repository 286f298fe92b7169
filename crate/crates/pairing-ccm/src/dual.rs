//! Forward-mode jets for exact differentiation of polynomial functionals.
//!
//! Every functional in this crate is a finite polynomial in the cluster
//! amplitudes, so first and second derivatives propagated through dual
//! numbers are exact (no truncation error, unlike finite differences).
//!
//! Constants carry empty derivative storage; binary operations broadcast
//! an empty slot vector as all-zeros of the partner's length. This keeps
//! lifting f64 operator matrices into jet arithmetic cheap.

/// Arithmetic shared by `f64`, [`Dual`] and [`Dual2`], so the functional
/// evaluation code can be written once and instantiated per derivative
/// order.
pub trait Ring: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn add(&self, rhs: &Self) -> Self;
    fn sub(&self, rhs: &Self) -> Self;
    fn mul(&self, rhs: &Self) -> Self;
    fn neg(&self) -> Self;
    /// Multiply by a plain constant.
    fn scale(&self, f: f64) -> Self;
    /// The underlying value (zeroth-order part).
    fn value(&self) -> f64;
    fn is_zero(&self) -> bool;
}

impl Ring for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn add(&self, rhs: &Self) -> Self {
        self + rhs
    }
    fn sub(&self, rhs: &Self) -> Self {
        self - rhs
    }
    fn mul(&self, rhs: &Self) -> Self {
        self * rhs
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, f: f64) -> Self {
        self * f
    }
    fn value(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

/// First-order dual number: value plus one derivative slot per active
/// unknown. `grad` is empty for constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub grad: Vec<f64>,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Dual {
            val: v,
            grad: Vec::new(),
        }
    }

    /// The `slot`-th of `n` independent variables.
    pub fn variable(v: f64, slot: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[slot] = 1.0;
        Dual { val: v, grad }
    }

    pub fn deriv(&self, slot: usize) -> f64 {
        self.grad.get(slot).copied().unwrap_or(0.0)
    }
}

fn zip_grads(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    if a.is_empty() && b.is_empty() {
        return Vec::new();
    }
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| {
            f(
                a.get(i).copied().unwrap_or(0.0),
                b.get(i).copied().unwrap_or(0.0),
            )
        })
        .collect()
}

impl Ring for Dual {
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn one() -> Self {
        Dual::constant(1.0)
    }
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }
    fn add(&self, rhs: &Self) -> Self {
        Dual {
            val: self.val + rhs.val,
            grad: zip_grads(&self.grad, &rhs.grad, |a, b| a + b),
        }
    }
    fn sub(&self, rhs: &Self) -> Self {
        Dual {
            val: self.val - rhs.val,
            grad: zip_grads(&self.grad, &rhs.grad, |a, b| a - b),
        }
    }
    fn mul(&self, rhs: &Self) -> Self {
        // (fg)' = f'g + fg'
        Dual {
            val: self.val * rhs.val,
            grad: zip_grads(&self.grad, &rhs.grad, |a, b| {
                a * rhs.val + self.val * b
            }),
        }
    }
    fn neg(&self) -> Self {
        Dual {
            val: -self.val,
            grad: self.grad.iter().map(|g| -g).collect(),
        }
    }
    fn scale(&self, f: f64) -> Self {
        Dual {
            val: self.val * f,
            grad: self.grad.iter().map(|g| g * f).collect(),
        }
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn is_zero(&self) -> bool {
        self.val == 0.0 && self.grad.iter().all(|&g| g == 0.0)
    }
}

/// Second-order jet: value, gradient and full Hessian. Equivalent to a
/// dual-over-dual evaluation flattened into one structure; the Hessian
/// stays exactly symmetric because products accumulate both outer-product
/// terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dual2 {
    pub val: f64,
    pub grad: Vec<f64>,
    /// Row-major `n x n`; empty for constants.
    pub hess: Vec<f64>,
}

impl Dual2 {
    pub fn constant(v: f64) -> Self {
        Dual2 {
            val: v,
            grad: Vec::new(),
            hess: Vec::new(),
        }
    }

    pub fn variable(v: f64, slot: usize, n: usize) -> Self {
        let mut grad = vec![0.0; n];
        grad[slot] = 1.0;
        Dual2 {
            val: v,
            grad,
            hess: vec![0.0; n * n],
        }
    }

    pub fn nvars(&self) -> usize {
        self.grad.len()
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        let n = self.grad.len();
        if n == 0 {
            return 0.0;
        }
        self.hess[i * n + j]
    }
}

impl Ring for Dual2 {
    fn zero() -> Self {
        Dual2::constant(0.0)
    }
    fn one() -> Self {
        Dual2::constant(1.0)
    }
    fn from_f64(v: f64) -> Self {
        Dual2::constant(v)
    }
    fn add(&self, rhs: &Self) -> Self {
        Dual2 {
            val: self.val + rhs.val,
            grad: zip_grads(&self.grad, &rhs.grad, |a, b| a + b),
            hess: zip_grads(&self.hess, &rhs.hess, |a, b| a + b),
        }
    }
    fn sub(&self, rhs: &Self) -> Self {
        Dual2 {
            val: self.val - rhs.val,
            grad: zip_grads(&self.grad, &rhs.grad, |a, b| a - b),
            hess: zip_grads(&self.hess, &rhs.hess, |a, b| a - b),
        }
    }
    fn mul(&self, rhs: &Self) -> Self {
        let val = self.val * rhs.val;
        let grad = zip_grads(&self.grad, &rhs.grad, |a, b| {
            a * rhs.val + self.val * b
        });
        // (fg)'' = f''g + fg'' + f'(g')^T + g'(f')^T
        let n = grad.len();
        let hess = if n == 0 {
            Vec::new()
        } else {
            let mut h = vec![0.0; n * n];
            for i in 0..n {
                let si = self.grad.get(i).copied().unwrap_or(0.0);
                let ri = rhs.grad.get(i).copied().unwrap_or(0.0);
                for j in 0..n {
                    let sj = self.grad.get(j).copied().unwrap_or(0.0);
                    let rj = rhs.grad.get(j).copied().unwrap_or(0.0);
                    let mut v = si * rj + ri * sj;
                    if !self.hess.is_empty() {
                        v += self.hess[i * self.grad.len() + j] * rhs.val;
                    }
                    if !rhs.hess.is_empty() {
                        v += rhs.hess[i * rhs.grad.len() + j] * self.val;
                    }
                    h[i * n + j] = v;
                }
            }
            h
        };
        Dual2 { val, grad, hess }
    }
    fn neg(&self) -> Self {
        Dual2 {
            val: -self.val,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }
    fn scale(&self, f: f64) -> Self {
        Dual2 {
            val: self.val * f,
            grad: self.grad.iter().map(|g| g * f).collect(),
            hess: self.hess.iter().map(|h| h * f).collect(),
        }
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn is_zero(&self) -> bool {
        self.val == 0.0
            && self.grad.iter().all(|&g| g == 0.0)
            && self.hess.iter().all(|&h| h == 0.0)
    }
}
