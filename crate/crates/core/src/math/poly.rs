//! Dense univariate polynomials with plain `Vec<f64>` coefficients.
//!
//! Used for Taylor-basis manipulations where every operation either preserves
//! or truncates the degree, so the representation never grows without bound.

/// Polynomial `c[0] + c[1] x + c[2] x^2 + ...`; an empty vector is zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    pub c: Vec<f64>,
}

impl Poly {
    pub fn zero() -> Self {
        Poly { c: Vec::new() }
    }

    pub fn constant(v: f64) -> Self {
        if v == 0.0 {
            Poly::zero()
        } else {
            Poly { c: vec![v] }
        }
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        let mut p = Poly { c };
        p.trim();
        p
    }

    pub fn degree(&self) -> usize {
        self.c.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.c.is_empty()
    }

    fn trim(&mut self) {
        while matches!(self.c.last(), Some(&v) if v == 0.0) {
            self.c.pop();
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &ck in self.c.iter().rev() {
            acc = acc * x + ck;
        }
        acc
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::from_coeffs(self.c.iter().map(|&v| v * s).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.c.len().max(other.c.len());
        let mut c = vec![0.0; n];
        for (i, &v) in self.c.iter().enumerate() {
            c[i] += v;
        }
        for (i, &v) in other.c.iter().enumerate() {
            c[i] += v;
        }
        Poly::from_coeffs(c)
    }

    /// `self + s * other`, in place.
    pub fn add_scaled_assign(&mut self, other: &Poly, s: f64) {
        if other.c.len() > self.c.len() {
            self.c.resize(other.c.len(), 0.0);
        }
        for (i, &v) in other.c.iter().enumerate() {
            self.c[i] += s * v;
        }
        self.trim();
    }

    /// Product truncated to degree `max_deg` inclusive.
    pub fn mul_trunc(&self, other: &Poly, max_deg: usize) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let out_len = (self.c.len() + other.c.len() - 1).min(max_deg + 1);
        let mut c = vec![0.0; out_len];
        for (i, &a) in self.c.iter().enumerate() {
            if i >= out_len || a == 0.0 {
                continue;
            }
            let jmax = (out_len - i).min(other.c.len());
            for (j, &b) in other.c.iter().take(jmax).enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::from_coeffs(c)
    }

    pub fn derivative(&self) -> Poly {
        if self.c.len() <= 1 {
            return Poly::zero();
        }
        Poly::from_coeffs(
            self.c[1..]
                .iter()
                .enumerate()
                .map(|(k, &v)| (k as f64 + 1.0) * v)
                .collect(),
        )
    }

    /// Coefficient of `x^k` (zero beyond the stored degree).
    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }
}
