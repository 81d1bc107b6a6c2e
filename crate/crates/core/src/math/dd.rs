//! Minimal double-double arithmetic for cancellation-heavy polynomial work.
//!
//! A `Dd` stores a value as an unevaluated sum `hi + lo` with `|lo|` at most
//! half an ulp of `hi`, giving roughly 106 bits of precision. The exponent
//! expansion needs this because its coefficient series evaluate exponentials
//! at large negative arguments through wildly cancelling partial sums; plain
//! `f64` loses the result entirely once the cancellation spans more than
//! sixteen orders of magnitude.
//!
//! Only the handful of operations the expansion uses are provided. Products
//! use Dekker splitting rather than `mul_add` so the code stays exact and
//! fast whether or not the target has a hardware fused multiply-add.

/// Double-double number: the exact sum `hi + lo`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    (s, (a - (s - v)) + (b - v))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    // Requires |a| >= |b| or a == 0.
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    #[inline]
    pub fn from_f64(v: f64) -> Dd {
        Dd { hi: v, lo: 0.0 }
    }

    /// Best `f64` approximation of the stored value.
    #[inline]
    pub fn value(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    pub fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let (hi, lo) = quick_two_sum(p, e + self.hi * o.lo + self.lo * o.hi);
        Dd { hi, lo }
    }

    /// `self * s` for a plain `f64` factor.
    #[inline]
    pub fn scale(self, s: f64) -> Dd {
        let (p, e) = two_prod(self.hi, s);
        let (hi, lo) = quick_two_sum(p, e + self.lo * s);
        Dd { hi, lo }
    }

    /// `self / d` for a plain `f64` divisor.
    #[inline]
    pub fn div_f64(self, d: f64) -> Dd {
        let q1 = self.hi / d;
        let (p, pe) = two_prod(q1, d);
        let q2 = ((self.hi - p) + (self.lo - pe)) / d;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }
}

/// Dense polynomial with double-double coefficients,
/// `c[0] + c[1] x + c[2] x^2 + ...`.
#[derive(Debug, Clone, Default)]
pub struct DdPoly {
    pub c: Vec<Dd>,
}

impl DdPoly {
    pub fn zero() -> Self {
        DdPoly { c: Vec::new() }
    }

    pub fn constant(v: f64) -> Self {
        if v == 0.0 {
            DdPoly::zero()
        } else {
            DdPoly {
                c: vec![Dd::from_f64(v)],
            }
        }
    }

    pub fn from_f64_coeffs(c: &[f64]) -> Self {
        DdPoly {
            c: c.iter().map(|&v| Dd::from_f64(v)).collect(),
        }
    }

    pub fn coeff(&self, k: usize) -> Dd {
        self.c.get(k).copied().unwrap_or(Dd::ZERO)
    }

    pub fn derivative(&self) -> DdPoly {
        if self.c.len() <= 1 {
            return DdPoly::zero();
        }
        DdPoly {
            c: self.c[1..]
                .iter()
                .enumerate()
                .map(|(k, &v)| v.scale(k as f64 + 1.0))
                .collect(),
        }
    }

    /// Every coefficient multiplied by a plain `f64` factor.
    pub fn scale(&self, s: f64) -> DdPoly {
        DdPoly {
            c: self.c.iter().map(|&v| v.scale(s)).collect(),
        }
    }

    /// Product truncated to degree `max_deg` inclusive.
    pub fn mul_trunc(&self, other: &DdPoly, max_deg: usize) -> DdPoly {
        if self.c.is_empty() || other.c.is_empty() {
            return DdPoly::zero();
        }
        let out_len = (self.c.len() + other.c.len() - 1).min(max_deg + 1);
        let mut c = vec![Dd::ZERO; out_len];
        for (i, &a) in self.c.iter().enumerate() {
            if i >= out_len {
                break;
            }
            let jmax = (out_len - i).min(other.c.len());
            for (j, &b) in other.c.iter().take(jmax).enumerate() {
                c[i + j] = c[i + j].add(a.mul(b));
            }
        }
        DdPoly { c }
    }

    /// `self + s * other`, in place.
    pub fn add_scaled_assign(&mut self, other: &DdPoly, s: f64) {
        if other.c.len() > self.c.len() {
            self.c.resize(other.c.len(), Dd::ZERO);
        }
        for (i, &v) in other.c.iter().enumerate() {
            self.c[i] = self.c[i].add(v.scale(s));
        }
    }

    /// Horner evaluation at a plain `f64` point, in double-double.
    pub fn eval(&self, x: f64) -> Dd {
        let mut acc = Dd::ZERO;
        for &ck in self.c.iter().rev() {
            acc = acc.scale(x).add(ck);
        }
        acc
    }

    /// Sum of `|c_k| |x|^k`: the magnitude the Horner sum works through,
    /// which bounds the rounding noise of [`eval`](Self::eval).
    pub fn envelope(&self, x: f64) -> f64 {
        let ax = x.abs();
        let mut acc = 0.0;
        for &ck in self.c.iter().rev() {
            acc = acc * ax + ck.hi.abs();
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_keeps_extended_precision() {
        // (1 + 2^-60) round-trips through add/mul where f64 would drop it.
        let tiny = (0.5f64).powi(60);
        let a = Dd::from_f64(1.0).add(Dd::from_f64(tiny));
        assert_eq!(a.hi, 1.0);
        assert_eq!(a.lo, tiny);
        let b = a.mul(Dd::from_f64(3.0));
        assert_eq!(b.hi, 3.0);
        assert!((b.lo - 3.0 * tiny).abs() < 1e-33);
        let c = a.scale(2.0).div_f64(2.0);
        assert_eq!(c.hi, 1.0);
        assert_eq!(c.lo, tiny);
    }

    #[test]
    fn cancelling_series_evaluates_beyond_f64() {
        // exp(-30) via 160 Taylor terms: the Horner sum works through ~exp(30)
        // = 1e13, so the f64 result is noise at the 1e-3 level against a true
        // value of 9.4e-14, while double-double keeps better than 1e-18 of
        // absolute accuracy.
        let mut coeffs = vec![Dd::from_f64(1.0)];
        for k in 1..160 {
            let prev = coeffs[k - 1];
            coeffs.push(prev.div_f64(k as f64));
        }
        let p = DdPoly { c: coeffs };
        let want = (-30.0f64).exp();
        let got = p.eval(-30.0).value();
        assert!(
            (got - want).abs() < 1e-6 * want,
            "got {got:e}, want {want:e}"
        );

        let mut plain = 0.0f64;
        for &ck in p.c.iter().rev() {
            plain = plain * -30.0 + ck.hi;
        }
        assert!(
            (plain - want).abs() > want,
            "plain f64 Horner unexpectedly survived: {plain:e}"
        );
        // The envelope records the cancellation magnitude behind both results.
        assert!(p.envelope(-30.0) > 1e12);
    }

    #[test]
    fn polynomial_ops_match_plain_arithmetic() {
        let p = DdPoly::from_f64_coeffs(&[1.0, 2.0, 3.0]);
        let q = DdPoly::from_f64_coeffs(&[0.5, -1.0]);
        let prod = p.mul_trunc(&q, 10);
        // (1 + 2x + 3x^2)(0.5 - x) = 0.5 - 0.5x^2 - 3x^3
        assert_eq!(prod.coeff(0).value(), 0.5);
        assert_eq!(prod.coeff(1).value(), 0.0);
        assert_eq!(prod.coeff(2).value(), -0.5);
        assert_eq!(prod.coeff(3).value(), -3.0);
        assert_eq!(prod.mul_trunc(&DdPoly::zero(), 5).c.len(), 0);

        let d = p.derivative();
        assert_eq!(d.coeff(0).value(), 2.0);
        assert_eq!(d.coeff(1).value(), 6.0);

        let mut r = DdPoly::from_f64_coeffs(&[1.0]);
        r.add_scaled_assign(&q, 2.0);
        assert_eq!(r.coeff(0).value(), 2.0);
        assert_eq!(r.coeff(1).value(), -2.0);

        assert_eq!(DdPoly::constant(0.0).c.len(), 0);
        assert_eq!(DdPoly::constant(2.5).eval(3.0).value(), 2.5);
    }
}
