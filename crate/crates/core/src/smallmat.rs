//! Closed-form linear algebra for 2×2 real matrices.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m11: f64,
    pub m12: f64,
    pub m21: f64,
    pub m22: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub b1: f64,
    pub b2: f64,
}

impl Vec2 {
    pub const fn new(b1: f64, b2: f64) -> Self {
        Vec2 { b1, b2 }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.b1, self.b2]
    }

    pub fn norm(self) -> f64 {
        self.b1.hypot(self.b2)
    }

    pub fn dot(self, v: [f64; 2]) -> f64 {
        self.b1 * v[0] + self.b2 * v[1]
    }
}

impl Mat2 {
    pub const fn new(m11: f64, m12: f64, m21: f64, m22: f64) -> Self {
        Mat2 { m11, m12, m21, m22 }
    }

    pub fn from_rows(r: [[f64; 2]; 2]) -> Self {
        Mat2::new(r[0][0], r[0][1], r[1][0], r[1][1])
    }

    pub const fn identity() -> Self {
        Mat2::new(1.0, 0.0, 0.0, 1.0)
    }

    pub fn rows(self) -> [[f64; 2]; 2] {
        [[self.m11, self.m12], [self.m21, self.m22]]
    }

    pub fn transpose(self) -> Self {
        Mat2::new(self.m11, self.m21, self.m12, self.m22)
    }

    pub fn trace(self) -> f64 {
        self.m11 + self.m22
    }

    pub fn det(self) -> f64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn norm(self) -> f64 {
        (self.m11 * self.m11 + self.m12 * self.m12 + self.m21 * self.m21 + self.m22 * self.m22)
            .sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Mat2::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    pub fn add(self, o: Mat2) -> Self {
        Mat2::new(
            self.m11 + o.m11,
            self.m12 + o.m12,
            self.m21 + o.m21,
            self.m22 + o.m22,
        )
    }

    pub fn mul(self, o: Mat2) -> Self {
        Mat2::new(
            self.m11 * o.m11 + self.m12 * o.m21,
            self.m11 * o.m12 + self.m12 * o.m22,
            self.m21 * o.m11 + self.m22 * o.m21,
            self.m21 * o.m12 + self.m22 * o.m22,
        )
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }

    pub fn apply_vec(self, v: Vec2) -> Vec2 {
        let [a, b] = self.apply(v.as_array());
        Vec2::new(a, b)
    }

    /// Half the discriminant squared: `δ = (tr/2)² − det`, computed without
    /// cancellation. Eigenvalues are `tr/2 ± √δ`.
    pub fn half_disc(self) -> f64 {
        let h = 0.5 * (self.m11 - self.m22);
        h * h + self.m12 * self.m21
    }

    pub fn eigenvalues(self) -> (Complex64, Complex64) {
        let s = 0.5 * self.trace();
        let d = self.half_disc();
        if d >= 0.0 {
            let r = d.sqrt();
            (Complex64::new(s - r, 0.0), Complex64::new(s + r, 0.0))
        } else {
            let w = (-d).sqrt();
            (Complex64::new(s, -w), Complex64::new(s, w))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SpectralClass {
    DistinctReal { l1: f64, l2: f64 },
    ComplexPair { re: f64, im: f64 },
    JordanBlock { mu: f64 },
    ScalarMultiple { mu: f64 },
}

impl SpectralClass {
    pub fn is_diagonalizable(self) -> bool {
        !matches!(self, SpectralClass::JordanBlock { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: SpectralClass,
    /// Set when the discriminant fell inside the tolerance band, so a small
    /// perturbation of `M` could change the class.
    pub tolerance_sensitive: bool,
}

pub const DEFAULT_TAU: f64 = 1e-9;

pub fn classify(m: Mat2) -> SpectralClass {
    classify_tol(m, DEFAULT_TAU).class
}

/// Spectral classification with relative tolerance `tau` on the discriminant.
pub fn classify_tol(m: Mat2, tau: f64) -> Classification {
    let s = 0.5 * m.trace();
    let d = m.half_disc();
    let scale = m.norm().powi(2);
    if d.abs() <= tau * scale {
        let off = (m.m11 - s).abs() + (m.m22 - s).abs() + m.m12.abs() + m.m21.abs();
        let class = if off <= tau.sqrt() * m.norm() {
            SpectralClass::ScalarMultiple { mu: s }
        } else {
            SpectralClass::JordanBlock { mu: s }
        };
        return Classification {
            class,
            tolerance_sensitive: d != 0.0,
        };
    }
    let class = if d > 0.0 {
        let r = d.sqrt();
        SpectralClass::DistinctReal {
            l1: s - r,
            l2: s + r,
        }
    } else {
        SpectralClass::ComplexPair {
            re: s,
            im: (-d).sqrt(),
        }
    };
    Classification {
        class,
        tolerance_sensitive: false,
    }
}

/// `(cosh(r√δ), sinh(r√δ)/√δ)` continued analytically through δ ≤ 0.
fn cosh_sinhc(delta: f64, r: f64) -> (f64, f64) {
    let z = r * r * delta;
    if z.abs() < 1.0 {
        let (mut c, mut s) = (1.0, 1.0);
        let mut term_c = 1.0;
        let mut term_s = 1.0;
        for k in 1..20 {
            let k = k as f64;
            term_c *= z / ((2.0 * k - 1.0) * (2.0 * k));
            term_s *= z / ((2.0 * k) * (2.0 * k + 1.0));
            c += term_c;
            s += term_s;
        }
        (c, r * s)
    } else if delta > 0.0 {
        let q = delta.sqrt();
        ((r * q).cosh(), (r * q).sinh() / q)
    } else {
        let w = (-delta).sqrt();
        ((r * w).cos(), (r * w).sin() / w)
    }
}

/// `e^{rM}`: hyperbolic (real spectrum), trigonometric (complex pair) or
/// polynomial (Jordan / scalar) closed form, all from
/// `e^{rM} = e^{rs}(C·I + S·(M − sI))` with `s = tr/2`.
pub fn expm(m: Mat2, r: f64) -> Mat2 {
    let s = 0.5 * m.trace();
    let (c, sh) = cosh_sinhc(m.half_disc(), r);
    let e = (r * s).exp();
    let n = m.add(Mat2::identity().scale(-s));
    Mat2::identity().scale(c).add(n.scale(sh)).scale(e)
}

/// Rank of `[B | MB]`, with relative tolerance on the determinant.
pub fn kalman_rank(m: Mat2, b: Vec2, tau: f64) -> u8 {
    let nb = b.norm();
    if nb == 0.0 {
        return 0;
    }
    let mb = m.apply_vec(b);
    let d = b.b1 * mb.b2 - b.b2 * mb.b1;
    if d.abs() > tau * nb * mb.norm() {
        2
    } else {
        1
    }
}

/// `det[B*; B*e^{rM*}]`. The second row is `(e^{rM}B)ᵀ`.
pub fn det_b_eb(m: Mat2, b: Vec2, r: f64) -> f64 {
    let v = expm(m, r).apply_vec(b);
    b.b1 * v.b2 - b.b2 * v.b1
}

/// Distance of `v` from the forbidden set: `{0}` for real spectra and Jordan
/// blocks, the lattice `(π/im)ℤ` for a complex pair.
pub fn phi_margin(class: SpectralClass, v: f64) -> f64 {
    match class {
        SpectralClass::ComplexPair { im, .. } => {
            let p = PI / im;
            let k = (v / p).round();
            (v - k * p).abs()
        }
        _ => v.abs(),
    }
}

pub fn phi_nondegenerate(class: SpectralClass, v: f64, tau: f64) -> bool {
    phi_margin(class, v) > tau
}

/// Determinant of the 4×4 Sylvester matrix of `λ² + aμᵢλ + ¼b²μᵢ² + (nᵢπ)²`.
pub fn sylvester_det(a: f64, b: f64, mu1: Complex64, mu2: Complex64, n1: i64, n2: i64) -> Complex64 {
    let (p1, p0) = sturm_coeffs(a, b, mu1, n1);
    let (q1, q0) = sturm_coeffs(a, b, mu2, n2);
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    #[rustfmt::skip]
    let s = Matrix4::new(
        one, p1, p0, zero,
        zero, one, p1, p0,
        one, q1, q0, zero,
        zero, one, q1, q0,
    );
    s.determinant()
}

/// Linear and constant coefficients of the spectral quadratic.
pub fn sturm_coeffs(a: f64, b: f64, mu: Complex64, n: i64) -> (Complex64, Complex64) {
    let xi = 0.25 * b * b * mu * mu + Complex64::new((n as f64 * PI).powi(2), 0.0);
    (a * mu, xi)
}

/// Size of the terms entering `sylvester_det`, for relative zero tests.
pub fn sylvester_scale(a: f64, b: f64, mu1: Complex64, mu2: Complex64, n1: i64, n2: i64) -> f64 {
    let (p1, p0) = sturm_coeffs(a, b, mu1, n1);
    let (q1, q0) = sturm_coeffs(a, b, mu2, n2);
    let c = (p0.norm() + q0.norm()).powi(2) + (p1.norm() + q1.norm()) * (p1.norm() * q0.norm() + q1.norm() * p0.norm());
    c.max(f64::MIN_POSITIVE)
}
