//! Cascade system `M = [[0, m],[0, 0]]`, `B = (0, b)ᵗ`.
//!
//! The first components `(p⁻, q⁻)` are free waves; the second ones are
//! driven by `f = η₁p⁻ + η₂q⁻` and observed. A vanishing observation gives
//! boundary identities which, from `t = 2` on, involve `(p₀⁻, q₀⁻)` alone:
//! on each strip `[2n, 2n+1)` and `[2n+1, 2n+2)` they are Fredholm equations
//! of the third kind with diagonal factor built from `φ`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristics::{CoeffFields, PhiTable};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::solver::SystemSpec;
use crate::tolerances::{judge, Margin, Tolerances};

use super::{PairReport, Regime, SpectralPoint, UCVerdict, UcOutcome};

/// A scalar profile on `[0, 1]`.
pub type Profile1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `(p⁻, q⁻)(t, x)` of the free cascade component: transport with a sign
/// flip at each wall, periodic of period 2 in `t`.
pub fn minus_at(p0: &dyn Fn(f64) -> f64, q0: &dyn Fn(f64) -> f64, t: f64, x: f64) -> (f64, f64) {
    // Strips are closed on the right so that `t = 0` reproduces the data.
    let strip = |v: f64| (v.ceil() - 1.0).max(0.0);
    let u = t - x;
    let p = if u <= 0.0 {
        p0(x - t)
    } else {
        let m = strip(u);
        let n = (m / 2.0).floor();
        if m as i64 % 2 == 0 {
            -q0(u - 2.0 * n)
        } else {
            p0(2.0 * (n + 1.0) - u)
        }
    };
    let v = x + t;
    let m = strip(v);
    let n = (m / 2.0).floor();
    let q = if m as i64 % 2 == 0 {
        q0(v - 2.0 * n)
    } else {
        -p0(2.0 * n + 2.0 - v)
    };
    (p, q)
}

/// Samples of `(p⁻, q⁻)` on `(nt+1) × (nx+1)` nodes of `[0, T] × [0, 1]`,
/// slice-major.
pub fn homogeneous_cascade(
    p0: &dyn Fn(f64) -> f64,
    q0: &dyn Fn(f64) -> f64,
    horizon: f64,
    nt: usize,
    nx: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut p = Vec::with_capacity((nt + 1) * (nx + 1));
    let mut q = Vec::with_capacity((nt + 1) * (nx + 1));
    for j in 0..=nt {
        let t = horizon * j as f64 / nt.max(1) as f64;
        for i in 0..=nx {
            let (a, b) = minus_at(p0, q0, t, i as f64 / nx as f64);
            p.push(a);
            q.push(b);
        }
    }
    (p, q)
}

/// `K_n^{ij}(s, x)` evaluated from `η₁`, `η₂` at the reflected half-sum points.
#[derive(Clone)]
pub struct CascadeKernels {
    fields: Arc<CoeffFields>,
    table: Arc<PhiTable>,
}

impl CascadeKernels {
    pub fn new(fields: Arc<CoeffFields>, quad_tol: f64) -> Self {
        CascadeKernels {
            table: Arc::new(PhiTable::new(fields.clone(), quad_tol)),
            fields,
        }
    }

    fn e1(&self, a: f64, b: f64) -> Result<f64> {
        self.fields.eta1(0.5 * a, 0.5 * b)
    }

    fn e2(&self, a: f64, b: f64) -> Result<f64> {
        self.fields.eta2(0.5 * a, 0.5 * b)
    }

    pub fn k11(&self, n: usize, s: f64, x: f64) -> Result<f64> {
        let n4 = 4.0 * n as f64;
        Ok(if s <= x {
            0.5 * (self.e1(n4 + 2.0 - x - s, 2.0 - x + s)? + self.e2(n4 - x - s, x - s)?)
        } else {
            0.5 * (self.e1(n4 + 4.0 - x - s, s - x)? + self.e2(n4 + 2.0 - x - s, 2.0 + x - s)?)
        })
    }

    pub fn k12(&self, n: usize, s: f64, x: f64) -> Result<f64> {
        let n4 = 4.0 * n as f64;
        Ok(-0.5 * self.e1(n4 + 2.0 - x + s, 2.0 - x - s)? - 0.5 * self.e2(s + n4 - x, s + x)?)
    }

    pub fn k21(&self, n: usize, s: f64, x: f64) -> Result<f64> {
        let n4 = 4.0 * n as f64;
        Ok(-0.5 * self.e1(n4 + x - s, x + s)? - 0.5 * self.e2(n4 + x - 2.0 - s, 2.0 - s - x)?)
    }

    pub fn k22(&self, n: usize, s: f64, x: f64) -> Result<f64> {
        let n4 = 4.0 * n as f64;
        Ok(if s <= x {
            0.5 * (self.e1(n4 + x + s, x - s)? + self.e2(n4 - 2.0 + x + s, 2.0 + s - x)?)
        } else {
            0.5 * (self.e1(n4 - 2.0 + s + x, x - s + 2.0)? + self.e2(n4 - 4.0 + s + x, s - x)?)
        })
    }

    pub fn phi(&self, t: f64) -> Result<f64> {
        self.table.phi(t, 0.0)
    }
}

/// Largest `k` and `l` whose strips `[2k+1, 2k+2]` and `[2l, 2l+1]` fit in `[0, T]`.
pub fn admissible(horizon: f64) -> (usize, usize) {
    let eps = 1e-12;
    let k = ((horizon - 2.0) / 2.0 + eps).floor().max(0.0) as usize;
    let l = ((horizon - 1.0) / 2.0 + eps).floor().max(0.0) as usize;
    (k, l)
}

/// `A_{k,l}(x) f = ∫₀¹ 𝐊_{k,l}(s, x) f(s) ds` for one admissible pair.
#[derive(Clone)]
pub struct FredholmSystem {
    pub k: usize,
    pub l: usize,
    pub kernels: CascadeKernels,
}

impl FredholmSystem {
    /// `diag(φ(2k+2−x), φ(2l+x))`.
    pub fn a(&self, x: f64) -> Result<(f64, f64)> {
        Ok((
            self.kernels.phi(2.0 * self.k as f64 + 2.0 - x)?,
            self.kernels.phi(2.0 * self.l as f64 + x)?,
        ))
    }

    /// `[[K_k¹¹, K_k¹²], [K_l²¹, K_l²²]](s, x)`.
    pub fn kernel(&self, s: f64, x: f64) -> Result<[[f64; 2]; 2]> {
        let kk = &self.kernels;
        Ok([
            [kk.k11(self.k, s, x)?, kk.k12(self.k, s, x)?],
            [kk.k21(self.l, s, x)?, kk.k22(self.l, s, x)?],
        ])
    }
}

/// Builds the system for `(k, l)`; both strips must lie inside `[2, T]`.
pub fn cascade_kernels(fields: Arc<CoeffFields>, k: usize, l: usize, quad_tol: f64) -> Result<FredholmSystem> {
    let (km, lm) = admissible(fields.horizon);
    if k < 1 || l < 1 || k > km || l > lm {
        return Err(Error::Invalid(format!(
            "pair (k, l) = ({k}, {l}) outside the admissible range 1 <= k <= {km}, 1 <= l <= {lm} for T = {}",
            fields.horizon
        )));
    }
    Ok(FredholmSystem {
        k,
        l,
        kernels: CascadeKernels::new(fields, quad_tol),
    })
}

#[derive(Debug, Clone, Serialize)]
pub enum NystromForm {
    /// `matrix` discretizes `f ↦ A⁻¹∫𝐊f`.
    SecondKind,
    /// `A` vanishes at some node; `matrix` discretizes `∫𝐊f` and the pencil
    /// is `(diag(a_diag), matrix)`.
    ThirdKind { a_diag: Vec<f64> },
}

/// Gauss–Legendre Nyström discretization; unknowns ordered `(p(x₁..x_N), q(x₁..x_N))`.
#[derive(Debug, Clone, Serialize)]
pub struct Nystrom {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    pub form: NystromForm,
}

impl Nystrom {
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.matrix.clone().complex_eigenvalues().iter().copied().collect()
    }

    /// Spectrum sorted by distance to 1.
    pub fn near_one(&self, count: usize) -> Vec<SpectralPoint> {
        let mut v: Vec<SpectralPoint> = self
            .eigenvalues()
            .into_iter()
            .map(|z| SpectralPoint {
                re: z.re,
                im: z.im,
                distance_to_one: (z - 1.0).norm(),
            })
            .collect();
        v.sort_by(|a, b| a.distance_to_one.total_cmp(&b.distance_to_one));
        v.truncate(count);
        v
    }
}

/// Second-kind matrix when `|A| > τ_φ` at every node; otherwise the
/// third-kind pencil if `allow_pencil`, else an error naming the node.
pub fn nystrom_assemble(sys: &FredholmSystem, n: usize, tol: &Tolerances, allow_pencil: bool) -> Result<Nystrom> {
    if n < 8 {
        return Err(Error::Grid(format!("Nyström needs at least 8 nodes, got {n}")));
    }
    let (nodes, weights) = gauss_legendre_on(n, 0.0, 1.0);
    let a: Vec<(f64, f64)> = nodes.iter().map(|&x| sys.a(x)).collect::<Result<_>>()?;
    let mut singular = None;
    for (i, &(a1, a2)) in a.iter().enumerate() {
        let v = a1.abs().min(a2.abs());
        if v <= tol.tau_phi {
            singular = Some((nodes[i], v));
            break;
        }
    }
    let second = singular.is_none();
    if let Some((x, value)) = singular {
        if !allow_pencil {
            return Err(Error::SingularFactor { x, value });
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = nodes[i];
            let mut r1 = vec![0.0; 2 * n];
            let mut r2 = vec![0.0; 2 * n];
            for j in 0..n {
                let k = sys.kernel(nodes[j], x)?;
                let w = weights[j];
                r1[j] = w * k[0][0];
                r1[n + j] = w * k[0][1];
                r2[j] = w * k[1][0];
                r2[n + j] = w * k[1][1];
            }
            if second {
                r1.iter_mut().for_each(|v| *v /= a[i].0);
                r2.iter_mut().for_each(|v| *v /= a[i].1);
            }
            Ok(vec![r1, r2])
        })
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut matrix = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for c in 0..2 * n {
            matrix[(i, c)] = rows[2 * i][c];
            matrix[(n + i, c)] = rows[2 * i + 1][c];
        }
    }
    let form = if second {
        NystromForm::SecondKind
    } else {
        let mut d: Vec<f64> = a.iter().map(|v| v.0).collect();
        d.extend(a.iter().map(|v| v.1));
        NystromForm::ThirdKind { a_diag: d }
    };
    Ok(Nystrom {
        nodes,
        weights,
        matrix,
        form,
    })
}

/// Nyström interpolant `u(x) = λ⁻¹A(x)⁻¹ Σⱼ wⱼ𝐊(sⱼ, x)uⱼ` of an eigenvector.
pub fn nystrom_interpolant(sys: &FredholmSystem, ny: &Nystrom, u: &DVector<f64>, lambda: f64) -> (Profile1, Profile1) {
    let n = ny.nodes.len();
    let sys = Arc::new(sys.clone());
    let (nodes, weights) = (Arc::new(ny.nodes.clone()), Arc::new(ny.weights.clone()));
    let u = Arc::new(u.clone());
    let eval = move |x: f64| -> (f64, f64) {
        let (a1, a2) = sys.a(x).unwrap_or((f64::NAN, f64::NAN));
        let (mut s1, mut s2) = (0.0, 0.0);
        for j in 0..n {
            let k = sys.kernel(nodes[j], x).unwrap_or([[f64::NAN; 2]; 2]);
            s1 += weights[j] * (k[0][0] * u[j] + k[0][1] * u[n + j]);
            s2 += weights[j] * (k[1][0] * u[j] + k[1][1] * u[n + j]);
        }
        (s1 / (lambda * a1), s2 / (lambda * a2))
    };
    let e = Arc::new(eval);
    let e2 = e.clone();
    (Arc::new(move |x| e(x).0), Arc::new(move |x| e2(x).1))
}

fn check_cascade(spec: &SystemSpec) -> Result<()> {
    let m = spec.m;
    let ok = m.m11 == 0.0 && m.m21 == 0.0 && m.m22 == 0.0 && m.m12 != 0.0 && spec.b.b1 == 0.0 && spec.b.b2 != 0.0;
    if ok {
        Ok(())
    } else {
        Err(Error::Invalid(
            "cascade analysis needs M = [[0, m], [0, 0]] with m ≠ 0 and B = (0, b) with b ≠ 0".into(),
        ))
    }
}

/// Cascade criterion: `Holds` at the first admissible `(k, l)` with an
/// invertible diagonal factor and `1 ∉ σ(𝒦_{k,l})`.
pub fn cascade_uc(spec: &SystemSpec, n: usize, tol: &Tolerances) -> Result<UCVerdict> {
    check_cascade(spec)?;
    let big_t = spec.horizon();
    if big_t < 4.0 - 1e-12 {
        return Err(Error::Invalid(format!("cascade criterion needs T >= 4, got {big_t}")));
    }
    let (km, lm) = admissible(big_t);
    let kernels = CascadeKernels::new(spec.fields.clone(), tol.quad_tol);
    let pairs: Vec<(usize, usize)> = (1..=km).flat_map(|k| (1..=lm).map(move |l| (k, l))).collect();
    let reports: Vec<PairReport> = pairs
        .par_iter()
        .map(|&(k, l)| {
            let sys = FredholmSystem {
                k,
                l,
                kernels: kernels.clone(),
            };
            let (mut probe, _) = gauss_legendre_on(n, 0.0, 1.0);
            probe.extend((0..=200).map(|i| i as f64 / 200.0));
            let mut singular_nodes = Vec::new();
            let mut borderline = false;
            for &x in &probe {
                let (a1, a2) = sys.a(x)?;
                match judge(a1.abs().min(a2.abs()), tol.tau_phi, tol.band) {
                    Margin::Fail => singular_nodes.push(x),
                    Margin::Borderline => borderline = true,
                    Margin::Pass => {}
                }
            }
            if !singular_nodes.is_empty() || borderline {
                return Ok(PairReport {
                    k,
                    l,
                    distance_to_one: None,
                    outcome: if singular_nodes.is_empty() {
                        UcOutcome::Inconclusive
                    } else {
                        UcOutcome::Fails
                    },
                    singular_nodes,
                    near_one: Vec::new(),
                });
            }
            let ny = nystrom_assemble(&sys, n, tol, false)?;
            let near = ny.near_one(6);
            let d = near.first().map(|p| p.distance_to_one).unwrap_or(f64::INFINITY);
            Ok(PairReport {
                k,
                l,
                distance_to_one: Some(d),
                outcome: match judge(d, tol.tau_spec, tol.band) {
                    Margin::Pass => UcOutcome::Holds,
                    Margin::Fail => UcOutcome::Fails,
                    Margin::Borderline => UcOutcome::Inconclusive,
                },
                singular_nodes,
                near_one: near,
            })
        })
        .collect::<Result<_>>()?;

    let mut v = UCVerdict::new(Regime::Cascade);
    v.window = Some(format!("1 <= k <= {km}, 1 <= l <= {lm}, {n} Nyström nodes"));
    if let Some(r) = reports.iter().find(|r| r.outcome == UcOutcome::Holds) {
        v.verdict = UcOutcome::Holds;
        v.witness = Some((r.k as i64, r.l as i64));
        v.margin = r.distance_to_one;
        v.spectral = r.near_one.clone();
    } else if reports.iter().any(|r| r.outcome == UcOutcome::Inconclusive) {
        v.verdict = UcOutcome::Inconclusive;
        v.notes.push("no pair decisive: margins within the tolerance band".into());
    } else {
        v.verdict = UcOutcome::Fails;
        v.notes.push(
            "the spectral criterion is sufficient only: this verdict means no admissible pair certifies unique continuation"
                .into(),
        );
        if reports.iter().all(|r| r.distance_to_one.is_none()) {
            v.notes.push("the diagonal factor vanishes for every admissible pair (degenerate)".into());
        } else {
            v.notes.push("1 lies in the Nyström spectrum, or A is singular, for every admissible pair".into());
        }
        v.margin = reports.iter().filter_map(|r| r.distance_to_one).reduce(f64::max);
    }
    if let Some(r) = reports.first() {
        if v.spectral.is_empty() {
            v.spectral = r.near_one.clone();
        }
    }
    v.pairs = reports;
    Ok(v)
}

/// Composite Gauss–Legendre on `[lo, hi]` split at `breaks`.
fn quad_split(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, breaks: &[f64]) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts = vec![lo];
    pts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    let mut s = 0.0;
    for w in pts.windows(2) {
        let panels = 4;
        for p in 0..panels {
            let a = w[0] + (w[1] - w[0]) * p as f64 / panels as f64;
            let b = w[0] + (w[1] - w[0]) * (p + 1) as f64 / panels as f64;
            let (x, wt) = gauss_legendre_on(20, a, b);
            s += x.iter().zip(&wt).map(|(x, w)| w * f(*x)).sum::<f64>();
        }
    }
    s
}

/// Half-integers where `2τ − c` crosses an integer, for `τ ∈ [lo, hi]`.
fn crossings(c: f64, lo: f64, hi: f64) -> Vec<f64> {
    let a = (2.0 * lo - c).ceil() as i64;
    let b = (2.0 * hi - c).floor() as i64;
    (a..=b).map(|m| 0.5 * (m as f64 + c)).collect()
}

struct Source<'a> {
    fields: &'a CoeffFields,
    p0: &'a dyn Fn(f64) -> f64,
    q0: &'a dyn Fn(f64) -> f64,
}

impl Source<'_> {
    fn f(&self, tau: f64, x: f64) -> f64 {
        let (e1, e2) = self.fields.etas(tau, x).unwrap_or((f64::NAN, f64::NAN));
        let (p, q) = minus_at(self.p0, self.q0, tau, x);
        e1 * p + e2 * q
    }

    /// `∫_{lo}^{hi} f(τ, t − τ) dτ`.
    fn falling(&self, t: f64, lo: f64, hi: f64) -> f64 {
        quad_split(&|tau| self.f(tau, t - tau), lo, hi, &crossings(t, lo, hi))
    }

    /// `∫_{lo}^{hi} f(τ, τ + 2 − t) dτ`.
    fn rising(&self, t: f64, lo: f64, hi: f64) -> f64 {
        quad_split(&|tau| self.f(tau, tau + 2.0 - t), lo, hi, &crossings(t - 2.0, lo, hi))
    }
}

/// Residual at `t ≥ 2` of the identity that involves only `(p₀⁻, q₀⁻)`.
pub fn system3_residual(fields: &CoeffFields, p0: &dyn Fn(f64) -> f64, q0: &dyn Fn(f64) -> f64, t: f64) -> f64 {
    let src = Source { fields, p0, q0 };
    -src.rising(t, t - 2.0, t - 1.0) + src.falling(t, t - 1.0, t)
}

/// `(p₀⁺, q₀⁺)` making the first two identities exact for given `(p₀⁻, q₀⁻)`.
pub fn back_solve_plus(spec: &SystemSpec, p0: Profile1, q0: Profile1) -> (Profile1, Profile1) {
    let fields = spec.fields.clone();
    let (pa, qa) = (p0.clone(), q0.clone());
    let f2 = fields.clone();
    let q_plus: Profile1 = Arc::new(move |y: f64| {
        let src = Source {
            fields: &fields,
            p0: &*pa,
            q0: &*qa,
        };
        -src.falling(y, 0.0, y)
    });
    let p_plus: Profile1 = Arc::new(move |y: f64| {
        let t = 2.0 - y;
        let src = Source {
            fields: &f2,
            p0: &*p0,
            q0: &*q0,
        };
        -src.rising(t, 0.0, t - 1.0) + src.falling(t, t - 1.0, t)
    });
    (p_plus, q_plus)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residuals {
    pub system1: f64,
    pub system2: f64,
    pub system3: f64,
}

/// Sup-norms over `samples + 1` points of each strip of the three boundary
/// identities: `t ∈ [0,1]`, `[1,2]`, `[2,T]`.
pub fn residual_equations_check(
    spec: &SystemSpec,
    minus: (&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64),
    plus: (&dyn Fn(f64) -> f64, &dyn Fn(f64) -> f64),
    samples: usize,
) -> Result<Residuals> {
    check_cascade(spec)?;
    let fields = &*spec.fields;
    let src = Source {
        fields,
        p0: minus.0,
        q0: minus.1,
    };
    let grid = |a: f64, b: f64| (0..=samples).map(move |i| a + (b - a) * i as f64 / samples as f64);
    let r1 = grid(0.0, 1.0)
        .map(|t| (plus.1(t) + src.falling(t, 0.0, t)).abs())
        .fold(0.0, f64::max);
    let r2 = grid(1.0, 2.0)
        .map(|t| (-plus.0(2.0 - t) - src.rising(t, 0.0, t - 1.0) + src.falling(t, t - 1.0, t)).abs())
        .fold(0.0, f64::max);
    let big_t = spec.horizon();
    let r3 = if big_t > 2.0 {
        grid(2.0, big_t)
            .map(|t| system3_residual(fields, minus.0, minus.1, t).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(Residuals {
        system1: r1,
        system2: r2,
        system3: r3,
    })
}
