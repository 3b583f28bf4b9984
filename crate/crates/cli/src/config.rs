//! JSON run configuration.

use serde::{Deserialize, Serialize};

use cwobs::characteristics::CoeffFields;
use cwobs::expr::Expr;
use cwobs::smallmat::{Mat2, Vec2};
use cwobs::solver::SystemSpec;
use cwobs::uniqcont::SGrid;
use cwobs::Tolerances;

/// Name of the environment variable holding default tolerance overrides as
/// a JSON object, e.g. `{"tau_phi": 1e-8}`. Values in the config win.
pub const TOL_ENV: &str = "CWOBS_TOLERANCES";

/// A schema violation located by a dotted field path.
#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "field `{}`: {}", self.path, self.message)
    }
}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Simulate,
    Observability,
    Uc,
    Fattorini,
    Compactness,
}

impl Analysis {
    pub const ALL: [Analysis; 5] = [
        Analysis::Simulate,
        Analysis::Observability,
        Analysis::Uc,
        Analysis::Fattorini,
        Analysis::Compactness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Simulate => "simulate",
            Analysis::Observability => "observability",
            Analysis::Uc => "uc",
            Analysis::Fattorini => "fattorini",
            Analysis::Compactness => "compactness",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// `M` by rows.
    pub matrix: [[f64; 2]; 2],
    /// The observation vector `B`.
    pub control: [f64; 2],
    /// Horizon `T`.
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta1: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta2: Option<Expr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub p: [Expr; 2],
    pub q: [Expr; 2],
}

impl Default for InitialData {
    fn default() -> Self {
        let s: Expr = "sin(pi*x)".parse().expect("literal");
        let z = Expr::constant(0.0);
        InitialData {
            p: [s.clone(), z.clone()],
            q: [s, z],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub nx: usize,
    /// Output intervals on `[0, T]`; defaults to `T·nx`.
    pub nt: Option<usize>,
    pub mode: SimMode,
    pub initial: InitialData,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            nx: 64,
            nt: None,
            mode: SimMode::Full,
            initial: InitialData::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservabilityConfig {
    pub cells: usize,
    pub witness_frequency: usize,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        ObservabilityConfig {
            cells: 512,
            witness_frequency: 16,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UcConfig {
    pub nystrom_n: usize,
    /// Frequency window of the constant-coefficient scan.
    pub n_max: usize,
}

impl Default for UcConfig {
    fn default() -> Self {
        UcConfig {
            nystrom_n: 32,
            n_max: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FattoriniConfig {
    pub re: (f64, f64),
    pub im: (f64, f64),
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for FattoriniConfig {
    fn default() -> Self {
        let g = SGrid::default();
        FattoriniConfig {
            re: g.re,
            im: g.im,
            n_re: g.n_re,
            n_im: g.n_im,
        }
    }
}

impl FattoriniConfig {
    pub fn grid(&self) -> SGrid {
        SGrid {
            re: self.re,
            im: self.im,
            n_re: self.n_re,
            n_im: self.n_im,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompactnessConfig {
    pub nx: usize,
}

impl Default for CompactnessConfig {
    fn default() -> Self {
        CompactnessConfig { nx: 32 }
    }
}

/// Optional tolerance overrides, applied over the defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolOverrides {
    pub tau_eig: Option<f64>,
    pub tau_rank: Option<f64>,
    pub tau_phi: Option<f64>,
    pub tau_minor: Option<f64>,
    pub tau_spec: Option<f64>,
    pub quad_tol: Option<f64>,
    pub picard_tol: Option<f64>,
    pub mean_zero: Option<f64>,
    pub band: Option<f64>,
}

impl TolOverrides {
    pub fn apply(&self, t: &mut Tolerances) {
        let pairs = [
            (self.tau_eig, &mut t.tau_eig),
            (self.tau_rank, &mut t.tau_rank),
            (self.tau_phi, &mut t.tau_phi),
            (self.tau_minor, &mut t.tau_minor),
            (self.tau_spec, &mut t.tau_spec),
            (self.quad_tol, &mut t.quad_tol),
            (self.picard_tol, &mut t.picard_tol),
            (self.mean_zero, &mut t.mean_zero),
            (self.band, &mut t.band),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    /// Analyses run when no selection flag is given on the command line.
    #[serde(default)]
    pub analyses: Vec<Analysis>,
    #[serde(default)]
    pub tolerances: TolOverrides,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub observability: ObservabilityConfig,
    #[serde(default)]
    pub uc: UcConfig,
    #[serde(default)]
    pub fattorini: FattoriniConfig,
    #[serde(default)]
    pub compactness: CompactnessConfig,
}

/// Deserializes with the failing field path attached.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, root: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (root.is_empty(), inner.as_str()) {
            (true, _) => inner.clone(),
            (false, ".") => root.to_string(),
            (false, _) => format!("{root}.{inner}"),
        };
        err(&path, e.into_inner().to_string())
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = parse_json(text, "")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let s = &self.system;
        let finite = s.matrix.iter().flatten().chain(&s.control).all(|v| v.is_finite());
        if !finite {
            return Err(err("system.matrix", "entries of M and B must be finite"));
        }
        if !(s.horizon > 0.0 && s.horizon.is_finite()) {
            return Err(err("system.horizon", "must be positive and finite"));
        }
        let raw = s.a.is_some() || s.b.is_some();
        let eta = s.eta1.is_some() || s.eta2.is_some();
        if raw && eta {
            return Err(err("system", "give either a/b or eta1/eta2, not both"));
        }
        if !raw && !eta {
            return Err(err("system.a", "missing coupling coefficients a and b"));
        }
        for (name, v) in [("a", &s.a), ("b", &s.b)].into_iter().filter(|_| raw) {
            if v.is_none() {
                return Err(err(&format!("system.{name}"), "missing"));
            }
        }
        for (name, v) in [("eta1", &s.eta1), ("eta2", &s.eta2)].into_iter().filter(|_| eta) {
            if v.is_none() {
                return Err(err(&format!("system.{name}"), "missing"));
            }
        }
        let mins = [
            ("simulate.nx", self.simulate.nx, 2),
            ("simulate.nt", self.simulate.nt.unwrap_or(1), 1),
            ("observability.cells", self.observability.cells, 2),
            ("uc.nystrom_n", self.uc.nystrom_n, 4),
            ("fattorini.n_re", self.fattorini.n_re, 1),
            ("fattorini.n_im", self.fattorini.n_im, 1),
            ("compactness.nx", self.compactness.nx, 2),
        ];
        for (path, v, min) in mins {
            if v < min {
                return Err(err(path, format!("must be at least {min}, got {v}")));
            }
        }
        let f = &self.fattorini;
        if !(f.re.0 <= f.re.1 && f.im.0 <= f.im.1) {
            return Err(err("fattorini", "rectangle bounds must be ordered"));
        }
        let mut t = Tolerances::default();
        self.tolerances.apply(&mut t);
        t.validate()
            .map_err(|name| err(&format!("tolerances.{name}"), "must be positive and finite (band >= 1)"))?;
        Ok(())
    }

    /// Defaults, then the environment overrides, then the config.
    pub fn tolerances(&self, env: Option<&str>) -> Result<Tolerances, ConfigError> {
        let mut t = Tolerances::default();
        if let Some(text) = env {
            let o: TolOverrides = parse_json(text, TOL_ENV)?;
            o.apply(&mut t);
        }
        self.tolerances.apply(&mut t);
        t.validate()
            .map_err(|name| err(&format!("{TOL_ENV}.{name}"), "must be positive and finite (band >= 1)"))?;
        Ok(t)
    }

    pub fn fields(&self) -> CoeffFields {
        let s = &self.system;
        match (&s.a, &s.b, &s.eta1, &s.eta2) {
            (Some(a), Some(b), _, _) => CoeffFields::from_ab(a.clone(), b.clone(), s.horizon),
            (_, _, Some(e1), Some(e2)) => CoeffFields::from_eta(e1.clone(), e2.clone(), s.horizon),
            _ => unreachable!("validated"),
        }
    }

    pub fn spec(&self) -> cwobs::Result<SystemSpec> {
        let m = self.system.matrix;
        let b = self.system.control;
        SystemSpec::new(
            Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1]),
            Vec2::new(b[0], b[1]),
            self.fields(),
        )
    }
}
