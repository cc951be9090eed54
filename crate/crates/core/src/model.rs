//! Contact-mode observation models and the two-mass linear plant.
//!
//! Sign convention used throughout the crate: the measured force is the force
//! on the sensor spring, `f = K1·(q2 − q1)`. A gap is `q1 − q2`, so a contact
//! mode with gap `g` predicts a mean force of `−K1·g`. Information measures are
//! invariant to this sign.

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;

/// Default sample period, 1250 Hz.
pub const DEFAULT_TS: f64 = 0.0008;
/// Force sensor noise variance used for every magazine condition (N²).
pub const DEFAULT_SIGMA_F: f64 = 1.25;

/// Linear spring observation model for one contact mode: `f = K·(q − q0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContactModeRepr", into = "ContactModeRepr")]
pub struct ContactMode {
    pub name: String,
    /// L×D stiffness (N/m).
    pub stiffness: DMatrix<f64>,
    /// D-vector rest position (m).
    pub rest_position: DVector<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactModeRepr {
    name: String,
    stiffness: Vec<Vec<f64>>,
    rest_position: Vec<f64>,
}

impl TryFrom<ContactModeRepr> for ContactMode {
    type Error = Error;

    fn try_from(r: ContactModeRepr) -> Result<Self> {
        let l = r.stiffness.len();
        let d = r.rest_position.len();
        if l == 0 || r.stiffness.iter().any(|row| row.len() != d) {
            return Err(Error::arg(format!(
                "stiffness of mode `{}` must be L x {d} with L >= 1",
                r.name
            )));
        }
        ContactMode::new(
            r.name,
            DMatrix::from_fn(l, d, |i, j| r.stiffness[i][j]),
            DVector::from_vec(r.rest_position),
        )
    }
}

impl From<ContactMode> for ContactModeRepr {
    fn from(m: ContactMode) -> Self {
        ContactModeRepr {
            stiffness: (0..m.stiffness.nrows())
                .map(|i| m.stiffness.row(i).iter().copied().collect())
                .collect(),
            rest_position: m.rest_position.iter().copied().collect(),
            name: m.name,
        }
    }
}

impl ContactMode {
    pub fn new(name: impl Into<String>, stiffness: DMatrix<f64>, rest_position: DVector<f64>) -> Result<Self> {
        let name = name.into();
        if stiffness.ncols() != rest_position.len() {
            return Err(Error::arg(format!(
                "mode `{name}`: stiffness has {} columns, rest position has {} entries",
                stiffness.ncols(),
                rest_position.len()
            )));
        }
        if stiffness.iter().chain(rest_position.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg(format!("mode `{name}`: non-finite parameters")));
        }
        Ok(Self {
            name,
            stiffness,
            rest_position,
        })
    }

    /// Zero-stiffness mode over a D-dimensional configuration with L force channels.
    pub fn free_space(name: impl Into<String>, l: usize, d: usize) -> Self {
        Self {
            name: name.into(),
            stiffness: DMatrix::zeros(l, d),
            rest_position: DVector::zeros(d),
        }
    }

    /// Sensor spring between measured `q1` and environment `q2`, over `q = [q1, q2]`.
    pub fn sensor_spring(name: impl Into<String>, k1: f64) -> Self {
        Self {
            name: name.into(),
            stiffness: DMatrix::from_row_slice(1, 2, &[-k1, k1]),
            rest_position: DVector::zeros(2),
        }
    }

    pub fn is_free_space(&self) -> bool {
        self.stiffness.iter().all(|k| *k == 0.0)
    }

    pub fn force_dim(&self) -> usize {
        self.stiffness.nrows()
    }

    pub fn config_dim(&self) -> usize {
        self.stiffness.ncols()
    }

    pub fn mean_force(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        if q.len() != self.config_dim() {
            return Err(Error::arg(format!(
                "mode `{}` expects a {}-dimensional configuration, got {}",
                self.name,
                self.config_dim(),
                q.len()
            )));
        }
        Ok(&self.stiffness * (q - &self.rest_position))
    }
}

/// N(K·(q − q0), Σf): the force likelihood of one mode at configuration `q`.
pub fn mode_force_distribution(mode: &ContactMode, q: &DVector<f64>, sigma_f: &DMatrix<f64>) -> Result<Gaussian> {
    if sigma_f.nrows() != mode.force_dim() {
        return Err(Error::arg(format!(
            "sigma_f is {}x{}, mode `{}` has {} force channels",
            sigma_f.nrows(),
            sigma_f.ncols(),
            mode.name,
            mode.force_dim()
        )));
    }
    Gaussian::new(mode.mean_force(q)?, sigma_f.clone())
}

/// Parameters of the two-mass plant: a measured mass at `q1` coupled through the
/// sensor spring `K1` to a hidden mass `M2` with damping `B2` and ground spring `K2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoMassModel {
    /// Hidden mass (kg).
    #[serde(rename = "M2")]
    pub m2: f64,
    /// Hidden-mass damping (N·s/m).
    #[serde(rename = "B2")]
    pub b2: f64,
    /// Ground stiffness (N/m).
    #[serde(rename = "K2")]
    pub k2: f64,
    /// Sensor/contact stiffness (N/m). Zero models free space.
    #[serde(rename = "K1")]
    pub k1: f64,
    /// Sample period (s).
    #[serde(rename = "Ts", default = "default_ts")]
    pub ts: f64,
    /// Process-noise force variance (N²).
    #[serde(default)]
    pub sigma_w: f64,
    /// Force measurement noise variance (N²).
    #[serde(default = "default_sigma_f")]
    pub sigma_f: f64,
}

fn default_ts() -> f64 {
    DEFAULT_TS
}

fn default_sigma_f() -> f64 {
    DEFAULT_SIGMA_F
}

/// Compliance placements of the identified magazine contact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagazineCondition {
    FlexJoints,
    CompliantSurface,
    CompliantFeet,
}

impl MagazineCondition {
    pub const ALL: [MagazineCondition; 3] = [
        MagazineCondition::FlexJoints,
        MagazineCondition::CompliantSurface,
        MagazineCondition::CompliantFeet,
    ];

    /// Identified (K1, M2, B2, K2).
    pub fn parameters(self) -> (f64, f64, f64, f64) {
        match self {
            MagazineCondition::FlexJoints => (17.4e4, 20.1, 305.0, 2630.0),
            MagazineCondition::CompliantSurface => (1.3e4, 63.9, 1870.0, 7350.0),
            MagazineCondition::CompliantFeet => (2.61e4, 69.3, 1080.0, 1.81e4),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MagazineCondition::FlexJoints => "flex_joints",
            MagazineCondition::CompliantSurface => "compliant_surface",
            MagazineCondition::CompliantFeet => "compliant_feet",
        }
    }

    /// Model at 1250 Hz with Σf = 1.25 and the given process noise.
    pub fn model(self, sigma_w: f64) -> TwoMassModel {
        let (k1, m2, b2, k2) = self.parameters();
        TwoMassModel {
            m2,
            b2,
            k2,
            k1,
            ts: DEFAULT_TS,
            sigma_w,
            sigma_f: DEFAULT_SIGMA_F,
        }
    }
}

impl TwoMassModel {
    /// Checks parameter signs. `sigma_f = 0` is allowed here for noise-free
    /// simulation; estimators require it to be positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("M2", self.m2),
            ("B2", self.b2),
            ("K2", self.k2),
            ("K1", self.k1),
            ("Ts", self.ts),
            ("sigma_w", self.sigma_w),
            ("sigma_f", self.sigma_f),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::arg(format!("{name} must be finite")));
        }
        if self.m2 <= 0.0 {
            return Err(Error::arg("M2 must be > 0"));
        }
        if self.ts <= 0.0 {
            return Err(Error::arg("Ts must be > 0"));
        }
        for (name, v) in [("B2", self.b2), ("K2", self.k2), ("K1", self.k1), ("sigma_w", self.sigma_w), ("sigma_f", self.sigma_f)] {
            if v < 0.0 {
                return Err(Error::arg(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Copy with the sensor spring removed (free-space dynamics of the hidden mass).
    pub fn free_space(&self) -> TwoMassModel {
        TwoMassModel { k1: 0.0, ..*self }
    }

    pub fn is_free_space(&self) -> bool {
        self.k1 == 0.0
    }

    /// Undamped natural frequency of the coupled hidden mass, √((K1+K2)/M2) in rad/s.
    pub fn natural_frequency(&self) -> f64 {
        ((self.k1 + self.k2) / self.m2).sqrt()
    }

    /// (K1, M2, B2, K2) in that order.
    pub fn design_vector(&self) -> [f64; 4] {
        [self.k1, self.m2, self.b2, self.k2]
    }

    pub fn with_design_vector(&self, p: [f64; 4]) -> TwoMassModel {
        TwoMassModel {
            k1: p[0],
            m2: p[1],
            b2: p[2],
            k2: p[3],
            ..*self
        }
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "M2={} B2={} K2={} K1={} Ts={} sigma_w={} sigma_f={}",
            self.m2, self.b2, self.k2, self.k1, self.ts, self.sigma_w, self.sigma_f
        )
    }
}

/// Discrete state-space form over the hidden state `[q2, q̇2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Matrix2<f64>,
    /// Input gain for `q1`.
    pub b: Vector2<f64>,
    /// Process-noise (force disturbance) gain.
    pub bw: Vector2<f64>,
    /// Force output row `[K1, 0]`.
    pub c: RowVector2<f64>,
}

impl StateSpace {
    /// Spectral radius of `A`.
    pub fn spectral_radius(&self) -> f64 {
        let tr = self.a.trace();
        let det = self.a.determinant();
        let disc = 0.25 * tr * tr - det;
        if disc >= 0.0 {
            let s = disc.sqrt();
            (0.5 * tr + s).abs().max((0.5 * tr - s).abs())
        } else {
            det.sqrt()
        }
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// Bw·Σw·Bwᵀ.
    pub fn process_cov(&self, sigma_w: f64) -> Matrix2<f64> {
        self.bw * sigma_w * self.bw.transpose()
    }
}

/// First-order (forward Euler) discretization of the two-mass dynamics.
///
/// The disturbance gain carries the `Ts` factor like the deterministic input,
/// so `Σw` is a force variance per unit time step.
pub fn discretize(model: &TwoMassModel) -> StateSpace {
    let TwoMassModel { m2, b2, k2, k1, ts, .. } = *model;
    StateSpace {
        a: Matrix2::new(1.0, ts, -ts * (k2 + k1) / m2, 1.0 - ts * b2 / m2),
        b: Vector2::new(0.0, ts * k1 / m2),
        bw: Vector2::new(0.0, ts / m2),
        c: RowVector2::new(k1, 0.0),
    }
}
