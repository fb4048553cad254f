//! Spin-system parameterisations, partial configurations and log-space weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex};

pub type Spin = u8;

/// Normalised symmetric two-spin system: `A = [[β, 1], [1, γ]]`, `b = (1, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSpinParams {
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl TwoSpinParams {
    pub fn new(beta: f64, gamma: f64, lambda: f64) -> Result<Self> {
        if !(beta >= 0.0 && gamma >= 0.0 && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::arg(format!("need β, γ >= 0, got β={beta} γ={gamma}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("need λ > 0, got {lambda}")));
        }
        Ok(TwoSpinParams { beta, gamma, lambda })
    }

    pub fn hardcore(lambda: f64) -> Result<Self> {
        Self::new(1.0, 0.0, lambda)
    }

    pub fn ising(coupling: f64, lambda: f64) -> Result<Self> {
        Self::new(coupling, coupling, lambda)
    }

    pub fn is_antiferromagnetic(&self) -> bool {
        self.beta * self.gamma < 1.0
    }

    pub fn is_hardcore(&self) -> bool {
        self.beta == 1.0 && self.gamma == 0.0
    }
}

/// General `q`-spin system with interaction matrix `A` and field `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QSpinParams {
    pub q: usize,
    /// Row-major `q x q`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl QSpinParams {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let q = b.len();
        if q < 2 || q > Spin::MAX as usize {
            return Err(Error::arg(format!("need 2 <= q <= 255, got q={q}")));
        }
        if a.len() != q || a.iter().any(|row| row.len() != q) {
            return Err(Error::arg("interaction matrix must be q x q"));
        }
        let flat: Vec<f64> = a.into_iter().flatten().collect();
        if flat.iter().chain(&b).any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::arg("interaction and field entries must be finite and >= 0"));
        }
        if !b.iter().any(|&x| x > 0.0) {
            return Err(Error::arg("at least one field entry must be positive"));
        }
        for i in 0..q {
            for j in 0..q {
                if flat[i * q + j] != flat[j * q + i] {
                    return Err(Error::arg("interaction matrix must be symmetric"));
                }
            }
        }
        Ok(QSpinParams { q, a: flat, b })
    }

    pub fn interaction(&self, i: Spin, j: Spin) -> f64 {
        self.a[i as usize * self.q + j as usize]
    }
}

/// Either parameterisation; everything downstream works through
/// [`SpinModel::to_q_spin`].
#[derive(Clone, Debug, PartialEq)]
pub enum SpinModel {
    TwoSpin(TwoSpinParams),
    QSpin(QSpinParams),
}

impl From<TwoSpinParams> for SpinModel {
    fn from(p: TwoSpinParams) -> Self {
        SpinModel::TwoSpin(p)
    }
}

impl From<QSpinParams> for SpinModel {
    fn from(p: QSpinParams) -> Self {
        SpinModel::QSpin(p)
    }
}

impl SpinModel {
    pub fn q(&self) -> usize {
        match self {
            SpinModel::TwoSpin(_) => 2,
            SpinModel::QSpin(p) => p.q,
        }
    }

    pub fn to_q_spin(&self) -> QSpinParams {
        match self {
            SpinModel::TwoSpin(p) => QSpinParams {
                q: 2,
                a: vec![p.beta, 1.0, 1.0, p.gamma],
                b: vec![1.0, p.lambda],
            },
            SpinModel::QSpin(p) => p.clone(),
        }
    }

    pub fn two_spin(&self) -> Option<TwoSpinParams> {
        match self {
            SpinModel::TwoSpin(p) => Some(*p),
            SpinModel::QSpin(_) => None,
        }
    }

    /// Parses the model file format: `{"kind": "hardcore", "lambda": x}`,
    /// `{"kind": "two_spin", "beta", "gamma", "lambda"}` or
    /// `{"kind": "q_spin", "A": [[..]], "b": [..]}`.
    pub fn from_json(text: &str) -> Result<SpinModel> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(match file {
            ModelFile::Hardcore { lambda } => TwoSpinParams::hardcore(lambda)?.into(),
            ModelFile::TwoSpin { beta, gamma, lambda } => {
                TwoSpinParams::new(beta, gamma, lambda)?.into()
            }
            ModelFile::QSpin { a, b } => QSpinParams::new(a, b)?.into(),
        })
    }

    fn to_file(&self) -> ModelFile {
        match self {
            SpinModel::TwoSpin(p) if p.is_hardcore() => ModelFile::Hardcore { lambda: p.lambda },
            SpinModel::TwoSpin(p) => ModelFile::TwoSpin {
                beta: p.beta,
                gamma: p.gamma,
                lambda: p.lambda,
            },
            SpinModel::QSpin(p) => ModelFile::QSpin {
                a: p.a.chunks(p.q).map(<[f64]>::to_vec).collect(),
                b: p.b.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("model serialization")
    }
}

impl Serialize for SpinModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ModelFile {
    Hardcore {
        lambda: f64,
    },
    TwoSpin {
        beta: f64,
        gamma: f64,
        lambda: f64,
    },
    QSpin {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
}

/// A pinning: a partial map from vertices to spins.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PartialConfiguration {
    spins: Vec<Option<Spin>>,
}

impl PartialConfiguration {
    pub fn empty(n: usize) -> Self {
        PartialConfiguration { spins: vec![None; n] }
    }

    pub fn full(spins: &[Spin]) -> Self {
        PartialConfiguration {
            spins: spins.iter().map(|&s| Some(s)).collect(),
        }
    }

    pub fn from_pairs(n: usize, pairs: &[(Vertex, Spin)]) -> Self {
        let mut c = Self::empty(n);
        for &(v, s) in pairs {
            c.set(v, s);
        }
        c
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn get(&self, v: Vertex) -> Option<Spin> {
        self.spins[v]
    }

    pub fn is_pinned(&self, v: Vertex) -> bool {
        self.spins[v].is_some()
    }

    pub fn set(&mut self, v: Vertex, s: Spin) {
        self.spins[v] = Some(s);
    }

    pub fn unset(&mut self, v: Vertex) {
        self.spins[v] = None;
    }

    pub fn pinned_count(&self) -> usize {
        self.spins.iter().filter(|s| s.is_some()).count()
    }

    pub fn pinned(&self) -> impl Iterator<Item = (Vertex, Spin)> + '_ {
        self.spins.iter().enumerate().filter_map(|(v, s)| s.map(|s| (v, s)))
    }

    pub fn is_full(&self) -> bool {
        self.spins.iter().all(Option::is_some)
    }

    pub fn as_slice(&self) -> &[Option<Spin>] {
        &self.spins
    }

    pub fn validate(&self, g: &Graph, q: usize) -> Result<()> {
        if self.spins.len() != g.n() {
            return Err(Error::arg(format!(
                "configuration covers {} vertices, graph has {}",
                self.spins.len(),
                g.n()
            )));
        }
        if let Some((v, s)) = self.pinned().find(|&(_, s)| s as usize >= q) {
            return Err(Error::arg(format!("spin {s} at vertex {v} out of range for q={q}")));
        }
        Ok(())
    }

    /// Local feasibility: every pinned vertex has positive field and every
    /// edge between pinned vertices positive interaction.
    pub fn is_feasible(&self, g: &Graph, model: &QSpinParams) -> bool {
        self.pinned().all(|(v, s)| {
            model.b[s as usize] > 0.0
                && g.neighbors(v)
                    .iter()
                    .all(|&u| self.spins[u].is_none_or(|t| model.interaction(s, t) > 0.0))
        })
    }
}

/// Natural log of a nonnegative weight; `-inf` encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize)]
pub struct LogWeight(pub f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn from_value(w: f64) -> Self {
        LogWeight(w.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// `log w(σ)` for a full configuration.
pub fn weight(g: &Graph, model: &SpinModel, sigma: &PartialConfiguration) -> Result<LogWeight> {
    let m = model.to_q_spin();
    sigma.validate(g, m.q)?;
    if !sigma.is_full() {
        return Err(Error::arg("weight needs a full configuration"));
    }
    let spin = |v: Vertex| sigma.get(v).unwrap();
    let mut total = 0.0;
    for (u, v) in g.edges() {
        total += m.interaction(spin(u), spin(v)).ln();
    }
    for v in 0..g.n() {
        total += m.b[spin(v) as usize].ln();
    }
    Ok(LogWeight(if total.is_nan() { f64::NEG_INFINITY } else { total }))
}
