//! Facet model storage.
//!
//! Model files are plain text, one `key = value` pair per line, `#` starting
//! a comment. A file looks like:
//!
//! ```text
//! family = multinomial_logistic
//! facet = memory
//! feature_kind = mean_slope_hbo_hbr
//! channels = 18
//! window_len = 100
//! sample_rate_hz = 10
//! classes = underload optimal overload
//! dim = 72
//! weights.underload = w_0 w_1 ... w_71 bias
//! weights.optimal = ...
//! weights.overload = ...
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! save/load cycle reproduces weights bit for bit.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use super::{ClassifierError, Facet, FeatureSpec, Result, WorkloadState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    MultinomialLogistic,
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("multinomial_logistic")
    }
}

impl FromStr for ModelFamily {
    type Err = ClassifierError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multinomial_logistic" => Ok(Self::MultinomialLogistic),
            other => Err(ClassifierError::ModelFormat(format!("unsupported family '{other}'"))),
        }
    }
}

/// Three rows of `F + 1` weights (bias last), in class index order.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetModel {
    pub family: ModelFamily,
    pub facet: Facet,
    pub feature_spec: FeatureSpec,
    weights: Vec<f64>,
}

impl FacetModel {
    pub fn new(facet: Facet, feature_spec: FeatureSpec, weights: Vec<f64>) -> Result<Self> {
        let dim = feature_spec.dim();
        if weights.len() != 3 * (dim + 1) {
            return Err(ClassifierError::DimensionMismatch { expected: 3 * (dim + 1), got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(ClassifierError::ModelFormat("non-finite weight".into()));
        }
        Ok(Self { family: ModelFamily::MultinomialLogistic, facet, feature_spec, weights })
    }

    pub fn dim(&self) -> usize {
        self.feature_spec.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row(&self, class: WorkloadState) -> &[f64] {
        let stride = self.dim() + 1;
        &self.weights[class.index() * stride..(class.index() + 1) * stride]
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(WorkloadState::ALL.map(|k| {
            let row = self.row(k);
            row[..x.len()].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[x.len()]
        }))
    }

    pub fn to_text(&self) -> String {
        let s = &self.feature_spec;
        let mut out = String::new();
        let _ = writeln!(out, "# workload facet model");
        let _ = writeln!(out, "family = {}", self.family);
        let _ = writeln!(out, "facet = {}", self.facet);
        let _ = writeln!(out, "feature_kind = {}", s.kind);
        let _ = writeln!(out, "channels = {}", s.channel_count);
        let _ = writeln!(out, "window_len = {}", s.window_len);
        let _ = writeln!(out, "sample_rate_hz = {}", s.sample_rate_hz);
        let _ = writeln!(out, "classes = underload optimal overload");
        let _ = writeln!(out, "dim = {}", self.dim());
        for k in WorkloadState::ALL {
            let row: Vec<String> = self.row(k).iter().map(|w| w.to_string()).collect();
            let _ = writeln!(out, "weights.{k} = {}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: String| ClassifierError::ModelFormat(m);
        let mut kv = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("line {}: expected key = value", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(bad(format!("duplicate key '{}'", k.trim())));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing key '{k}'")));
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| ClassifierError::ModelFormat(format!("bad value for '{k}': {v}")))
        }
        let family: ModelFamily = get("family")?.parse()?;
        let facet: Facet = get("facet")?.parse().map_err(bad)?;
        let spec = FeatureSpec {
            kind: get("feature_kind")?.to_string(),
            channel_count: num("channels", get("channels")?)?,
            window_len: num("window_len", get("window_len")?)?,
            sample_rate_hz: num("sample_rate_hz", get("sample_rate_hz")?)?,
        };
        if get("classes")?.split_whitespace().collect::<Vec<_>>() != ["underload", "optimal", "overload"] {
            return Err(bad("classes must be 'underload optimal overload'".into()));
        }
        let dim: usize = num("dim", get("dim")?)?;
        if dim != spec.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: spec.dim(), got: dim });
        }
        let mut weights = Vec::with_capacity(3 * (dim + 1));
        for k in WorkloadState::ALL {
            let key = format!("weights.{k}");
            let row: Vec<f64> =
                get(&key)?.split_whitespace().map(|v| num(&key, v)).collect::<Result<_>>()?;
            if row.len() != dim + 1 {
                return Err(ClassifierError::DimensionMismatch { expected: dim + 1, got: row.len() });
            }
            weights.extend(row);
        }
        let mut m = Self::new(facet, spec, weights)?;
        m.family = family;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ClassifierError::ModelFormat(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| ClassifierError::ModelFormat(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacetModels {
    pub memory: FacetModel,
    pub attention: FacetModel,
    pub perception: FacetModel,
}

impl FacetModels {
    pub fn get(&self, facet: Facet) -> &FacetModel {
        match facet {
            Facet::Memory => &self.memory,
            Facet::Attention => &self.attention,
            Facet::Perception => &self.perception,
        }
    }

    pub fn check_consistent(&self) -> Result<()> {
        for f in Facet::ALL {
            let m = self.get(f);
            if m.facet != f {
                return Err(ClassifierError::ModelFormat(format!("model for {f} is tagged {}", m.facet)));
            }
            if m.feature_spec != self.memory.feature_spec {
                return Err(ClassifierError::ModelFormat(format!("{f} model uses a different feature spec")));
            }
        }
        Ok(())
    }

    /// Reads `memory.model`, `attention.model` and `perception.model`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let load = |f: Facet| FacetModel::load(&dir.join(format!("{f}.model")));
        let models = Self { memory: load(Facet::Memory)?, attention: load(Facet::Attention)?, perception: load(Facet::Perception)? };
        models.check_consistent()?;
        Ok(models)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| ClassifierError::ModelFormat(e.to_string()))?;
        for f in Facet::ALL {
            self.get(f).save(&dir.join(format!("{f}.model")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FacetModel {
        let spec = FeatureSpec::new(2, 100, 10.0);
        let w: Vec<f64> = (0..27).map(|i| (i as f64 * 0.37).sin() / 3.0 + 1e-17 * i as f64).collect();
        FacetModel::new(Facet::Attention, spec, w).unwrap()
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let m = model();
        let back = FacetModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(m.weights().iter().zip(back.weights()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn rejects_wrong_row_length() {
        let text = model().to_text().replace("weights.optimal = ", "weights.optimal = 1.0 ");
        assert!(matches!(FacetModel::from_text(&text), Err(ClassifierError::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_unknown_family_and_missing_keys() {
        let text = model().to_text().replace("multinomial_logistic", "symbolic");
        assert!(matches!(FacetModel::from_text(&text), Err(ClassifierError::ModelFormat(_))));
        let text: String = model().to_text().lines().filter(|l| !l.starts_with("dim")).map(|l| format!("{l}\n")).collect();
        assert!(matches!(FacetModel::from_text(&text), Err(ClassifierError::ModelFormat(_))));
    }

    #[test]
    fn non_finite_weight_rejected() {
        let spec = FeatureSpec::new(1, 100, 10.0);
        let mut w = vec![0.0; 15];
        w[3] = f64::NAN;
        assert!(FacetModel::new(Facet::Memory, spec, w).is_err());
    }

    #[test]
    fn scores_follow_row_layout() {
        let spec = FeatureSpec::new(1, 100, 10.0);
        let mut w = vec![0.0; 15];
        w[0] = 1.0; // underload, feature 0
        w[9] = 2.0; // optimal bias
        w[10 + 3] = -1.0; // overload, feature 3
        let m = FacetModel::new(Facet::Memory, spec, w).unwrap();
        assert_eq!(m.scores(&[3.0, 0.0, 0.0, 4.0]).unwrap(), [3.0, 2.0, -4.0]);
    }
}
