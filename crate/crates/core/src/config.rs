//! JSON run configuration. Unknown keys are rejected everywhere.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assembly::InterconnectionRecords;
use crate::budget::SynthesisOptions;
use crate::error::{Error, Result};
use crate::model::ModelDocument;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    Rectangle {
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        order: u8,
    },
    /// Right angle at the local origin, legs along +x and +y.
    RightTriangle { base: f64, height: f64, n: usize, order: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
    pub thickness: f64,
}

/// Where a component's matrices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentSource {
    /// Plane-stress mesh. The mesh is mirrored about x = 0 first (when
    /// asked), then shifted by `origin`; nodes inside any `fixed` box
    /// `[xmin, ymin, xmax, ymax]` are clamped.
    Fe {
        mesh: MeshSpec,
        material: MaterialSpec,
        #[serde(default)]
        mirror_x: bool,
        #[serde(default)]
        origin: [f64; 2],
        #[serde(default)]
        fixed: Vec<[f64; 4]>,
    },
    /// Dense matrices; channels must use `dof` selectors.
    Matrices { document: ModelDocument },
    /// JSON file holding an `fe` or `matrices` source, relative to the config.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub id: String,
    pub source: ComponentSource,
    /// Modal damping ratio applied after the channels are attached.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Lowest frequency for log spacing; linear grids start at `f_max / n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_min_hz: Option<f64>,
    pub f_max_hz: f64,
    pub n_points: usize,
    pub spacing: Spacing,
}

/// A reduction strategy: uniform cut-off `i · f_max`, or per-component
/// cut-offs from the budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Standard(u32),
    Proposed,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Standard(i) => write!(f, "standard-{i}"),
            Method::Proposed => f.write_str("proposed"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "proposed" {
            return Ok(Method::Proposed);
        }
        match s.strip_prefix("standard-").map(str::parse::<u32>) {
            Some(Ok(i)) if i > 0 => Ok(Method::Standard(i)),
            _ => Err(Error::Config(format!(
                "unknown method '{s}' (expected 'proposed' or 'standard-<i>' with i ≥ 1)"
            ))),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub cap: f64,
    pub sdp_tol: f64,
    pub max_rounds: usize,
    pub round_tol: f64,
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let o = SynthesisOptions::default();
        Self {
            cap: o.cap,
            sdp_tol: o.sdp_tol,
            max_rounds: o.max_rounds,
            round_tol: o.round_tol,
            margin: o.margin,
        }
    }
}

impl From<Tolerances> for SynthesisOptions {
    fn from(t: Tolerances) -> Self {
        Self {
            cap: t.cap,
            sdp_tol: t.sdp_tol,
            max_rounds: t.max_rounds,
            round_tol: t.round_tol,
            margin: t.margin,
        }
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::Standard(1), Method::Standard(2), Method::Standard(3), Method::Proposed]
}

fn default_reference_multiplier() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub components: Vec<ComponentConfig>,
    pub interconnection: InterconnectionRecords,
    pub grid: GridSpec,
    /// Allowed relative assembly error.
    pub gamma: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Cut-off of the reference models as a multiple of `f_max`.
    #[serde(default = "default_reference_multiplier")]
    pub reference_multiplier: f64,
    /// Used when the CLI gets no `--out`; relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks that do not need the component matrices.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.components.is_empty() {
            return bad("no components".into());
        }
        let mut ids: Vec<&str> = self.components.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("component ids must be unique".into());
        }
        for c in &self.components {
            if let Some(z) = c.damping_ratio {
                if !(z.is_finite() && (0.0..1.0).contains(&z)) {
                    return bad(format!("damping ratio of '{}' must lie in [0, 1)", c.id));
                }
            }
        }
        let g = &self.grid;
        if !(g.f_max_hz.is_finite() && g.f_max_hz > 0.0) || g.n_points == 0 {
            return bad("grid needs f_max_hz > 0 and n_points ≥ 1".into());
        }
        if g.spacing == Spacing::Log {
            match g.f_min_hz {
                Some(f) if f > 0.0 && f < g.f_max_hz => {}
                _ => return bad("log grid needs 0 < f_min_hz < f_max_hz".into()),
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad("gamma must be positive".into());
        }
        if self.methods.is_empty() {
            return bad("methods list is empty".into());
        }
        if !(self.reference_multiplier.is_finite() && self.reference_multiplier >= 1.0) {
            return bad("reference_multiplier must be at least 1".into());
        }
        if let Some(m) = self
            .methods
            .iter()
            .find(|m| matches!(m, Method::Standard(i) if f64::from(*i) > self.reference_multiplier))
        {
            return bad(format!("{m} exceeds the reference cut-off"));
        }
        let t = &self.tolerances;
        if !(t.cap > 1.0 && t.sdp_tol > 0.0 && t.round_tol > 0.0 && t.margin >= 0.0 && t.max_rounds > 0) {
            return bad("tolerances out of range".into());
        }
        Ok(())
    }
}

/// Follows `file` sources (one level) relative to `base`.
pub fn resolve_source(source: &ComponentSource, base: &Path) -> Result<ComponentSource> {
    match source {
        ComponentSource::File { path } => {
            let full = base.join(path);
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", full.display())))?;
            let inner: ComponentSource = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", full.display())))?;
            if matches!(inner, ComponentSource::File { .. }) {
                return Err(Error::Config(format!("{} points to another file", full.display())));
            }
            Ok(inner)
        }
        other => Ok(other.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{
            "components": [{"id": "a", "source": {"kind": "fe",
                "mesh": {"shape": "rectangle", "width": 1.0, "height": 0.1, "nx": 4, "ny": 1, "order": 1},
                "material": {"youngs_modulus": 2e11, "poisson_ratio": 0.3, "density": 7800, "thickness": 0.01},
                "fixed": [[-0.01, -0.01, 0.01, 0.2]]}}],
            "interconnection": {"springs": [], "inputs": [{"component": 0, "selector": {"kind": "uy", "at": [1.0, 0.1]}}],
                "outputs": [{"component": 0, "selector": {"kind": "uy", "at": [1.0, 0.1]}}]},
            "grid": {"f_max_hz": 100.0, "n_points": 5, "spacing": "linear"},
            "gamma": 0.05
        }"#
    }

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_json(minimal()).unwrap();
        assert_eq!(cfg.methods.len(), 4);
        assert_eq!(cfg.reference_multiplier, 10.0);
        assert_eq!(cfg.tolerances, Tolerances::default());
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = minimal().replacen("\"gamma\"", "\"gama\": 1, \"gamma\"", 1);
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
        let text = minimal().replacen("\"order\": 1", "\"order\": 1, \"extra\": 0", 1);
        assert!(RunConfig::from_json(&text).is_err());
    }

    #[test]
    fn method_names() {
        assert_eq!("standard-3".parse::<Method>().unwrap(), Method::Standard(3));
        assert_eq!("proposed".parse::<Method>().unwrap(), Method::Proposed);
        assert!("standard-0".parse::<Method>().is_err());
        assert!("uniform".parse::<Method>().is_err());
        assert_eq!(Method::Standard(2).to_string(), "standard-2");
    }

    #[test]
    fn invalid_values() {
        for (from, to) in [
            ("\"gamma\": 0.05", "\"gamma\": -1"),
            ("\"n_points\": 5", "\"n_points\": 0"),
            ("\"spacing\": \"linear\"", "\"spacing\": \"log\""),
        ] {
            let text = minimal().replacen(from, to, 1);
            assert!(RunConfig::from_json(&text).is_err(), "{to}");
        }
        let text = minimal().replacen("\"gamma\": 0.05", "\"gamma\": 0.05, \"methods\": [\"standard-11\"]", 1);
        assert!(RunConfig::from_json(&text).is_err());
    }
}
