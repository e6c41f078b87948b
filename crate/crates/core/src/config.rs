//! JSON experiment configs: surface, thermostat, and run parameters.
//!
//! Schemas reject unknown keys so a typo fails loudly instead of silently
//! running the default experiment.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ThermoError};
use crate::expr::Expr;
use crate::geometry::{Surface, ThermostatParams};

/// `{"kind":"analytic","name":…,"params":[…]}` or `{"kind":"grid","n":…,"values":[…]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldSpec {
    Analytic {
        name: String,
        #[serde(default)]
        params: Vec<f64>,
    },
    Grid {
        n: usize,
        values: Vec<f64>,
    },
}

impl Default for FieldSpec {
    fn default() -> Self {
        FieldSpec::Analytic {
            name: "zero".into(),
            params: Vec::new(),
        }
    }
}

impl FieldSpec {
    /// The named analytic families. Parameters default to 1 (amplitudes)
    /// and 0 (phases) when omitted.
    pub fn to_expr(&self) -> Result<Expr> {
        let (name, params) = match self {
            FieldSpec::Analytic { name, params } => (name.as_str(), params.as_slice()),
            FieldSpec::Grid { .. } => {
                return Err(ThermoError::Config(
                    "grid-sampled field used where an analytic one is required".into(),
                ))
            }
        };
        let amp = params.first().copied().unwrap_or(1.0);
        let x = Expr::x();
        let y = Expr::y();
        let e = match name {
            "zero" => Expr::zero(),
            "constant" => Expr::constant(amp),
            "cos_x" => Expr::scale(&Expr::cos(&x), amp),
            "sin_x" => Expr::scale(&Expr::sin(&x), amp),
            "cos_y" => Expr::scale(&Expr::cos(&y), amp),
            "sin_y" => Expr::scale(&Expr::sin(&y), amp),
            "cosx_siny" => Expr::scale(&Expr::mul(&Expr::cos(&x), &Expr::sin(&y)), amp),
            "sinx_cosy" => Expr::scale(&Expr::mul(&Expr::sin(&x), &Expr::cos(&y)), amp),
            // The bounded-|e| half-plane family: stream S ln y gives
            // |e|_g = S pointwise.
            "ln_y" => Expr::scale(&Expr::ln(&y), amp),
            other => {
                return Err(ThermoError::Config(format!(
                    "unknown analytic field '{other}'"
                )))
            }
        };
        Ok(e)
    }
}

fn default_l() -> f64 {
    std::f64::consts::TAU
}

fn default_n() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    /// "torus" or "halfplane".
    pub chart: String,
    #[serde(rename = "Lx", default = "default_l")]
    pub lx: f64,
    #[serde(rename = "Ly", default = "default_l")]
    pub ly: f64,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub phi: FieldSpec,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            chart: "torus".into(),
            lx: default_l(),
            ly: default_l(),
            n: default_n(),
            phi: FieldSpec::default(),
        }
    }
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<Rc<Surface>> {
        match self.chart.as_str() {
            "torus" => match &self.phi {
                FieldSpec::Grid { n, values } => Ok(Rc::new(Surface::torus_from_grid(
                    self.lx, self.ly, *n, values,
                )?)),
                spec => Ok(Rc::new(Surface::torus(
                    self.lx,
                    self.ly,
                    self.n,
                    spec.to_expr()?,
                ))),
            },
            "halfplane" => {
                // The conformal factor is fixed to the K = −1 chart; a
                // configurable phi would need its own chart-exit analysis.
                match &self.phi {
                    FieldSpec::Analytic { name, .. } if name == "zero" || name == "hyperbolic" => {
                        Ok(Rc::new(Surface::hyperbolic_halfplane()))
                    }
                    _ => Err(ThermoError::Config(
                        "halfplane chart supports only the hyperbolic conformal factor".into(),
                    )),
                }
            }
            other => Err(ThermoError::Config(format!("unknown chart '{other}'"))),
        }
    }

    pub fn is_torus(&self) -> bool {
        self.chart == "torus"
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ThermostatSpec {
    #[serde(default)]
    pub f: FieldSpec,
    #[serde(default)]
    pub stream: FieldSpec,
}

impl ThermostatSpec {
    pub fn build(&self, surface: &Surface) -> Result<ThermostatParams> {
        Ok(ThermostatParams::from_exprs(
            self.f.to_expr()?,
            self.stream.to_expr()?,
            Some(surface),
        ))
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub surface: SurfaceSpec,
    #[serde(default)]
    pub thermostat: ThermostatSpec,
    /// For `verify`: pestov | pestov-int | uhlmann | remark56 | commutators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            surface: SurfaceSpec::default(),
            thermostat: ThermostatSpec::default(),
            identity: None,
            seed: default_seed(),
            tol: default_tol(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_json(
            r#"{
                "surface": {"chart": "torus", "N": 32,
                            "phi": {"kind": "analytic", "name": "cosx_siny", "params": [0.1]}},
                "thermostat": {"f": {"kind": "analytic", "name": "cos_x", "params": [0.3]},
                               "stream": {"kind": "analytic", "name": "sin_y", "params": [0.2]}},
                "identity": "pestov",
                "seed": 7
            }"#,
        )
        .unwrap();
        let s = cfg.surface.build().unwrap();
        assert!(s.chart.is_torus());
        let params = cfg.thermostat.build(&s).unwrap();
        assert!(!params.is_pure());
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"surfaec": {}}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"surface": {"chart": "torus", "twist": 3}}"#
        )
        .is_err());
    }

    #[test]
    fn halfplane_builds_hyperbolic_chart() {
        let cfg =
            ExperimentConfig::from_json(r#"{"surface": {"chart": "halfplane"}}"#).unwrap();
        let s = cfg.surface.build().unwrap();
        assert!((s.gaussian_curvature(0.3, 2.0) + 1.0).abs() < 1e-9);
    }
}
