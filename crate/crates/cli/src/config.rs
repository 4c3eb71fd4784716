use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use geocensus::farey::{Endpoint, Interval, Ratio};
use geocensus::SurfaceKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub kind: SurfaceKind,
    pub formula: String,
}

/// A fraction such as `"1/3"`, a decimal string, or a JSON number.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum EndpointValue {
    Number(f64),
    Text(String),
}

impl EndpointValue {
    pub fn parse(&self) -> anyhow::Result<Endpoint> {
        match self {
            EndpointValue::Number(x) => Ok(Endpoint::Real(*x)),
            EndpointValue::Text(t) => parse_endpoint(t),
        }
    }
}

pub fn parse_endpoint(text: &str) -> anyhow::Result<Endpoint> {
    let text = text.trim();
    if let Some((n, d)) = text.split_once('/') {
        let n: i64 = n.trim().parse().with_context(|| format!("bad numerator in {text:?}"))?;
        let d: i64 = d.trim().parse().with_context(|| format!("bad denominator in {text:?}"))?;
        if d == 0 {
            bail!("zero denominator in {text:?}");
        }
        return Ok(Endpoint::Rational(Ratio::new(n, d)));
    }
    let x: f64 = text.parse().with_context(|| format!("bad number {text:?}"))?;
    Ok(Endpoint::Real(x))
}

/// Every setting of a run. Fields left out take their defaults; command
/// line flags override values read from a file.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub profile: Option<ProfileConfig>,
    /// validation tolerance
    pub tol: Option<f64>,
    /// critical-point grid
    pub critical_grid: Option<usize>,
    pub rtol: Option<f64>,
    /// launch point for `trace`
    pub a: Option<f64>,
    pub t_max: Option<f64>,
    /// `horizontal` or `meridian`
    pub launch: Option<String>,
    pub embed: Option<bool>,
    /// rotation-curve samples per interval of U
    pub grid: Option<usize>,
    pub quad_tol: Option<f64>,
    pub lmax: Option<f64>,
    pub qmax: Option<u64>,
    pub solver_tol: Option<f64>,
    pub tol_flat: Option<f64>,
    pub flat_fraction: Option<f64>,
    pub dedup_tol: Option<f64>,
    /// Farey order
    pub n: Option<u64>,
    pub interval: Option<[EndpointValue; 2]>,
    pub out: Option<PathBuf>,
    /// N-table CSV written next to the census JSON
    pub n_table_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn interval(&self) -> anyhow::Result<Option<Interval>> {
        let Some([lo, hi]) = &self.interval else {
            return Ok(None);
        };
        Ok(Some(Interval::closed(lo.parse()?, hi.parse()?)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfig>(r#"{"lmax": 10, "lmux": 3}"#).unwrap_err();
        assert!(err.to_string().contains("lmux"));
        let err = serde_json::from_str::<RunConfig>(r#"{"profile": {"kind": "sphere", "formula": "sin(s)", "x": 1}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn reads_profile_and_interval() {
        let c: RunConfig = serde_json::from_str(
            r#"{"profile": {"kind": "torus", "formula": "2 + cos(2*s)"}, "interval": ["1/3", 0.5], "n": 7}"#,
        )
        .unwrap();
        assert_eq!(c.profile.unwrap().kind, SurfaceKind::Torus);
        assert_eq!(c.interval.as_ref().unwrap()[0].parse().unwrap(), Endpoint::Rational(Ratio::new(1, 3)));
        assert_eq!(c.n, Some(7));
    }

    #[test]
    fn endpoint_text() {
        assert_eq!(parse_endpoint(" 2/4 ").unwrap(), Endpoint::Rational(Ratio::new(1, 2)));
        assert_eq!(parse_endpoint("0.25").unwrap(), Endpoint::Real(0.25));
        assert!(parse_endpoint("1/0").is_err());
        assert!(parse_endpoint("x").is_err());
    }
}
