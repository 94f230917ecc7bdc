//! Settings shared by the command-line flags and the `--config` JSON file.
//! A flag that is given always wins over the file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use vesseltk::labeling::{CaseKind, LabelingConfig};
use vesseltk::phantom::Defect;
use vesseltk::{BranchLabel, Connectivity};

use crate::Failure;

/// Every key is optional; unknown keys are rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mask: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub table: Option<PathBuf>,
    pub iters: Option<usize>,
    pub proposer: Option<String>,
    pub connectivity: Option<u8>,
    pub iliac_ratio: Option<f64>,
    pub end_fraction: Option<f64>,
    pub foot_fraction: Option<f64>,
    pub kmeans_max_iterations: Option<usize>,
    /// Branch name, or `"none"` to disable post-processing.
    pub postprocess: Option<String>,
    pub pseudo: Option<bool>,
    pub suite: Option<bool>,
    pub kind: Option<String>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub jitter: Option<f64>,
    pub defects: Option<Vec<String>>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage("config", format!("{}: {e}", path.display())))
    }
}

/// Flag value if given, else file value.
pub fn pick<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

pub fn require<T>(value: Option<T>, name: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::usage("config", format!("missing required --{name}")))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProposerChoice {
    Hysteresis { low: f32, high: f32, band: usize },
    Oracle(PathBuf),
}

impl FromStr for ProposerChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("hysteresis", args)) => {
                let parts: Vec<&str> = args.split(',').map(str::trim).collect();
                let bad = || format!("expected hysteresis:<low>,<high>,<band>, got {s:?}");
                let [low, high, band] = parts[..] else {
                    return Err(bad());
                };
                Ok(ProposerChoice::Hysteresis {
                    low: low.parse().map_err(|_| bad())?,
                    high: high.parse().map_err(|_| bad())?,
                    band: band.parse().map_err(|_| bad())?,
                })
            }
            Some(("oracle", path)) if !path.is_empty() => {
                Ok(ProposerChoice::Oracle(PathBuf::from(path)))
            }
            _ => Err(format!(
                "unknown proposer {s:?}; expected hysteresis:<low>,<high>,<band> or oracle:<path>"
            )),
        }
    }
}

pub const DEFAULT_PROPOSER: &str = "hysteresis:0.3,0.6,2";

pub fn parse_connectivity(v: Option<u8>) -> Result<Connectivity, Failure> {
    v.map_or(Ok(Connectivity::TwentySix), |v| {
        Connectivity::try_from(v).map_err(|e| Failure::usage("config", e))
    })
}

pub fn parse_kind(s: &str) -> Result<CaseKind, Failure> {
    match s.trim().to_ascii_lowercase().as_str() {
        "whole" | "whole_abdomen" => Ok(CaseKind::WholeAbdomen),
        "upper" | "upper_abdomen" => Ok(CaseKind::UpperAbdomen),
        other => Err(Failure::usage(
            "config",
            format!("unknown case kind {other:?}; expected whole or upper"),
        )),
    }
}

pub fn parse_defects(list: &[String]) -> Result<Vec<Defect>, Failure> {
    list.iter()
        .map(|d| d.parse().map_err(|e| Failure::usage("config", e)))
        .collect()
}

/// Overrides on top of [`LabelingConfig::default`].
#[derive(Clone, Debug, Default)]
pub struct LabelingOverrides {
    pub iliac_ratio: Option<f64>,
    pub end_fraction: Option<f64>,
    pub foot_fraction: Option<f64>,
    pub kmeans_max_iterations: Option<usize>,
    pub postprocess: Option<String>,
    pub no_postprocess: bool,
}

fn fraction(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(Failure::usage(
            "config",
            format!("{name} must be in (0, 1], got {v}"),
        ))
    }
}

pub fn labeling_config(
    flags: LabelingOverrides,
    file: &FileConfig,
) -> Result<LabelingConfig, Failure> {
    let mut cfg = LabelingConfig::default();
    if let Some(v) = pick(flags.iliac_ratio, file.iliac_ratio) {
        cfg.iliac_ratio = fraction("iliac-ratio", v)?;
    }
    if let Some(v) = pick(flags.end_fraction, file.end_fraction) {
        cfg.end_fraction = fraction("end-fraction", v)?;
    }
    if let Some(v) = pick(flags.foot_fraction, file.foot_fraction) {
        cfg.foot_fraction = fraction("foot-fraction", v)?;
    }
    if let Some(v) = pick(flags.kmeans_max_iterations, file.kmeans_max_iterations) {
        if v == 0 {
            return Err(Failure::usage(
                "config",
                "kmeans-max-iterations must be at least 1",
            ));
        }
        cfg.kmeans_max_iterations = v;
    }
    let target = if flags.no_postprocess {
        Some("none".to_string())
    } else {
        pick(flags.postprocess, file.postprocess.clone())
    };
    if let Some(t) = target {
        cfg.postprocess = if t.eq_ignore_ascii_case("none") {
            None
        } else {
            let b: BranchLabel = t.parse().map_err(|e: String| Failure::usage("config", e))?;
            if b == BranchLabel::Unlabeled {
                return Err(Failure::usage(
                    "config",
                    "post-processing target must be a branch",
                ));
            }
            Some(b)
        };
    }
    Ok(cfg)
}

/// Rejects a run whose paths collide, since later writes would clobber inputs.
pub fn distinct_paths(paths: &[(&str, &Path)]) -> Result<(), Failure> {
    for (i, (a, pa)) in paths.iter().enumerate() {
        for (b, pb) in &paths[i + 1..] {
            if pa == pb {
                return Err(Failure::usage(
                    "config",
                    format!("--{a} and --{b} are the same path {}", pa.display()),
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proposer_strings() {
        assert_eq!(
            "hysteresis:0.3,0.6,2".parse::<ProposerChoice>().unwrap(),
            ProposerChoice::Hysteresis {
                low: 0.3,
                high: 0.6,
                band: 2
            }
        );
        assert_eq!(
            "oracle:gt.nrrd".parse::<ProposerChoice>().unwrap(),
            ProposerChoice::Oracle("gt.nrrd".into())
        );
        for bad in ["hysteresis:0.3,0.6", "oracle:", "bpn", "hysteresis:a,b,c"] {
            assert!(bad.parse::<ProposerChoice>().is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file() {
        let file: FileConfig =
            serde_json::from_str(r#"{"iliac_ratio": 0.5, "postprocess": "SMA"}"#).unwrap();
        let cfg = labeling_config(LabelingOverrides::default(), &file).unwrap();
        assert_eq!(
            (cfg.iliac_ratio, cfg.postprocess),
            (0.5, Some(BranchLabel::Sma))
        );
        let flags = LabelingOverrides {
            iliac_ratio: Some(0.7),
            no_postprocess: true,
            ..Default::default()
        };
        let cfg = labeling_config(flags, &file).unwrap();
        assert_eq!((cfg.iliac_ratio, cfg.postprocess), (0.7, None));
    }

    #[test]
    fn rejects_out_of_range_and_unknown_keys() {
        let flags = LabelingOverrides {
            iliac_ratio: Some(1.5),
            ..Default::default()
        };
        assert!(labeling_config(flags, &FileConfig::default()).is_err());
        assert!(serde_json::from_str::<FileConfig>(r#"{"iterations": 3}"#).is_err());
        assert!(parse_connectivity(Some(8)).is_err());
        assert!(distinct_paths(&[("mask", Path::new("a")), ("out", Path::new("a"))]).is_err());
    }
}
