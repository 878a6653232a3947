//! Run settings: command-line flags override a TOML file, which overrides
//! the built-in defaults.

use std::path::{Path, PathBuf};

use mgritopt_core::problems::{ProblemKind, DEFAULT_PENALTY};
use mgritopt_core::{CorrectionScheme, Method};
use serde::{Deserialize, Serialize};

pub const THREADS_ENV: &str = "MGRITOPT_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

/// Every setting as it may appear in a TOML file or on the command line.
/// List-valued settings use the command-line syntax (`"4,16"`, `"2..7"`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PartialSettings {
    pub problem: Option<String>,
    pub n: Option<String>,
    pub m: Option<String>,
    pub levels: Option<String>,
    pub nt: Option<usize>,
    pub tol: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub max_iter: Option<usize>,
    pub scheme: Option<String>,
    pub method: Option<String>,
    pub adaptive: Option<bool>,
    pub growth: Option<f64>,
    pub figures: Option<bool>,
    pub snapshots: Option<bool>,
    pub stride: Option<usize>,
    pub repetitions: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),+) => {
        PartialSettings { $($field: $top.$field.or($base.$field)),+ }
    };
}

impl PartialSettings {
    /// Fields of `top` win over fields of `self`.
    pub fn overlay(self, top: PartialSettings) -> PartialSettings {
        let base = self;
        overlay!(
            base,
            top,
            problem,
            n,
            m,
            levels,
            nt,
            tol,
            lambda,
            seed,
            alpha,
            threads,
            out,
            max_iter,
            scheme,
            method,
            adaptive,
            growth,
            figures,
            snapshots,
            stride,
            repetitions
        )
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub problem: ProblemKind,
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub levels: Vec<usize>,
    /// Fine step count; `None` means "run the sequential solver to find it".
    pub nt: Option<usize>,
    pub tol: f64,
    pub lambda: f64,
    pub seed: u64,
    pub alpha: Option<f64>,
    pub threads: usize,
    pub out: PathBuf,
    pub max_iter: usize,
    pub scheme: CorrectionScheme,
    pub method: Option<Method>,
    pub adaptive: bool,
    pub growth: f64,
    pub figures: bool,
    pub snapshots: bool,
    pub stride: usize,
    pub repetitions: usize,
}

fn default_n(kind: ProblemKind) -> usize {
    match kind {
        ProblemKind::Mp1 => 40,
        ProblemKind::Mp2OneD => 256,
        ProblemKind::Mp2TwoD => 32,
    }
}

/// Parses `"4"`, `"4,16,64"` or the inclusive range `"2..7"`.
pub fn parse_list(key: &'static str, text: &str) -> Result<Vec<usize>, ConfigError> {
    let text = text.trim();
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| invalid(key, format!("`{s}` is not a non-negative integer")))
    };
    let values = if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi) = (parse(lo)?, parse(hi.trim_start_matches('='))?);
        if lo > hi {
            return Err(invalid(key, format!("empty range `{text}`")));
        }
        (lo..=hi).collect()
    } else {
        text.split(',').map(parse).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(invalid(key, "no values"));
    }
    Ok(values)
}

impl Settings {
    /// Resolves `flags` over `file` over the defaults. `env_threads` is the
    /// value of [`THREADS_ENV`], used when no thread count is given by flag.
    pub fn resolve(
        flags: PartialSettings,
        file: PartialSettings,
        env_threads: Option<&str>,
    ) -> Result<Self, ConfigError> {
        let env =
            match env_threads {
                Some(t) => Some(t.trim().parse::<usize>().map_err(|_| {
                    invalid("threads", format!("{THREADS_ENV}=`{t}` is not a count"))
                })?),
                None => None,
            };
        let threads_flag = flags.threads;
        let merged = file.overlay(flags);
        let problem = match merged.problem.as_deref() {
            None => ProblemKind::Mp1,
            Some(name) => ProblemKind::from_name(name)
                .ok_or_else(|| invalid("problem", format!("unknown problem `{name}`")))?,
        };
        let n = match merged.n.as_deref() {
            None => vec![default_n(problem)],
            Some(t) => parse_list("n", t)?,
        };
        let m = match merged.m.as_deref() {
            None => vec![4],
            Some(t) => parse_list("m", t)?,
        };
        let levels = match merged.levels.as_deref() {
            None => vec![2],
            Some(t) => parse_list("levels", t)?,
        };
        if n.iter().any(|&v| v < 2) {
            return Err(invalid("n", "need at least 2 interior points"));
        }
        if m.iter().any(|&v| v < 2) {
            return Err(invalid("m", "coarsening factor must be at least 2"));
        }
        if levels.iter().any(|&v| v < 2) {
            return Err(invalid("levels", "need at least 2 levels"));
        }
        let tol = merged.tol.unwrap_or(1e-8);
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("tol", "must lie in (0, 1)"));
        }
        let lambda = merged.lambda.unwrap_or(DEFAULT_PENALTY);
        if !(lambda > 0.0) {
            return Err(invalid("lambda", "must be positive"));
        }
        if let Some(a) = merged.alpha {
            if !(a > 0.0) {
                return Err(invalid("alpha", "must be positive"));
            }
        }
        let threads = threads_flag.or(env).or(merged.threads).unwrap_or(1);
        if threads == 0 {
            return Err(invalid("threads", "must be at least 1"));
        }
        let scheme = match merged.scheme.as_deref() {
            None | Some("fas") => CorrectionScheme::Fas,
            Some("linear") => CorrectionScheme::Linear,
            Some(other) => return Err(invalid("scheme", format!("unknown scheme `{other}`"))),
        };
        let method = match merged.method.as_deref() {
            None => None,
            Some(name) => Some(
                Method::from_name(name)
                    .ok_or_else(|| invalid("method", format!("unknown method `{name}`")))?,
            ),
        };
        let growth = merged.growth.unwrap_or(2.0);
        if !(growth > 1.0) {
            return Err(invalid("growth", "must exceed 1"));
        }
        let repetitions = merged.repetitions.unwrap_or(1000);
        if repetitions < 100 {
            return Err(invalid("repetitions", "must be at least 100"));
        }
        Ok(Settings {
            problem,
            n,
            m,
            levels,
            nt: merged.nt,
            tol,
            lambda,
            seed: merged.seed.unwrap_or(0),
            alpha: merged.alpha,
            threads,
            out: merged.out.unwrap_or_else(|| PathBuf::from(".")),
            max_iter: merged.max_iter.unwrap_or(100),
            scheme,
            method,
            adaptive: merged.adaptive.unwrap_or(false),
            growth,
            figures: merged.figures.unwrap_or(false),
            snapshots: merged.snapshots.unwrap_or(false),
            stride: merged.stride.unwrap_or(1).max(1),
            repetitions,
        })
    }

    /// The single value of a list setting, for commands that take one.
    pub fn single(&self, key: &'static str) -> Result<usize, ConfigError> {
        let list = match key {
            "n" => &self.n,
            "m" => &self.m,
            "levels" => &self.levels,
            _ => return Err(invalid(key, "not a list setting")),
        };
        match list.as_slice() {
            [v] => Ok(*v),
            _ => Err(invalid(key, "this command takes a single value")),
        }
    }

    /// The settings as a TOML file that reproduces this run via `--config`.
    pub fn to_manifest(&self) -> PartialSettings {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        PartialSettings {
            problem: Some(self.problem.name().to_string()),
            n: Some(join(&self.n)),
            m: Some(join(&self.m)),
            levels: Some(join(&self.levels)),
            nt: self.nt,
            tol: Some(self.tol),
            lambda: Some(self.lambda),
            seed: Some(self.seed),
            alpha: self.alpha,
            threads: Some(self.threads),
            out: Some(self.out.clone()),
            max_iter: Some(self.max_iter),
            scheme: Some(
                match self.scheme {
                    CorrectionScheme::Fas => "fas",
                    CorrectionScheme::Linear => "linear",
                }
                .to_string(),
            ),
            method: self.method.map(|m| m.name().to_string()),
            adaptive: Some(self.adaptive),
            growth: Some(self.growth),
            figures: Some(self.figures),
            snapshots: Some(self.snapshots),
            stride: Some(self.stride),
            repetitions: Some(self.repetitions),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_syntax() {
        assert_eq!(parse_list("levels", "2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_list("levels", "2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_list("m", "4, 16,64").unwrap(), vec![4, 16, 64]);
        assert_eq!(parse_list("n", "40").unwrap(), vec![40]);
        assert!(parse_list("levels", "5..2").is_err());
        assert!(parse_list("m", "four").is_err());
    }

    #[test]
    fn precedence() {
        let file = PartialSettings {
            n: Some("64".into()),
            seed: Some(3),
            threads: Some(8),
            ..Default::default()
        };
        let flags = PartialSettings {
            n: Some("32".into()),
            ..Default::default()
        };
        let s = Settings::resolve(flags.clone(), file.clone(), None).unwrap();
        assert_eq!(s.n, vec![32]);
        assert_eq!(s.seed, 3);
        assert_eq!(s.threads, 8);
        assert_eq!(s.tol, 1e-8);
        let s = Settings::resolve(flags.clone(), file.clone(), Some("2")).unwrap();
        assert_eq!(s.threads, 2);
        let with_flag = PartialSettings {
            threads: Some(5),
            ..flags
        };
        assert_eq!(
            Settings::resolve(with_flag, file, Some("2"))
                .unwrap()
                .threads,
            5
        );
    }

    #[test]
    fn rejects_bad_values() {
        let bad =
            |p: PartialSettings| Settings::resolve(p, PartialSettings::default(), None).is_err();
        assert!(bad(PartialSettings {
            problem: Some("mp3".into()),
            ..Default::default()
        }));
        assert!(bad(PartialSettings {
            m: Some("1".into()),
            ..Default::default()
        }));
        assert!(bad(PartialSettings {
            tol: Some(2.0),
            ..Default::default()
        }));
        assert!(bad(PartialSettings {
            scheme: Some("x".into()),
            ..Default::default()
        }));
        assert!(Settings::resolve(
            PartialSettings::default(),
            PartialSettings::default(),
            Some("x")
        )
        .is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let flags = PartialSettings {
            problem: Some("mp2-1d".into()),
            levels: Some("2..4".into()),
            seed: Some(9),
            ..Default::default()
        };
        let s = Settings::resolve(flags, PartialSettings::default(), None).unwrap();
        let text = toml::to_string(&s.to_manifest()).unwrap();
        let back: PartialSettings = toml::from_str(&text).unwrap();
        let again = Settings::resolve(PartialSettings::default(), back, None).unwrap();
        assert_eq!(again, s);
    }
}
