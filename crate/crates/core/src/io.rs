//! File formats: waveform JSON, parameter TOML, state specifications and
//! plot-ready CSV tables. Every writer produces byte-identical output for
//! identical inputs.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::hamiltonian::ControlParameters;
use crate::propagator::{QuantumState, Waveform};
use crate::spin::BasisIndex;
use crate::{Error, Result, DIM};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const WAVEFORM_FORMAT: &str = "hfqc-waveform/1";

/// Header embedded in every output: enough to rerun the job exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub toolkit_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl RunInfo {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Result<Self> {
        Ok(Self {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
        })
    }

    /// `#`-prefixed header lines for CSV files.
    pub fn csv_header(&self) -> Result<String> {
        Ok(format!(
            "# toolkit_version={}\n# command={}\n# seed={}\n# config={}\n",
            self.toolkit_version,
            self.command,
            self.seed,
            serde_json::to_string(&self.config)?
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformMetadata {
    /// (re, im) per flat basis index.
    pub initial: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
    pub design_fidelity: f64,
    pub ensemble_hash: String,
    pub mode: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformFile {
    pub format: String,
    pub toolkit_version: String,
    pub duration_s: f64,
    pub uw_phases_rad: Vec<f64>,
    pub rfx_phases_rad: Vec<f64>,
    pub rfy_phases_rad: Vec<f64>,
    pub metadata: WaveformMetadata,
}

impl WaveformFile {
    /// Phases are stored canonicalized to [0, 2π).
    pub fn new(waveform: &Waveform, metadata: WaveformMetadata) -> Self {
        let w = waveform.canonicalized();
        Self {
            format: WAVEFORM_FORMAT.to_string(),
            toolkit_version: TOOLKIT_VERSION.to_string(),
            duration_s: w.duration_s(),
            uw_phases_rad: w.uw_phases().to_vec(),
            rfx_phases_rad: w.rfx_phases().to_vec(),
            rfy_phases_rad: w.rfy_phases().to_vec(),
            metadata,
        }
    }

    pub fn waveform(&self) -> Result<Waveform> {
        Waveform::new(
            self.duration_s,
            self.uw_phases_rad.clone(),
            self.rfx_phases_rad.clone(),
            self.rfy_phases_rad.clone(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = read_json(path)?;
        if file.format != WAVEFORM_FORMAT {
            return Err(Error::Parse(format!(
                "{}: unsupported waveform format {:?} (expected {WAVEFORM_FORMAT:?})",
                path.display(),
                file.format
            )));
        }
        file.waveform()?;
        Ok(file)
    }

    pub fn initial_state(&self) -> Result<QuantumState> {
        state_from_pairs(&self.metadata.initial)
    }

    pub fn target_state(&self) -> Result<QuantumState> {
        state_from_pairs(&self.metadata.target)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// Reads parameters from TOML. Missing keys take their defaults.
pub fn params_from_toml(text: &str) -> Result<ControlParameters> {
    let p: ControlParameters = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    p.validate()?;
    Ok(p)
}

pub fn params_to_toml(params: &ControlParameters) -> Result<String> {
    toml::to_string(params).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_params(path: &Path) -> Result<ControlParameters> {
    let text = std::fs::read_to_string(path)?;
    params_from_toml(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// One amplitude in a state specification: real, or [re, im].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

/// A pure state given either as a sublevel label ("4,4", "|3,-3>") or as 16
/// amplitudes in flat order. Amplitude lists are normalized on resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Label(String),
    Amplitudes(Vec<Amplitude>),
}

impl StateSpec {
    pub fn resolve(&self) -> Result<QuantumState> {
        match self {
            StateSpec::Label(s) => parse_state(s),
            StateSpec::Amplitudes(a) => {
                if a.len() != DIM {
                    return Err(Error::Parse(format!("expected {DIM} amplitudes, got {}", a.len())));
                }
                let v: Vec<Complex64> = a
                    .iter()
                    .map(|x| match *x {
                        Amplitude::Real(r) => Complex64::new(r, 0.0),
                        Amplitude::Complex([re, im]) => Complex64::new(re, im),
                    })
                    .collect();
                QuantumState::normalized(crate::Ket::from_column_slice(&v))
            }
        }
    }
}

/// Parses a sublevel label such as `4,4`, `|3,-3>` or `|4,0⟩`.
pub fn parse_state_label(label: &str) -> Result<BasisIndex> {
    let inner = label.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    let bad = || Error::Parse(format!("malformed state label {label:?} (expected \"F,m\")"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let f: i32 = parts[0].parse().map_err(|_| bad())?;
    let m: i32 = parts[1].parse().map_err(|_| bad())?;
    BasisIndex::new(f, m)
}

/// A sublevel label, or a comma/semicolon separated list of 16 amplitudes
/// written as `re` or `re+imj` / `re-imj`.
pub fn parse_state(text: &str) -> Result<QuantumState> {
    let entries: Vec<&str> = text.split([';', ' ']).filter(|s| !s.is_empty()).collect();
    if entries.len() <= 1 {
        let b = parse_state_label(text)?;
        return QuantumState::basis(b.f(), b.m());
    }
    let amps = entries.iter().map(|e| parse_complex(e)).collect::<Result<Vec<_>>>()?;
    StateSpec::Amplitudes(amps.into_iter().map(|z| Amplitude::Complex([z.re, z.im])).collect()).resolve()
}

fn parse_complex(s: &str) -> Result<Complex64> {
    s.trim().parse::<Complex64>().map_err(|_| Error::Parse(format!("malformed amplitude {s:?}")))
}

pub fn state_to_pairs(state: &QuantumState) -> Vec<[f64; 2]> {
    state.amplitudes().iter().map(|z| [z.re, z.im]).collect()
}

pub fn state_from_pairs(pairs: &[[f64; 2]]) -> Result<QuantumState> {
    if pairs.len() != DIM {
        return Err(Error::Parse(format!("expected {DIM} amplitudes, got {}", pairs.len())));
    }
    let v: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    QuantumState::from_slice(&v)
}

/// Shortest round-trip decimal form of `x`, with an exponent for very large
/// or small magnitudes.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(|n| n.to_string()).unwrap_or_default()
    } else {
        x.to_string()
    }
}

/// Builds a CSV table. Floats use the shortest round-trip representation.
#[derive(Debug, Clone)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(info: &RunInfo, columns: &[&str]) -> Result<Self> {
        let mut text = info.csv_header()?;
        text.push_str(&columns.join(","));
        text.push('\n');
        Ok(Self { text, columns: columns.len() })
    }

    pub fn row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: std::fmt::Display,
    {
        let mut n = 0;
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            let _ = write!(self.text, "{c}");
            n += 1;
        }
        debug_assert_eq!(n, self.columns, "row width");
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text)?;
        Ok(())
    }
}
