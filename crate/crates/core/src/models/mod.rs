//! Concrete model families and their preset names.
//!
//! | name | model |
//! |------|-------|
//! | `spectral:landau-ginzburg` | `λ_n = n²`, `b_n = 1` |
//! | `spectral:power-law(α)` | `λ_n = n²`, `b_n = λ_n^α` |
//! | `spectral:double-exponential` | `λ_n = n`, `b_n = exp(-exp(λ_n))` |
//! | `spectral:finite-support(k)` | `λ_n = n²`, `b_n = 1` for `n <= k` |
//! | `delay(a0,a1,b0,d)` | scalar delay equation |
//! | `shift(m)` | right translation on `m` cells |

pub mod delay;
pub mod shift;
pub mod spectral;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
pub use delay::{DelaySystem, FundamentalSolution};
pub use shift::ShiftSystem;
pub use spectral::{SpectralPreset, SpectralSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelPreset {
    Spectral(SpectralPreset),
    Delay { a0: f64, a1: f64, b0: f64, d: f64 },
    Shift { m: usize },
}

fn args<'a>(s: &'a str, head: &str) -> Option<&'a str> {
    s.strip_prefix(head)?.strip_prefix('(')?.strip_suffix(')')
}

fn numbers(list: &str, count: usize, name: &str) -> Result<Vec<f64>> {
    let v = list
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|e| Error::Model(format!("{name}: {e}")))?;
    if v.len() != count {
        return Err(Error::Model(format!("{name} takes {count} arguments, got {}", v.len())));
    }
    Ok(v)
}

impl FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("spectral:") {
            let p = match rest {
                "landau-ginzburg" => SpectralPreset::LandauGinzburg,
                "double-exponential" => SpectralPreset::DoubleExponential,
                _ => {
                    if let Some(a) = args(rest, "power-law") {
                        SpectralPreset::PowerLaw {
                            alpha: numbers(a, 1, "power-law")?[0],
                        }
                    } else if let Some(a) = args(rest, "finite-support") {
                        let k: usize = a
                            .trim()
                            .parse()
                            .map_err(|e| Error::Model(format!("finite-support: {e}")))?;
                        SpectralPreset::FiniteSupport { support: k }
                    } else {
                        return Err(Error::Model(format!("unknown spectral preset '{rest}'")));
                    }
                }
            };
            return Ok(ModelPreset::Spectral(p));
        }
        if let Some(a) = args(s, "delay") {
            let v = numbers(a, 4, "delay")?;
            return Ok(ModelPreset::Delay {
                a0: v[0],
                a1: v[1],
                b0: v[2],
                d: v[3],
            });
        }
        if let Some(a) = args(s, "shift") {
            let m: usize = a
                .trim()
                .parse()
                .map_err(|e| Error::Model(format!("shift: {e}")))?;
            return Ok(ModelPreset::Shift { m });
        }
        Err(Error::Model(format!("unknown model preset '{s}'")))
    }
}

impl fmt::Display for ModelPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelPreset::Spectral(SpectralPreset::LandauGinzburg) => write!(f, "spectral:landau-ginzburg"),
            ModelPreset::Spectral(SpectralPreset::DoubleExponential) => write!(f, "spectral:double-exponential"),
            ModelPreset::Spectral(SpectralPreset::PowerLaw { alpha }) => write!(f, "spectral:power-law({alpha})"),
            ModelPreset::Spectral(SpectralPreset::FiniteSupport { support }) => {
                write!(f, "spectral:finite-support({support})")
            }
            ModelPreset::Delay { a0, a1, b0, d } => write!(f, "delay({a0},{a1},{b0},{d})"),
            ModelPreset::Shift { m } => write!(f, "shift({m})"),
        }
    }
}
