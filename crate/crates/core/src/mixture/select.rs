//! Choosing the number of mixture components.

use serde::Serialize;

use super::gmm::{bic, fit_gmm, GmmConfig, GmmFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KStrategy {
    Fixed(usize),
    /// Minimum BIC over an inclusive range; ties go to the smaller K.
    Bic { min: usize, max: usize },
    /// One more than the embedding dimension.
    DPlusOne,
}

impl std::str::FromStr for KStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "d_plus_one" {
            return Ok(Self::DPlusOne);
        }
        if let Some(rest) = s.strip_prefix("bic") {
            let rest = rest.trim_start_matches([':', '=']);
            if rest.is_empty() {
                return Ok(Self::Bic { min: 1, max: 10 });
            }
            let (a, b) = rest
                .split_once("..")
                .ok_or_else(|| Error::Config(format!("expected bic:MIN..MAX, got '{s}'")))?;
            let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad K range '{s}'")));
            return Ok(Self::Bic { min: parse(a)?, max: parse(b)? });
        }
        let k = s.strip_prefix("fixed:").unwrap_or(s);
        k.parse::<usize>()
            .map(Self::Fixed)
            .map_err(|_| Error::Config(format!("unknown K strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KDiagnostic {
    pub k: usize,
    pub log_likelihood: f64,
    pub bic: f64,
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k: usize,
    pub diagnostics: Vec<KDiagnostic>,
    pub fit: GmmFit,
}

pub fn select_k(points: &[Vec<f64>], strategy: &KStrategy, seed: u64, cfg: &GmmConfig) -> Result<KSelection> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    let candidates: Vec<usize> = match *strategy {
        KStrategy::Fixed(k) => vec![k],
        KStrategy::DPlusOne => vec![d + 1],
        KStrategy::Bic { min, max } => {
            if min == 0 || min > max {
                return Err(Error::InvalidArgument(format!("bad K range {min}..{max}")));
            }
            (min..=max.min(n)).collect()
        }
    };
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(format!("no K candidate fits n = {n}")));
    }
    let mut diagnostics = Vec::new();
    let mut best: Option<(f64, GmmFit)> = None;
    for k in candidates {
        let fit = fit_gmm(points, k, seed, cfg)?;
        let b = bic(&fit.model, n)?;
        diagnostics.push(KDiagnostic {
            k,
            log_likelihood: fit.model.log_likelihood,
            bic: b,
        });
        if best.as_ref().is_none_or(|(bb, _)| b < *bb) {
            best = Some((b, fit));
        }
    }
    let (_, fit) = best.expect("at least one candidate");
    Ok(KSelection {
        k: fit.model.k,
        diagnostics,
        fit,
    })
}
