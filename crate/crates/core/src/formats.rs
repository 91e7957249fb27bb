//! JSON file formats. Complex numbers are `[re, im]` pairs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expsum::{CoefficientAccess, CoefficientSource, Coverage, ExponentialSum};

/// `{"d", "P", "gamma": [[re, im], ...], "lambda": [[[re, im] x d], ...]}`.
/// `P` is optional so that plain sums (recovery results) share the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalFile {
    pub d: usize,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    pub gamma: Vec<Complex64>,
    pub lambda: Vec<Vec<Complex64>>,
}

impl SignalFile {
    pub fn from_sum(sum: &ExponentialSum, period: Option<f64>) -> Self {
        Self {
            d: sum.dim(),
            period,
            gamma: sum.gamma().to_vec(),
            lambda: sum.frequencies().map(<[Complex64]>::to_vec).collect(),
        }
    }

    pub fn to_sum(&self) -> Result<ExponentialSum> {
        if self.lambda.iter().any(|row| row.len() != self.d) {
            return Err(Error::InvalidSum(format!("frequency rows must have length d = {}", self.d)));
        }
        ExponentialSum::new(self.lambda.clone(), self.gamma.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub k: Vec<i64>,
    pub c: Complex64,
}

/// `{"d", "P", "N", "coverage": "full" | "sparse:<tau>", "entries": [{"k", "c"}, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub d: usize,
    #[serde(rename = "P")]
    pub period: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub coverage: String,
    pub entries: Vec<GridEntry>,
}

impl GridFile {
    pub fn from_source(source: &CoefficientSource) -> Self {
        Self {
            d: source.dim(),
            period: source.period(),
            n: source.half_width(),
            coverage: source.coverage().to_string(),
            entries: source.entries().map(|(k, c)| GridEntry { k, c }).collect(),
        }
    }

    pub fn to_source(&self) -> Result<CoefficientSource> {
        let coverage: Coverage = self.coverage.parse()?;
        if let Some(e) = self.entries.iter().find(|e| e.k.len() != self.d) {
            return Err(Error::BadParameters(format!("index {:?} does not have length d = {}", e.k, self.d)));
        }
        CoefficientSource::from_entries(
            self.d,
            self.period,
            self.n,
            coverage,
            self.entries.iter().map(|e| (e.k.clone(), e.c)),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expsum::synthesize;

    #[test]
    fn signal_json_layout() {
        let sum = ExponentialSum::new(vec![vec![Complex64::new(0.0, 1.0), Complex64::new(-1.0, 0.5)]], vec![Complex64::new(2.0, 0.0)]).unwrap();
        let json = serde_json::to_string(&SignalFile::from_sum(&sum, Some(4.0))).unwrap();
        assert_eq!(json, r#"{"d":2,"P":4.0,"gamma":[[2.0,0.0]],"lambda":[[[0.0,1.0],[-1.0,0.5]]]}"#);
        let back: SignalFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_sum().unwrap(), sum);
    }

    #[test]
    fn grid_roundtrip_preserves_values() {
        let sum = crate::catalog::f1().sum;
        for coverage in [Coverage::Full, Coverage::SparseLines { tau: 7 }] {
            let src = synthesize(&sum, 4.0, 15, coverage).unwrap();
            let json = serde_json::to_string(&GridFile::from_source(&src)).unwrap();
            let back: GridFile = serde_json::from_str(&json).unwrap();
            assert_eq!(back.to_source().unwrap(), src);
        }
    }

    #[test]
    fn grid_with_wrong_entries_is_rejected() {
        let sum = crate::catalog::f1().sum;
        let src = synthesize(&sum, 4.0, 15, Coverage::SparseLines { tau: 7 }).unwrap();
        let mut file = GridFile::from_source(&src);
        file.entries.pop();
        assert!(file.to_source().is_err());
        let mut file = GridFile::from_source(&src);
        file.coverage = "sparse:6".into();
        assert!(file.to_source().is_err());
    }
}
