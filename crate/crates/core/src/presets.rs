//! Measurement plans for the two benchmark regimes: `k+ > k-` (`case_a`,
//! `n = 1/4`) and `k+ < k-` (`case_b`, `n = 1.45^2`).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::medium::critical_angle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    CaseA,
    CaseB,
}

impl Regime {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "case_a" => Ok(Self::CaseA),
            "case_b" => Ok(Self::CaseB),
            other => Err(Error::InvalidParameter(format!("unknown regime {other:?} (expected case_a or case_b)"))),
        }
    }

    pub fn refractive_index(self) -> f64 {
        match self {
            Self::CaseA => 0.25,
            Self::CaseB => 1.45 * 1.45,
        }
    }

    pub fn theta_c(self) -> f64 {
        critical_angle(1.0, self.refractive_index().sqrt()).expect("positive wave numbers")
    }

    /// Frequency schedule `k+` of the shape reconstruction.
    pub fn schedule(self) -> Vec<f64> {
        match self {
            Self::CaseA => vec![1.5, 3.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0],
            Self::CaseB => vec![0.8, 1.5, 2.0, 3.0, 4.0, 5.0, 7.0, 11.0, 13.0],
        }
    }

    /// Angles of the incident-direction pairs of the shape reconstruction.
    pub fn pairs(self) -> Vec<[f64; 2]> {
        let tc = self.theta_c();
        match self {
            Self::CaseA => vec![
                [2.0 * PI - tc, PI + tc],
                [2.0 * PI - tc, 1.25 * PI + tc / 2.0],
                [1.5 * PI, 1.75 * PI - tc / 2.0],
            ],
            Self::CaseB => vec![
                [2.0 * PI - PI / 300.0, 1.25 * PI],
                [1.5 * PI, 1.75 * PI],
                [2.0 * PI - PI / 400.0, 1.75 * PI],
                [1.5 * PI, 1.25 * PI],
            ],
        }
    }
}
