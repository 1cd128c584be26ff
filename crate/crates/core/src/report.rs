//! Inequality reports: one measured instance of `left ≤ budget · right`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Below this both sides count as zero and the check is vacuous.
pub const VACUOUS: f64 = 1e-14;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InequalityReport {
    pub name: String,
    pub left: f64,
    /// Right-hand side with its constant factored out.
    pub right: f64,
    /// Serialized as the string `"inf"` when the right side vanishes.
    #[serde(with = "ratio_repr")]
    pub ratio: f64,
    pub budget: f64,
    pub pass: bool,
    pub vacuous: bool,
    pub context: BTreeMap<String, Value>,
}

impl InequalityReport {
    /// `ratio = left / right`; passes iff `ratio <= budget`. A zero right
    /// side with a zero left side is a vacuous pass; with a nonzero left side
    /// it fails with an infinite ratio.
    pub fn new(name: impl Into<String>, left: f64, right: f64, budget: f64) -> Self {
        let (ratio, vacuous) = if right.abs() <= VACUOUS {
            if left.abs() <= VACUOUS {
                (0.0, true)
            } else {
                (f64::INFINITY, false)
            }
        } else {
            (left / right, false)
        };
        InequalityReport {
            name: name.into(),
            left,
            right,
            ratio,
            budget,
            pass: vacuous || ratio <= budget,
            vacuous,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    /// The pass flag as implied by the numeric fields.
    pub fn recomputed_pass(&self) -> bool {
        self.vacuous || self.ratio <= self.budget
    }

    /// All values finite (except an infinite ratio on failure) and nonnegative.
    pub fn is_well_formed(&self) -> bool {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        ok(self.left) && ok(self.right) && self.ratio >= 0.0 && self.pass == self.recomputed_pass()
    }
}

/// Max/min stability of a set of positive ratios, as a report with budget
/// `factor`. Vacuous when every input report is vacuous.
pub fn stability(name: &str, reports: &[InequalityReport], factor: f64) -> InequalityReport {
    let live: Vec<f64> = reports.iter().filter(|r| !r.vacuous).map(|r| r.ratio).collect();
    if live.is_empty() {
        return InequalityReport::new(name, 0.0, 0.0, factor).with("scales", reports.len());
    }
    let max = live.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = live.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut r = InequalityReport::new(name, max, min, factor).with("scales", live.len());
    if !(max.is_finite()) || min <= 0.0 {
        r.pass = false;
        r.ratio = f64::INFINITY;
    }
    r
}

pub fn to_json(reports: &[InequalityReport]) -> Result<String> {
    serde_json::to_string_pretty(reports).map_err(|e| Error::Precondition(format!("json: {e}")))
}

/// CSV with one row per report; the context is embedded as compact JSON.
pub fn to_csv(reports: &[InequalityReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "left", "right", "ratio", "budget", "pass", "vacuous", "context"])
        .map_err(csv_err)?;
    for r in reports {
        let ctx = serde_json::to_string(&r.context).map_err(|e| Error::Precondition(e.to_string()))?;
        w.write_record([
            r.name.clone(),
            format!("{:e}", r.left),
            format!("{:e}", r.right),
            format!("{:e}", r.ratio),
            format!("{:e}", r.budget),
            r.pass.to_string(),
            r.vacuous.to_string(),
            ctx,
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON has no infinity; an infinite ratio becomes the string `"inf"`.
pub(crate) mod ratio_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad ratio {t:?}"))),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Precondition(format!("csv: {e}"))
}
