use serde::{Deserialize, Serialize};

use qpcocycle::arithmetic::DcReport;
use qpcocycle::gevrey_approx::{InverseReport, LadderComparison, LadderReport};
use qpcocycle::kam_engine::{BoundCheck, StopReason, TraceRow, ZetaRow};
use qpcocycle::nondegeneracy::DegeneracyEstimate;
use qpcocycle::renormalization::DerivRow;

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    /// Boolean check: value and bound are 1 for true, 0 for false.
    #[serde(rename = "==")]
    Eq,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub m: Option<usize>,
    #[serde(with = "extended_f64")]
    pub value: f64,
    pub relation: Relation,
    #[serde(with = "extended_f64")]
    pub bound: f64,
    pub pass: bool,
}

/// JSON has no infinities: non-finite values travel as "inf", "-inf" or "nan".
mod extended_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
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
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(de::Error::custom(format!("expected a number, got {t:?}"))),
            },
        }
    }
}

impl Check {
    pub fn le(name: &str, m: Option<usize>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            m,
            value,
            relation: Relation::Le,
            bound,
            pass: value <= bound,
        }
    }

    pub fn ge(name: &str, m: Option<usize>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            m,
            value,
            relation: Relation::Ge,
            bound,
            pass: value >= bound,
        }
    }

    pub fn holds(name: &str, m: Option<usize>, ok: bool) -> Self {
        Check {
            name: name.into(),
            m,
            value: if ok { 1.0 } else { 0.0 },
            relation: Relation::Eq,
            bound: 1.0,
            pass: ok,
        }
    }

    pub fn from_bound(b: &BoundCheck, m: Option<usize>) -> Self {
        Check {
            name: b.name.clone(),
            m,
            value: b.value,
            relation: Relation::Le,
            bound: b.bound,
            pass: b.pass,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub schema: u32,
    #[serde(flatten)]
    pub body: Body,
    /// Declared bound checks; the run passes iff all hold.
    pub checks: Vec<Check>,
    /// Present only with --verbose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl Trace {
    pub fn falsified(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Body {
    KamRun(KamTrace),
    GevreyLadder(GevreyTrace),
    RenormRun(RenormTrace),
    DcScan(DcTrace),
    BracketEstimate(BracketTrace),
    HomologicalBench(HomologicalTrace),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KamTrace {
    pub alpha: f64,
    pub reference: String,
    pub sigma: f64,
    pub kappa: f64,
    pub eps0: f64,
    pub rows: Vec<TraceRow>,
    pub stop: Option<StopReason>,
    /// Hypotheses of the chain; reported, not counted as bound checks.
    pub preconditions: Vec<Check>,
    pub m_star: Option<usize>,
    pub zeta: Vec<ZetaRow>,
    pub final_residual: Option<f64>,
    pub final_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GevreyTrace {
    pub green: LadderReport,
    pub truncation: LadderReport,
    pub comparison: LadderComparison,
    pub inverse: InverseReport,
    pub adversarial_rejected: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormRow {
    pub m: usize,
    pub beta_prev: f64,
    pub q_matrix: [[i64; 2]; 2],
    pub path_agreement: f64,
    pub comm_residual: f64,
    pub c_measured: f64,
    pub deriv_pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RenormTrace {
    pub alpha: String,
    pub eps: f64,
    pub rows: Vec<RenormRow>,
    pub deriv_rows: Vec<DerivRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DcTrace {
    pub report: DcReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BracketTrace {
    pub map: String,
    pub n: usize,
    pub estimate: DegeneracyEstimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomologicalRow {
    pub i: usize,
    pub n: usize,
    pub modes: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HomologicalTrace {
    pub alpha: f64,
    pub rows: Vec<HomologicalRow>,
    pub worst: f64,
}

/// Flat row for the renormalization CSV.
#[derive(Clone, Debug, Serialize)]
pub struct RenormCsvRow {
    pub m: usize,
    pub beta_prev: f64,
    pub q00: i64,
    pub q01: i64,
    pub q10: i64,
    pub q11: i64,
    pub path_agreement: f64,
    pub comm_residual: f64,
    pub c_measured: f64,
    pub deriv_pass: bool,
}

impl From<&RenormRow> for RenormCsvRow {
    fn from(r: &RenormRow) -> Self {
        RenormCsvRow {
            m: r.m,
            beta_prev: r.beta_prev,
            q00: r.q_matrix[0][0],
            q01: r.q_matrix[0][1],
            q10: r.q_matrix[1][0],
            q11: r.q_matrix[1][1],
            path_agreement: r.path_agreement,
            comm_residual: r.comm_residual,
            c_measured: r.c_measured,
            deriv_pass: r.deriv_pass,
        }
    }
}

/// Flat row for the ladder CSV.
#[derive(Clone, Debug, Serialize)]
pub struct LevelCsvRow {
    pub ladder: &'static str,
    pub j: usize,
    pub h_j: f64,
    pub gap_norm: Option<f64>,
    pub sup_err: f64,
    pub dbar_defect: Option<f64>,
}
