//! Serialized report and campaign formats. The JSON layout is the schema
//! documented in the README; the CSV writers emit no wall-clock columns so
//! reruns with the same seeds are byte identical.

use funsat_core::attack::{AttackError, AttackReport, FunSatConfig};
use funsat_core::sim::KeySequence;
use funsat_core::solver::SolverError;
use funsat_core::verify::{VerifyError, VerifyOutcome};
use serde::{Deserialize, Serialize};

/// Everything needed to reproduce a run, embedded verbatim in its report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: String,
    pub input: String,
    pub oracle: String,
    pub t_k: usize,
    pub attack: FunSatConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FcPoint {
    pub b: usize,
    pub fc: f64,
    pub exact: bool,
    pub samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Phase {
    pub b_star: usize,
    pub fc_window: Vec<FcPoint>,
    pub dips: usize,
    pub conflicts: u64,
    pub verify: VerifyOutcome,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub key: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    /// Locking parameters, when the harness that produced the instance knows
    /// them. Attack runs are blind and leave this null.
    pub scheme: Option<serde_json::Value>,
    pub phases: Vec<Phase>,
    pub result: Outcome,
    pub oracle_queries: u64,
}

pub fn key_to_strings(key: &KeySequence) -> Vec<String> {
    key.iter().map(|f| f.iter().map(|&b| if b { '1' } else { '0' }).collect()).collect()
}

fn phases_of(rep: &AttackReport) -> Vec<Phase> {
    rep.phases
        .iter()
        .map(|p| Phase {
            b_star: p.b,
            fc_window: p
                .fc_estimates
                .iter()
                .map(|&(b, e)| FcPoint { b, fc: e.fc, exact: e.exact, samples: e.samples })
                .collect(),
            dips: p.dips_added,
            conflicts: p.conflicts,
            verify: p.verify.clone(),
            seconds: p.seconds,
        })
        .collect()
}

pub fn success_report(config: RunConfig, rep: &AttackReport, queries: u64) -> Report {
    Report {
        config,
        scheme: None,
        phases: phases_of(rep),
        result: Outcome { status: "success".into(), key: Some(key_to_strings(&rep.key)) },
        oracle_queries: queries,
    }
}

pub fn failure_report(config: RunConfig, status: &str, queries: u64) -> Report {
    Report {
        config,
        scheme: None,
        phases: Vec::new(),
        result: Outcome { status: status.into(), key: None },
        oracle_queries: queries,
    }
}

/// Status label and process exit code for a failed attack. Budget-class
/// failures exit with 2, wall-clock expiry with 3, everything else with 1.
pub fn attack_failure(err: &AttackError) -> (&'static str, u8) {
    match err {
        AttackError::DepthCap(_) => ("depth_cap", 2),
        AttackError::Inconsistent => ("inconsistent", 2),
        AttackError::Solver(SolverError::ConflictBudget { .. })
        | AttackError::Verify(VerifyError::Solver(SolverError::ConflictBudget { .. })) => {
            ("conflict_budget", 2)
        }
        AttackError::Solver(SolverError::Deadline)
        | AttackError::Verify(VerifyError::Solver(SolverError::Deadline)) => ("timeout", 3),
        _ => ("error", 1),
    }
}

/// One campaign line: an (instance, attack mode) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignRow {
    pub circuit: String,
    pub scheme: String,
    pub t_k: usize,
    pub param: String,
    pub mode: String,
    pub seed: u64,
    pub status: String,
    pub b_final: Option<usize>,
    pub phases: Option<usize>,
    pub dips: Option<usize>,
    pub conflicts: Option<u64>,
    pub oracle_queries: u64,
}

pub const CAMPAIGN_HEADER: &str =
    "circuit,scheme,t_k,param,mode,seed,status,b_final,phases,dips,conflicts,oracle_queries";

impl CampaignRow {
    pub fn csv_line(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.circuit,
            self.scheme,
            self.t_k,
            self.param,
            self.mode,
            self.seed,
            self.status,
            opt(self.b_final),
            opt(self.phases),
            opt(self.dips),
            opt(self.conflicts),
            self.oracle_queries
        )
    }
}
