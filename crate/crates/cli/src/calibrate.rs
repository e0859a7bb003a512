//! Calibration checks: re-derives every anchor declared in a scenario's
//! calibration section from the configured models and reports pass/fail.
//! Anchors cover throughput at a node count, payload size accounting,
//! round-trip latencies, empirical queue medians, and effective batch sizes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedhpc_core::facility::{model_size_mb, FacilityProfile};

use crate::config::ScenarioFile;
use crate::CliError;

/// Fixed stream for the queue-median estimate so the check is reproducible.
const QUEUE_CHECK_SEED: u64 = 0x51_0e_a2;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    pub fn render(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{}: {} ({})", self.name, verdict, self.detail)
    }
}

/// Runs every declared anchor check. An empty calibration section yields an
/// empty report, not an error.
pub fn run_checks(file: &ScenarioFile) -> Result<Vec<CheckLine>, CliError> {
    let Some(cal) = &file.calibration else {
        return Ok(Vec::new());
    };
    let mut profiles: Vec<FacilityProfile> =
        file.facilities.iter().map(|f| f.lower()).collect();
    profiles.extend(cal.extra_profiles.iter().map(|f| f.lower()));
    for p in &profiles {
        p.validate().map_err(|e| CliError::Config(format!("facility {}: {e}", p.name)))?;
    }
    let find = |name: &str| -> Result<&FacilityProfile, CliError> {
        profiles.iter().find(|p| p.name == name).ok_or_else(|| {
            CliError::Config(format!("calibration anchor names unknown facility {name:?}"))
        })
    };

    let mut lines = Vec::new();
    for a in &cal.throughput_anchors {
        let p = find(&a.facility)?;
        let got = p.throughput(a.nodes);
        let tol = a.samples_per_s * a.tolerance_pct / 100.0;
        lines.push(CheckLine {
            name: format!("throughput {}@{}", a.facility, a.nodes),
            passed: (got - a.samples_per_s).abs() <= tol,
            detail: format!(
                "{got} samples/s vs anchor {} +/-{}%",
                a.samples_per_s, a.tolerance_pct
            ),
        });
    }
    for a in &cal.model_size_anchors {
        let got = model_size_mb(a.param_count);
        lines.push(CheckLine {
            name: format!("model_size {} params", a.param_count),
            passed: got == a.size_mb,
            detail: format!("{got} MB vs anchor {} MB, exact", a.size_mb),
        });
    }
    for a in &cal.rtt_anchors {
        let p = find(&a.facility)?;
        lines.push(CheckLine {
            name: format!("rtt {}", a.facility),
            passed: p.rtt_ms == a.rtt_ms,
            detail: format!("{} ms vs anchor {} ms, exact", p.rtt_ms, a.rtt_ms),
        });
    }
    for a in &cal.queue_anchors {
        let p = find(&a.facility)?;
        if a.draws == 0 {
            return Err(CliError::Config("queue anchor draws must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(QUEUE_CHECK_SEED);
        let mut waits: Vec<f64> =
            (0..a.draws).map(|_| p.queue.sample_wait(a.nodes, &mut rng)).collect();
        waits.sort_by(f64::total_cmp);
        let mid = waits.len() / 2;
        let median = if waits.len() % 2 == 0 {
            0.5 * (waits[mid - 1] + waits[mid])
        } else {
            waits[mid]
        };
        let tol = a.median_s * a.tolerance_pct / 100.0;
        lines.push(CheckLine {
            name: format!("queue_median {}@{}", a.facility, a.nodes),
            passed: (median - a.median_s).abs() <= tol,
            detail: format!(
                "empirical {median} s over {} draws vs anchor {} s +/-{}%",
                a.draws, a.median_s, a.tolerance_pct
            ),
        });
    }
    for a in &cal.effective_batch_anchors {
        let p = find(&a.facility)?;
        let got = p.effective_batch();
        lines.push(CheckLine {
            name: format!("effective_batch {}", a.facility),
            passed: got == a.effective_batch,
            detail: format!("{got} vs anchor {}, exact", a.effective_batch),
        });
    }
    Ok(lines)
}
