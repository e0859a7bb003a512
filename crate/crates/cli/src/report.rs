//! Artifact writers: the metrics and event CSVs, the run summary in
//! structured text or CSV form, and the algorithm comparison table.
//!
//! Every writer is a pure function from a finished run to a string, with a
//! fixed column order, so identical runs produce byte-identical files.

use std::fmt::Write as _;

use fedhpc_core::clock::{EventKind, SimEvent, NO_CLIENT};
use fedhpc_core::orchestrator::{relative_improvement, MetricsLog, RoundRecord, Summary};

pub const METRICS_HEADER: &str = "sim_time_s,event,client_id,global_version,global_loss,\
                                  global_acc,local_loss,local_steps,queue_wait_s,train_s,transfer_s";
pub const EVENTS_HEADER: &str = "time_s,sequence,kind,client_id,detail";

/// Shortest-round-trip decimal form; stable across runs and platforms.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn client_name(names: &[String], client_id: usize) -> &str {
    if client_id == NO_CLIENT {
        return "";
    }
    names.get(client_id).map(String::as_str).unwrap_or("")
}

/// One row per round record, clients rendered by facility name, absent
/// fields as empty cells.
pub fn metrics_csv(log: &MetricsLog, facility_names: &[String]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in &log.records {
        let _ = writeln!(out, "{}", metrics_row(r, facility_names));
    }
    out
}

fn metrics_row(r: &RoundRecord, names: &[String]) -> String {
    let client = match r.client_id {
        Some(c) => client_name(names, c),
        None => "",
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        fmt_f64(r.sim_time_s),
        r.event.name(),
        client,
        r.global_version,
        opt_f64(r.global_loss),
        opt_f64(r.global_acc),
        opt_f64(r.local_loss),
        r.local_steps.map(|s| s.to_string()).unwrap_or_default(),
        opt_f64(r.queue_wait_s),
        opt_f64(r.train_s),
        opt_f64(r.transfer_s),
    )
}

/// Full event trace; aggregation events carry the new version in `detail`,
/// client events their per-client round index.
pub fn events_csv(events: &[SimEvent], facility_names: &[String]) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in events {
        let detail = match e.kind {
            EventKind::Aggregation => format!("version={}", e.round),
            _ => format!("round={}", e.round),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(e.time_s),
            e.sequence,
            e.kind.name(),
            client_name(facility_names, e.client_id),
            detail
        );
    }
    out
}

/// `key = value` lines in a fixed order; list-valued entries are keyed by
/// facility name.
pub fn summary_text(
    scenario: &str,
    algorithm: &str,
    seed: u64,
    summary: &Summary,
    facility_names: &[String],
) -> String {
    let mut out = String::new();
    for (k, v) in summary_pairs(scenario, algorithm, seed, summary, facility_names) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

/// The same pairs as [`summary_text`], as a two-column CSV.
pub fn summary_csv(
    scenario: &str,
    algorithm: &str,
    seed: u64,
    summary: &Summary,
    facility_names: &[String],
) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in summary_pairs(scenario, algorithm, seed, summary, facility_names) {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

fn summary_pairs(
    scenario: &str,
    algorithm: &str,
    seed: u64,
    s: &Summary,
    names: &[String],
) -> Vec<(String, String)> {
    let mut pairs = vec![
        ("scenario".into(), scenario.to_string()),
        ("algorithm".into(), algorithm.to_string()),
        ("seed".into(), seed.to_string()),
        ("rounds_started".into(), s.rounds_started.to_string()),
        (
            "local_rounds_completed".into(),
            s.client_rounds.iter().sum::<u64>().to_string(),
        ),
        ("aggregations".into(), s.aggregations.to_string()),
        ("final_version".into(), s.final_version.to_string()),
        ("final_global_loss".into(), fmt_f64(s.final_global_loss)),
        ("final_global_acc".into(), fmt_f64(s.final_global_acc)),
        (
            "last_aggregation_time_s".into(),
            opt_f64(s.last_aggregation_time_s),
        ),
        ("total_sim_time_s".into(), fmt_f64(s.total_sim_time_s)),
    ];
    for (c, rounds) in s.client_rounds.iter().enumerate() {
        pairs.push((format!("client_rounds[{}]", client_name(names, c)), rounds.to_string()));
    }
    for (c, loss) in s.client_final_local_loss.iter().enumerate() {
        pairs.push((
            format!("client_final_local_loss[{}]", client_name(names, c)),
            opt_f64(*loss),
        ));
    }
    pairs
}

/// Comparison table: one row per algorithm with final metrics, the
/// per-facility round distribution, and the full pairwise matrix of relative
/// loss improvements (row improves on column; diagonal zero).
pub fn comparison_csv(entries: &[(String, Summary)], facility_names: &[String]) -> String {
    let mut header = String::from(
        "algorithm,final_global_loss,final_global_acc,aggregations,local_rounds_total",
    );
    for name in facility_names {
        let _ = write!(header, ",rounds[{name}]");
    }
    for (algo, _) in entries {
        let _ = write!(header, ",improvement_vs_{algo}_pct");
    }
    let mut out = header;
    out.push('\n');
    for (algo, s) in entries {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            algo,
            fmt_f64(s.final_global_loss),
            fmt_f64(s.final_global_acc),
            s.aggregations,
            s.client_rounds.iter().sum::<u64>(),
        );
        for rounds in &s.client_rounds {
            let _ = write!(out, ",{rounds}");
        }
        for (_, other) in entries {
            let pct =
                100.0 * relative_improvement(s.final_global_loss, other.final_global_loss);
            let _ = write!(out, ",{}", fmt_f64(pct));
        }
        out.push('\n');
    }
    out
}

/// Per-seed sweep rollup, one row per seed in ascending order.
pub fn sweep_csv(rows: &[(u64, Summary)], facility_names: &[String]) -> String {
    let mut header = String::from(
        "seed,rounds_started,aggregations,final_version,final_global_loss,final_global_acc,\
         total_sim_time_s",
    );
    for name in facility_names {
        let _ = write!(header, ",rounds[{name}]");
    }
    let mut out = header;
    out.push('\n');
    for (seed, s) in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            seed,
            s.rounds_started,
            s.aggregations,
            s.final_version,
            fmt_f64(s.final_global_loss),
            fmt_f64(s.final_global_acc),
            fmt_f64(s.total_sim_time_s),
        );
        for rounds in &s.client_rounds {
            let _ = write!(out, ",{rounds}");
        }
        out.push('\n');
    }
    out
}
