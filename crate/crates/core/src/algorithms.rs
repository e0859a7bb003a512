//! Server-side aggregation state machines for the four federated learning
//! strategies: synchronous FedAvg, fully asynchronous FedAsync, buffered
//! FedBuff, and group-scheduled FedCompass.
//!
//! All four share a versioned [`GlobalModel`]. Every aggregation event
//! increments the version by exactly one, and staleness is measured against
//! it: a client that trained from version `b` and lands while the server is
//! at version `v` carries staleness `v - b`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

// Needed only when no crate in the build graph links std; any std build
// (tests, downstream binaries) sees std's inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::Error;
use crate::params::ParamVector;

/// A finished local training result as shipped back to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    /// Global model version the client trained from.
    pub base_version: u64,
    pub sample_count: u64,
    pub local_steps: u32,
    /// Simulated time at which the update reached the server.
    pub completion_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub params: ParamVector,
    /// Increments by exactly one per aggregation event.
    pub version: u64,
}

impl GlobalModel {
    pub fn zeros(dim: usize) -> Self {
        Self { params: ParamVector::zeros(dim), version: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    FedAvg,
    FedAsync,
    FedBuff,
    FedCompass,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] =
        [Self::FedAvg, Self::FedAsync, Self::FedBuff, Self::FedCompass];

    pub fn name(self) -> &'static str {
        match self {
            Self::FedAvg => "fedavg",
            Self::FedAsync => "fedasync",
            Self::FedBuff => "fedbuff",
            Self::FedCompass => "fedcompass",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl core::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Tuning knobs shared by all four strategies; each strategy reads only the
/// fields it uses.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    /// Base asynchronous mixing rate, in (0, 1].
    pub alpha: f64,
    /// Exponent `a` of the polynomial staleness discount (s+1)^-a.
    pub staleness_exponent: f64,
    /// Updates buffered per FedBuff aggregation.
    pub buffer_size: usize,
    /// Smallest local step count the group scheduler may assign.
    pub q_min: u32,
    /// Largest local step count the group scheduler may assign.
    pub q_max: u32,
    /// Grace period past a group's target arrival before it closes.
    pub group_window_s: f64,
    /// Server-side learning rate applied to FedBuff's mean delta.
    pub server_lr: f64,
    /// Smoothing of the per-client seconds-per-step moving average.
    pub speed_smoothing: f64,
    /// Weight group members equally instead of by sample count.
    pub uniform_group_weights: bool,
}

impl AlgorithmConfig {
    /// Documented defaults: alpha 0.6, staleness exponent 0.5, buffer size 2,
    /// q_min = ceil(base_steps/10), q_max = base_steps, group window = 5% of
    /// the expected round time, server learning rate 1, speed smoothing 0.5,
    /// sample-count group weighting.
    pub fn with_defaults(kind: AlgorithmKind, base_steps: u32, expected_round_s: f64) -> Self {
        Self {
            kind,
            alpha: 0.6,
            staleness_exponent: 0.5,
            buffer_size: 2,
            q_min: base_steps.div_ceil(10).max(1),
            q_max: base_steps.max(1),
            group_window_s: 0.05 * expected_round_s,
            server_lr: 1.0,
            speed_smoothing: 0.5,
            uniform_group_weights: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        fn bad(msg: &str) -> Error {
            Error::config(String::from(msg))
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(bad("algorithm.alpha must lie in (0, 1]"));
        }
        if !(self.staleness_exponent >= 0.0) || !self.staleness_exponent.is_finite() {
            return Err(bad("algorithm.staleness_exponent must be >= 0"));
        }
        if self.buffer_size < 1 {
            return Err(bad("algorithm.buffer_size must be >= 1"));
        }
        if self.q_min < 1 || self.q_min > self.q_max {
            return Err(bad("algorithm steps must satisfy 1 <= q_min <= q_max"));
        }
        if !(self.group_window_s > 0.0) || !self.group_window_s.is_finite() {
            return Err(bad("algorithm.group_window_s must be > 0"));
        }
        if !(self.server_lr > 0.0) || !self.server_lr.is_finite() {
            return Err(bad("algorithm.server_lr must be > 0"));
        }
        if !(self.speed_smoothing > 0.0 && self.speed_smoothing <= 1.0) {
            return Err(bad("algorithm.speed_smoothing must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Exponential moving average of a client's observed seconds per local step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedEstimate {
    pub client_id: usize,
    /// Meaningless until `observations >= 1`.
    pub seconds_per_step: f64,
    pub observations: u64,
}

impl SpeedEstimate {
    pub fn unobserved(client_id: usize) -> Self {
        Self { client_id, seconds_per_step: 0.0, observations: 0 }
    }
}

/// One scheduling group: clients assigned step counts aimed at a shared
/// arrival time, aggregated together when everyone lands or the window runs
/// out.
#[derive(Debug, Clone)]
pub struct CompassGroup {
    pub group_id: usize,
    pub member_ids: BTreeSet<usize>,
    /// None marks a bootstrap single-member group that cannot be joined and
    /// closes when its one update arrives.
    pub target_arrival: Option<f64>,
    pub buffered: Vec<ClientUpdate>,
    pub open: bool,
}

/// Single-owner server state driven by the orchestrator's event loop.
#[derive(Debug, Clone)]
pub struct ServerState {
    global: GlobalModel,
    fedbuff_deltas: Vec<ParamVector>,
    dispatch_snapshots: BTreeMap<usize, ParamVector>,
    speeds: BTreeMap<usize, SpeedEstimate>,
    overheads: BTreeMap<usize, f64>,
    groups: Vec<CompassGroup>,
    /// client_id -> index of the open group it belongs to.
    assignment: BTreeMap<usize, usize>,
}

impl ServerState {
    pub fn new(initial: GlobalModel) -> Self {
        Self {
            global: initial,
            fedbuff_deltas: Vec::new(),
            dispatch_snapshots: BTreeMap::new(),
            speeds: BTreeMap::new(),
            overheads: BTreeMap::new(),
            groups: Vec::new(),
            assignment: BTreeMap::new(),
        }
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    /// Installs an already-versioned global model (used by strategies whose
    /// apply step is a pure function).
    pub fn set_global(&mut self, model: GlobalModel) {
        debug_assert!(model.version > self.global.version);
        self.global = model;
    }

    /// Replaces the parameters and bumps the version by one, returning the
    /// new model. All aggregation paths funnel through here or set_global.
    pub fn commit_aggregate(&mut self, params: ParamVector) -> GlobalModel {
        self.global = GlobalModel { params, version: self.global.version + 1 };
        self.global.clone()
    }

    /// Snapshots the current global params as the reference point for the
    /// client's next update (FedBuff measures deltas against this).
    pub fn note_dispatch(&mut self, client_id: usize) {
        self.dispatch_snapshots.insert(client_id, self.global.params.clone());
    }

    /// Like [`Self::note_dispatch`] but records an explicit base: the exact
    /// model the server sent the client, which may trail the current global
    /// if an aggregation landed while the download was in flight.
    pub fn note_dispatch_base(&mut self, client_id: usize, base: ParamVector) {
        self.dispatch_snapshots.insert(client_id, base);
    }

    /// Folds an observed seconds-per-step sample into the client's EMA.
    pub fn observe_speed(
        &mut self,
        client_id: usize,
        seconds_per_step: f64,
        smoothing: f64,
    ) -> Result<(), Error> {
        let est = self
            .speeds
            .remove(&client_id)
            .unwrap_or_else(|| SpeedEstimate::unobserved(client_id));
        let next = update_speed(&est, seconds_per_step, smoothing)?;
        self.speeds.insert(client_id, next);
        Ok(())
    }

    pub fn speed(&self, client_id: usize) -> Option<&SpeedEstimate> {
        self.speeds.get(&client_id).filter(|e| e.observations > 0)
    }

    /// Sets the client's expected non-training seconds per round (startup
    /// plus queue plus transfer) used when sizing group step assignments.
    pub fn set_client_overhead(&mut self, client_id: usize, overhead_s: f64) {
        self.overheads.insert(client_id, overhead_s);
    }

    pub fn fedbuff_fill(&self) -> usize {
        self.fedbuff_deltas.len()
    }

    pub fn open_group_count(&self) -> usize {
        self.groups.iter().filter(|g| g.open).count()
    }

    pub fn group(&self, group_id: usize) -> Option<&CompassGroup> {
        self.groups.get(group_id)
    }

    pub fn assigned_group(&self, client_id: usize) -> Option<usize> {
        self.assignment.get(&client_id).copied()
    }

    fn push_group(&mut self, client_id: usize, target_arrival: Option<f64>) -> usize {
        let group_id = self.groups.len();
        let mut member_ids = BTreeSet::new();
        member_ids.insert(client_id);
        self.groups.push(CompassGroup {
            group_id,
            member_ids,
            target_arrival,
            buffered: Vec::new(),
            open: true,
        });
        self.assignment.insert(client_id, group_id);
        group_id
    }

    /// Closes the group at `group_id`, releasing member assignments, and
    /// returns its buffered updates.
    fn close_group(&mut self, group_id: usize) -> Vec<ClientUpdate> {
        let (updates, members) = {
            let g = &mut self.groups[group_id];
            g.open = false;
            (core::mem::take(&mut g.buffered), g.member_ids.iter().copied().collect::<Vec<_>>())
        };
        for m in members {
            self.assignment.remove(&m);
        }
        updates
    }
}

/// Sample-count-weighted mean of a synchronous round's updates. All updates
/// must share one base version; the fold runs in client-id order so the
/// result is exactly permutation invariant.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<ParamVector, Error> {
    let first = updates.first().ok_or(Error::EmptyUpdateList)?;
    for u in updates {
        if u.base_version != first.base_version {
            return Err(Error::MixedBaseVersion(first.base_version, u.base_version));
        }
        if u.sample_count == 0 {
            return Err(Error::ZeroSampleClient(u.client_id));
        }
    }
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    ParamVector::weighted_mean(sorted.iter().map(|u| (u.sample_count as f64, &u.params)))
}

/// Polynomial staleness discount (s+1)^-a in (0, 1]. The common exponents 0,
/// 0.5, and 1 take exact paths so round staleness values give exact weights.
pub fn staleness_factor(staleness: u64, exponent: f64) -> f64 {
    if exponent == 0.0 || staleness == 0 {
        return 1.0;
    }
    let base = (staleness + 1) as f64;
    if exponent == 0.5 {
        1.0 / base.sqrt()
    } else if exponent == 1.0 {
        1.0 / base
    } else {
        base.powf(-exponent)
    }
}

/// Asynchronous mixing: new = (1 - a_t) * global + a_t * update where
/// a_t = alpha * staleness_factor(version - base_version, exponent).
pub fn fedasync_apply(
    global: &GlobalModel,
    update: &ClientUpdate,
    cfg: &AlgorithmConfig,
) -> Result<GlobalModel, Error> {
    if update.base_version > global.version {
        return Err(Error::NegativeStaleness {
            base_version: update.base_version,
            version: global.version,
        });
    }
    let staleness = global.version - update.base_version;
    let alpha_t = cfg.alpha * staleness_factor(staleness, cfg.staleness_exponent);
    let params = global.params.mix(&update.params, alpha_t)?;
    Ok(GlobalModel { params, version: global.version + 1 })
}

/// Buffers the staleness-weighted delta of one update; once `buffer_size`
/// deltas have accumulated, applies their mean scaled by the server learning
/// rate, clears the buffer, and returns the new model.
pub fn fedbuff_ingest(
    state: &mut ServerState,
    update: &ClientUpdate,
    cfg: &AlgorithmConfig,
) -> Result<Option<GlobalModel>, Error> {
    let snapshot = state
        .dispatch_snapshots
        .remove(&update.client_id)
        .ok_or(Error::MissingDispatch(update.client_id))?;
    if update.base_version > state.global.version {
        return Err(Error::NegativeStaleness {
            base_version: update.base_version,
            version: state.global.version,
        });
    }
    let staleness = state.global.version - update.base_version;
    let alpha_t = cfg.alpha * staleness_factor(staleness, cfg.staleness_exponent);
    let delta = update.params.sub(&snapshot)?.scale(alpha_t)?;
    state.fedbuff_deltas.push(delta);
    if state.fedbuff_deltas.len() < cfg.buffer_size {
        return Ok(None);
    }
    let share = cfg.server_lr / state.fedbuff_deltas.len() as f64;
    let mut params = state.global.params.clone();
    let deltas = core::mem::take(&mut state.fedbuff_deltas);
    for d in &deltas {
        params.add_scaled(d, share)?;
    }
    Ok(Some(state.commit_aggregate(params)))
}

/// Pure EMA step over observed seconds per step; the first observation seeds
/// the estimate directly.
pub fn update_speed(
    est: &SpeedEstimate,
    observed_seconds_per_step: f64,
    smoothing: f64,
) -> Result<SpeedEstimate, Error> {
    if !(observed_seconds_per_step > 0.0) || !observed_seconds_per_step.is_finite() {
        return Err(Error::NonPositiveObservation(observed_seconds_per_step));
    }
    if !(smoothing > 0.0 && smoothing <= 1.0) {
        return Err(Error::config("speed smoothing must lie in (0, 1]"));
    }
    let seconds_per_step = if est.observations == 0 {
        observed_seconds_per_step
    } else {
        (1.0 - smoothing) * est.seconds_per_step + smoothing * observed_seconds_per_step
    };
    Ok(SpeedEstimate {
        client_id: est.client_id,
        seconds_per_step,
        observations: est.observations + 1,
    })
}

/// Assigns the client a step count and group. The client joins the earliest
/// open group whose target arrival it can hit within [q_min, q_max] steps;
/// otherwise it opens a new group sized at q_max. Without a speed estimate
/// the client gets q_max in a bootstrap group that closes on arrival.
pub fn compass_assign(
    state: &mut ServerState,
    client_id: usize,
    now: f64,
    cfg: &AlgorithmConfig,
) -> Result<(u32, usize), Error> {
    if state.assignment.contains_key(&client_id) {
        return Err(Error::ClientBusy(client_id));
    }
    let sps = match state.speed(client_id) {
        Some(est) => est.seconds_per_step,
        None => {
            let group_id = state.push_group(client_id, None);
            return Ok((cfg.q_max, group_id));
        }
    };
    let overhead = state.overheads.get(&client_id).copied().unwrap_or(0.0);
    let mut joined: Option<(u32, usize)> = None;
    for g in state.groups.iter() {
        if !g.open {
            continue;
        }
        let Some(target) = g.target_arrival else { continue };
        let q = ((target - now - overhead) / sps).round();
        if q >= cfg.q_min as f64 && q <= cfg.q_max as f64 {
            joined = Some((q as u32, g.group_id));
            break;
        }
    }
    if let Some((steps, group_id)) = joined {
        state.groups[group_id].member_ids.insert(client_id);
        state.assignment.insert(client_id, group_id);
        return Ok((steps, group_id));
    }
    let target = now + overhead + cfg.q_max as f64 * sps;
    let group_id = state.push_group(client_id, Some(target));
    Ok((cfg.q_max, group_id))
}

/// Opens an unjoinable single-member group for a dispatch whose step count
/// the caller chose itself (the bootstrap round uses sample-proportional
/// steps before any timing signal exists).
pub fn compass_open_singleton(state: &mut ServerState, client_id: usize) -> Result<usize, Error> {
    if state.assignment.contains_key(&client_id) {
        return Err(Error::ClientBusy(client_id));
    }
    Ok(state.push_group(client_id, None))
}

/// Removes a client that will never deliver (dropout) from its open group.
/// If everyone remaining has already arrived the group aggregates now.
pub fn compass_cancel(
    state: &mut ServerState,
    client_id: usize,
    cfg: &AlgorithmConfig,
) -> Result<Option<GlobalModel>, Error> {
    let Some(group_id) = state.assignment.remove(&client_id) else {
        return Ok(None);
    };
    let ready = {
        let g = state.groups.get_mut(group_id).ok_or(Error::UnknownGroup(group_id))?;
        g.member_ids.remove(&client_id);
        if g.member_ids.is_empty() && g.buffered.is_empty() {
            g.open = false;
            return Ok(None);
        }
        g.open && !g.buffered.is_empty() && g.buffered.len() == g.member_ids.len()
    };
    if !ready {
        return Ok(None);
    }
    let updates = state.close_group(group_id);
    let new = compass_group_apply(&state.global, &updates, cfg)?;
    Ok(Some(install(state, new)))
}

/// Buffers an arriving update in its group; aggregates once every member has
/// arrived or the group's window has lapsed. An update whose group already
/// closed aggregates alone immediately.
pub fn compass_ingest(
    state: &mut ServerState,
    update: &ClientUpdate,
    now: f64,
    cfg: &AlgorithmConfig,
) -> Result<Option<GlobalModel>, Error> {
    let Some(&group_id) = state.assignment.get(&update.client_id) else {
        let new = compass_group_apply(&state.global, core::slice::from_ref(update), cfg)?;
        return Ok(Some(install(state, new)));
    };
    let triggered = {
        let g = state.groups.get_mut(group_id).ok_or(Error::UnknownGroup(group_id))?;
        if !g.member_ids.contains(&update.client_id) {
            return Err(Error::UnknownGroup(group_id));
        }
        g.buffered.push(update.clone());
        let all_arrived = g.buffered.len() == g.member_ids.len();
        let past_deadline =
            g.target_arrival.is_some_and(|t| now > t + cfg.group_window_s);
        all_arrived || past_deadline
    };
    if !triggered {
        return Ok(None);
    }
    let updates = state.close_group(group_id);
    let new = compass_group_apply(&state.global, &updates, cfg)?;
    Ok(Some(install(state, new)))
}

/// Closes every open group whose window has lapsed, aggregating any buffered
/// arrivals. The orchestrator calls this as simulated time advances; members
/// that have not arrived lose their assignment and will aggregate alone.
pub fn compass_flush_due(
    state: &mut ServerState,
    now: f64,
    cfg: &AlgorithmConfig,
) -> Result<Vec<GlobalModel>, Error> {
    let mut out = Vec::new();
    for group_id in 0..state.groups.len() {
        let due = {
            let g = &state.groups[group_id];
            g.open && g.target_arrival.is_some_and(|t| now > t + cfg.group_window_s)
        };
        if !due {
            continue;
        }
        let updates = state.close_group(group_id);
        if updates.is_empty() {
            continue;
        }
        let new = compass_group_apply(&state.global, &updates, cfg)?;
        out.push(install(state, new));
    }
    Ok(out)
}

fn install(state: &mut ServerState, model: GlobalModel) -> GlobalModel {
    state.set_global(model.clone());
    model
}

/// Group aggregation: weighted mean of member params (sample counts unless
/// the uniform switch is on), then one asynchronous mix using the group's
/// minimum base version for staleness.
fn compass_group_apply(
    global: &GlobalModel,
    updates: &[ClientUpdate],
    cfg: &AlgorithmConfig,
) -> Result<GlobalModel, Error> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let mean = if cfg.uniform_group_weights {
        ParamVector::weighted_mean(sorted.iter().map(|u| (1.0, &u.params)))?
    } else {
        for u in &sorted {
            if u.sample_count == 0 {
                return Err(Error::ZeroSampleClient(u.client_id));
            }
        }
        ParamVector::weighted_mean(sorted.iter().map(|u| (u.sample_count as f64, &u.params)))?
    };
    let min_base = sorted.iter().map(|u| u.base_version).min().ok_or(Error::EmptyUpdateList)?;
    if min_base > global.version {
        return Err(Error::NegativeStaleness { base_version: min_base, version: global.version });
    }
    let alpha_t = cfg.alpha * staleness_factor(global.version - min_base, cfg.staleness_exponent);
    let params = global.params.mix(&mean, alpha_t)?;
    Ok(GlobalModel { params, version: global.version + 1 })
}

/// Sample-proportional step sizing: steps_i = max(1, round(base * n_i / max n)).
pub fn select_steps_proportional(sample_counts: &[u64], base_steps: u32) -> Vec<u32> {
    let max = sample_counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    sample_counts
        .iter()
        .map(|&n| {
            let steps = (base_steps as f64 * n as f64 / max).round();
            (steps as u32).max(1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn upd(client_id: usize, values: Vec<f64>, base_version: u64, sample_count: u64) -> ClientUpdate {
        ClientUpdate {
            client_id,
            params: ParamVector::new(values).unwrap(),
            base_version,
            sample_count,
            local_steps: 1,
            completion_time_s: 0.0,
        }
    }

    fn cfg(kind: AlgorithmKind) -> AlgorithmConfig {
        AlgorithmConfig::with_defaults(kind, 20, 1000.0)
    }

    #[test]
    fn fedavg_symmetric_mean() {
        let updates = [upd(0, vec![0.0, 2.0], 0, 5), upd(1, vec![2.0, 0.0], 0, 5)];
        let out = fedavg_aggregate(&updates).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0]);
    }

    #[test]
    fn fedavg_single_update_is_identity() {
        let updates = [upd(3, vec![0.25, -1.5, 8.0], 2, 7)];
        let out = fedavg_aggregate(&updates).unwrap();
        assert_eq!(out, updates[0].params);
    }

    // Hand oracle: n = [1,2,3], params [6],[3],[1] -> (6 + 6 + 3)/6 = 2.5.
    #[test]
    fn fedavg_weighted_mean_oracle() {
        let updates = [upd(0, vec![6.0], 0, 1), upd(1, vec![3.0], 0, 2), upd(2, vec![1.0], 0, 3)];
        let out = fedavg_aggregate(&updates).unwrap();
        assert!((out.values()[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn fedavg_is_permutation_invariant() {
        let a = upd(0, vec![0.1, 0.9], 0, 3);
        let b = upd(1, vec![-0.7, 0.3], 0, 11);
        let c = upd(2, vec![2.2, -5.0], 0, 6);
        let x = fedavg_aggregate(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let y = fedavg_aggregate(&[c, a, b]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn fedavg_rejects_mixed_versions_and_empty() {
        let updates = [upd(0, vec![1.0], 0, 1), upd(1, vec![1.0], 1, 1)];
        assert_eq!(fedavg_aggregate(&updates), Err(Error::MixedBaseVersion(0, 1)));
        assert_eq!(fedavg_aggregate(&[]), Err(Error::EmptyUpdateList));
        let zero = [upd(4, vec![1.0], 0, 0)];
        assert_eq!(fedavg_aggregate(&zero), Err(Error::ZeroSampleClient(4)));
    }

    #[test]
    fn staleness_factor_known_values() {
        assert_eq!(staleness_factor(0, 0.5), 1.0);
        assert_eq!(staleness_factor(5, 0.0), 1.0);
        // 4^-0.5 lands exactly on 0.5 because sqrt is correctly rounded.
        assert_eq!(staleness_factor(3, 0.5), 0.5);
        assert_eq!(staleness_factor(8, 1.0), 1.0 / 9.0);
        let generic = staleness_factor(4, 0.3);
        assert!((generic - 5.0f64.powf(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn staleness_factor_is_nonincreasing() {
        for exponent in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let mut prev = staleness_factor(0, exponent);
            assert_eq!(prev, 1.0);
            for s in 1..30 {
                let cur = staleness_factor(s, exponent);
                assert!(cur <= prev && cur > 0.0);
                prev = cur;
            }
        }
    }

    #[test]
    fn fedasync_full_replacement_and_midpoint() {
        let mut c = cfg(AlgorithmKind::FedAsync);
        c.alpha = 1.0;
        let global = GlobalModel::zeros(2);
        let u = upd(0, vec![4.0, -2.0], 0, 1);
        let out = fedasync_apply(&global, &u, &c).unwrap();
        assert_eq!(out.params, u.params);
        assert_eq!(out.version, 1);

        c.alpha = 0.5;
        let global = GlobalModel::zeros(1);
        let out = fedasync_apply(&global, &upd(0, vec![4.0], 0, 1), &c).unwrap();
        assert_eq!(out.params.values(), &[2.0]);
    }

    // staleness 3 with exponent 0.5 halves alpha: 0.5 * 0.5 * 4 = 1.
    #[test]
    fn fedasync_staleness_discount_oracle() {
        let mut c = cfg(AlgorithmKind::FedAsync);
        c.alpha = 0.5;
        c.staleness_exponent = 0.5;
        let global = GlobalModel { params: ParamVector::zeros(1), version: 3 };
        let out = fedasync_apply(&global, &upd(0, vec![4.0], 0, 1), &c).unwrap();
        assert_eq!(out.params.values(), &[1.0]);
        assert_eq!(out.version, 4);
    }

    #[test]
    fn fedasync_rejects_future_base_version() {
        let c = cfg(AlgorithmKind::FedAsync);
        let global = GlobalModel::zeros(1);
        let err = fedasync_apply(&global, &upd(0, vec![1.0], 5, 1), &c).unwrap_err();
        assert_eq!(err, Error::NegativeStaleness { base_version: 5, version: 0 });
    }

    #[test]
    fn fedbuff_mean_delta_oracle() {
        let mut c = cfg(AlgorithmKind::FedBuff);
        c.alpha = 1.0;
        c.staleness_exponent = 0.0;
        c.buffer_size = 2;
        c.server_lr = 1.0;
        let mut state = ServerState::new(GlobalModel::zeros(1));
        state.note_dispatch(0);
        state.note_dispatch(1);
        assert_eq!(fedbuff_ingest(&mut state, &upd(0, vec![2.0], 0, 1), &c).unwrap(), None);
        assert_eq!(state.fedbuff_fill(), 1);
        let out = fedbuff_ingest(&mut state, &upd(1, vec![4.0], 0, 1), &c).unwrap().unwrap();
        assert_eq!(out.params.values(), &[3.0]);
        assert_eq!(out.version, 1);
        assert_eq!(state.fedbuff_fill(), 0);
    }

    #[test]
    fn fedbuff_buffer_one_applies_immediately() {
        let mut c = cfg(AlgorithmKind::FedBuff);
        c.alpha = 1.0;
        c.staleness_exponent = 0.0;
        c.buffer_size = 1;
        let mut state = ServerState::new(GlobalModel::zeros(1));
        state.note_dispatch(0);
        let out = fedbuff_ingest(&mut state, &upd(0, vec![5.0], 0, 1), &c).unwrap().unwrap();
        assert_eq!(out.params.values(), &[5.0]);
    }

    #[test]
    fn fedbuff_requires_dispatch_snapshot() {
        let c = cfg(AlgorithmKind::FedBuff);
        let mut state = ServerState::new(GlobalModel::zeros(1));
        let err = fedbuff_ingest(&mut state, &upd(9, vec![1.0], 0, 1), &c).unwrap_err();
        assert_eq!(err, Error::MissingDispatch(9));
    }

    #[test]
    fn fedbuff_waits_for_full_buffer() {
        let mut c = cfg(AlgorithmKind::FedBuff);
        c.buffer_size = 3;
        let mut state = ServerState::new(GlobalModel::zeros(1));
        for id in 0..2 {
            state.note_dispatch(id);
            assert!(fedbuff_ingest(&mut state, &upd(id, vec![1.0], 0, 1), &c).unwrap().is_none());
        }
        assert_eq!(state.fedbuff_fill(), 2);
        assert_eq!(state.global().version, 0);
    }

    #[test]
    fn update_speed_ema_oracle() {
        let est = SpeedEstimate::unobserved(0);
        let est = update_speed(&est, 2.0, 0.5).unwrap();
        assert_eq!(est.seconds_per_step, 2.0);
        assert_eq!(est.observations, 1);
        let est = update_speed(&est, 4.0, 0.5).unwrap();
        assert_eq!(est.seconds_per_step, 3.0);
        let est = update_speed(&est, 10.0, 1.0).unwrap();
        assert_eq!(est.seconds_per_step, 10.0);
        assert!(matches!(
            update_speed(&est, 0.0, 0.5),
            Err(Error::NonPositiveObservation(_))
        ));
    }

    fn seeded_state(speeds: &[(usize, f64)]) -> ServerState {
        let mut state = ServerState::new(GlobalModel::zeros(1));
        for &(id, sps) in speeds {
            state.observe_speed(id, sps, 0.5).unwrap();
        }
        state
    }

    // No open groups, sps 2, q_max 20, now 100 -> new group targeting 140.
    #[test]
    fn compass_assign_opens_group_at_q_max() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.q_min = 5;
        c.q_max = 20;
        let mut state = seeded_state(&[(0, 2.0)]);
        let (steps, gid) = compass_assign(&mut state, 0, 100.0, &c).unwrap();
        assert_eq!(steps, 20);
        assert_eq!(state.group(gid).unwrap().target_arrival, Some(140.0));
    }

    // Open group targeting 140, joiner at sps 4 from now 100 -> 10 steps.
    #[test]
    fn compass_assign_joins_reachable_group() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.q_min = 5;
        c.q_max = 20;
        let mut state = seeded_state(&[(0, 2.0), (1, 4.0)]);
        let (_, gid) = compass_assign(&mut state, 0, 100.0, &c).unwrap();
        let (steps, gid2) = compass_assign(&mut state, 1, 100.0, &c).unwrap();
        assert_eq!(steps, 10);
        assert_eq!(gid2, gid);
        assert_eq!(state.group(gid).unwrap().member_ids.len(), 2);
    }

    // Target 104 is 1 step away at sps 4: below q_min, so a new group opens.
    #[test]
    fn compass_assign_rejects_unreachable_group() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.q_min = 5;
        c.q_max = 20;
        let mut state = seeded_state(&[(0, 0.2), (1, 4.0)]);
        let (_, gid) = compass_assign(&mut state, 0, 100.0, &c).unwrap();
        assert_eq!(state.group(gid).unwrap().target_arrival, Some(104.0));
        let (steps, gid2) = compass_assign(&mut state, 1, 100.0, &c).unwrap();
        assert_eq!(steps, 20);
        assert_ne!(gid2, gid);
        assert_eq!(state.group(gid2).unwrap().target_arrival, Some(180.0));
    }

    #[test]
    fn compass_assign_rejects_busy_client() {
        let c = cfg(AlgorithmKind::FedCompass);
        let mut state = seeded_state(&[(0, 2.0)]);
        compass_assign(&mut state, 0, 0.0, &c).unwrap();
        assert_eq!(compass_assign(&mut state, 0, 0.0, &c), Err(Error::ClientBusy(0)));
    }

    #[test]
    fn compass_bootstrap_without_speed_uses_q_max_singleton() {
        let c = cfg(AlgorithmKind::FedCompass);
        let mut state = ServerState::new(GlobalModel::zeros(1));
        let (steps, gid) = compass_assign(&mut state, 7, 50.0, &c).unwrap();
        assert_eq!(steps, c.q_max);
        assert_eq!(state.group(gid).unwrap().target_arrival, None);
        // The bootstrap group is unjoinable even for a slow second client.
        state.observe_speed(8, 1.0, 0.5).unwrap();
        let (_, gid2) = compass_assign(&mut state, 8, 50.0, &c).unwrap();
        assert_ne!(gid2, gid);
    }

    #[test]
    fn compass_singleton_matches_fedasync() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.alpha = 0.5;
        c.staleness_exponent = 0.5;
        let start = GlobalModel { params: ParamVector::zeros(1), version: 3 };
        let mut state = ServerState::new(start.clone());
        let gid = compass_open_singleton(&mut state, 2).unwrap();
        assert_eq!(state.assigned_group(2), Some(gid));
        let u = upd(2, vec![4.0], 0, 9);
        let via_group = compass_ingest(&mut state, &u, 10.0, &c).unwrap().unwrap();
        let via_async = fedasync_apply(&start, &u, &c).unwrap();
        assert_eq!(via_group, via_async);
        assert_eq!(state.assigned_group(2), None);
    }

    #[test]
    fn compass_two_member_group_full_alpha_becomes_mean() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.alpha = 1.0;
        c.staleness_exponent = 0.0;
        c.q_min = 1;
        c.q_max = 100;
        let mut state = seeded_state(&[(0, 1.0), (1, 2.0)]);
        compass_assign(&mut state, 0, 0.0, &c).unwrap();
        compass_assign(&mut state, 1, 0.0, &c).unwrap();
        assert_eq!(state.open_group_count(), 1);
        assert!(compass_ingest(&mut state, &upd(0, vec![2.0], 0, 5), 90.0, &c).unwrap().is_none());
        let out =
            compass_ingest(&mut state, &upd(1, vec![6.0], 0, 5), 95.0, &c).unwrap().unwrap();
        assert_eq!(out.params.values(), &[4.0]);
        assert_eq!(out.version, 1);
    }

    #[test]
    fn compass_deadline_flush_and_late_arrival() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.alpha = 1.0;
        c.staleness_exponent = 0.0;
        c.q_min = 1;
        c.q_max = 100;
        c.group_window_s = 5.0;
        let mut state = seeded_state(&[(0, 1.0), (1, 1.0)]);
        compass_assign(&mut state, 0, 0.0, &c).unwrap(); // target 100
        compass_assign(&mut state, 1, 0.0, &c).unwrap(); // joins
        compass_ingest(&mut state, &upd(0, vec![2.0], 0, 5), 90.0, &c).unwrap();
        // Nothing due at 104.9, group closes at 105.1 with one arrival.
        assert!(compass_flush_due(&mut state, 104.9, &c).unwrap().is_empty());
        let flushed = compass_flush_due(&mut state, 105.1, &c).unwrap();
        assert_eq!(flushed.len(), 1);
        assert_eq!(flushed[0].params.values(), &[2.0]);
        assert_eq!(state.open_group_count(), 0);
        // Flushing again must not re-aggregate the closed group.
        assert!(compass_flush_due(&mut state, 200.0, &c).unwrap().is_empty());
        // The straggler aggregates alone on arrival.
        let late = compass_ingest(&mut state, &upd(1, vec![10.0], 0, 5), 120.0, &c)
            .unwrap()
            .unwrap();
        assert_eq!(late.params.values(), &[10.0]);
        assert_eq!(late.version, 2);
    }

    #[test]
    fn compass_cancel_releases_and_can_trigger() {
        let mut c = cfg(AlgorithmKind::FedCompass);
        c.alpha = 1.0;
        c.staleness_exponent = 0.0;
        c.q_min = 1;
        c.q_max = 100;
        let mut state = seeded_state(&[(0, 1.0), (1, 1.0)]);
        compass_assign(&mut state, 0, 0.0, &c).unwrap();
        compass_assign(&mut state, 1, 0.0, &c).unwrap();
        compass_ingest(&mut state, &upd(0, vec![3.0], 0, 5), 50.0, &c).unwrap();
        // Client 1 drops out; client 0 already arrived, so the group closes.
        let out = compass_cancel(&mut state, 1, &c).unwrap().unwrap();
        assert_eq!(out.params.values(), &[3.0]);
        assert_eq!(state.open_group_count(), 0);
        assert_eq!(state.assigned_group(0), None);
        // Cancelling an unassigned client is a quiet no-op.
        assert_eq!(compass_cancel(&mut state, 1, &c).unwrap(), None);
    }

    // Table-derived oracle: counts from the four-facility scenario with base
    // 100 give [63, 4, 6, 100].
    #[test]
    fn proportional_steps_oracle() {
        let counts = [1_217_627u64, 78_319, 120_565, 1_925_903];
        assert_eq!(select_steps_proportional(&counts, 100), vec![63, 4, 6, 100]);
        assert_eq!(select_steps_proportional(&[5, 5, 5], 12), vec![12, 12, 12]);
        assert_eq!(select_steps_proportional(&[1, 1_000_000], 10), vec![1, 10]);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let mut c = cfg(AlgorithmKind::FedAvg);
        assert!(c.validate().is_ok());
        c.alpha = 0.0;
        assert!(c.validate().is_err());
        c.alpha = 0.5;
        c.q_min = 30;
        c.q_max = 20;
        assert!(c.validate().is_err());
    }
}
