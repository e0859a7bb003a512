//! Scenario orchestration: wires the synthetic task, the local trainer, the
//! facility models, and the server aggregation strategies into one
//! deterministic discrete-event run.
//!
//! Each facility is one closed-loop client cycling submit -> queue wait ->
//! train -> upload -> (server ingest, possibly an aggregation) -> download ->
//! next dispatch. All randomness is drawn from streams derived per
//! (purpose, client, round) from the scenario seed, so traces are bit-stable
//! and extending a budget never perturbs the shared prefix.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algorithms::{
    compass_assign, compass_cancel, compass_flush_due, compass_ingest, compass_open_singleton,
    fedasync_apply, fedavg_aggregate, fedbuff_ingest, select_steps_proportional, AlgorithmConfig,
    AlgorithmKind, ClientUpdate, GlobalModel, ServerState,
};
use crate::clock::{EventKind, SimClock, SimEvent, NO_CLIENT};
use crate::error::Error;
use crate::facility::{model_size_mb, FacilityProfile};
use crate::params::ParamVector;
use crate::seed;
use crate::task::{generate_task, partition_noniid, ClientDataset};
use crate::trainer::{evaluate, local_train, model_dim, TrainerConfig};

/// Synthetic task and partition parameters for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub n_features: usize,
    pub n_classes: usize,
    pub noise_sigma: f64,
    pub train_samples_total: usize,
    pub test_samples_total: usize,
    /// Probability mass steered toward each client's dominant labels.
    pub partition_skew: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.n_features < 1 {
            return Err(Error::config("task.n_features must be >= 1"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("task.n_classes must be >= 2"));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::config("task.noise_sigma must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.partition_skew) {
            return Err(Error::config("task.partition_skew must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub algorithm: AlgorithmConfig,
    pub facilities: Vec<FacilityProfile>,
    pub task: TaskSpec,
    /// Per-facility share of the training samples (any positive scale).
    pub partition_weights: Vec<f64>,
    /// Stop dispatching after this many local rounds have been started.
    pub total_rounds_budget: Option<u32>,
    /// Stop the run once simulated time reaches this many seconds.
    pub wallclock_budget_s: Option<f64>,
    /// Step count for the largest client under proportional selection.
    pub base_steps: u32,
    /// Fixed per-facility step counts, bypassing proportional selection.
    pub steps_override: Option<Vec<u32>>,
    pub eval_every_aggregation: bool,
    pub trainer: TrainerConfig,
    /// Per-round probability that a client's job fails before uploading.
    pub dropout_prob: f64,
    /// Keep allocations between rounds: queue wait applies only to each
    /// client's first dispatch.
    pub persistent_allocation: bool,
    /// Parameter count used for transfer sizing; decouples the simulated
    /// payload from the small in-process proxy model.
    pub transfer_param_count: u64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.facilities.is_empty() {
            return Err(Error::config("facilities must be nonempty"));
        }
        for (i, f) in self.facilities.iter().enumerate() {
            f.validate().map_err(|e| Error::config(alloc::format!("facilities[{i}]: {e}")))?;
        }
        if self.partition_weights.len() != self.facilities.len() {
            return Err(Error::config("partition_weights must match facilities in length"));
        }
        if self.total_rounds_budget.is_none() && self.wallclock_budget_s.is_none() {
            return Err(Error::config(
                "at least one of total_rounds_budget, wallclock_budget_s must be set",
            ));
        }
        if let Some(b) = self.total_rounds_budget {
            if b < 1 {
                return Err(Error::config("total_rounds_budget must be >= 1"));
            }
        }
        if let Some(w) = self.wallclock_budget_s {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::config("wallclock_budget_s must be > 0"));
            }
        }
        if self.base_steps < 1 {
            return Err(Error::config("base_steps must be >= 1"));
        }
        if let Some(steps) = &self.steps_override {
            if steps.len() != self.facilities.len() {
                return Err(Error::config("steps_override must match facilities in length"));
            }
            if steps.iter().any(|&s| s < 1) {
                return Err(Error::config("steps_override entries must be >= 1"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(Error::config("dropout_prob must lie in [0, 1)"));
        }
        let n = self.facilities.len();
        if self.algorithm.kind == AlgorithmKind::FedBuff && self.algorithm.buffer_size > n {
            return Err(Error::config(
                "algorithm.buffer_size cannot exceed the number of facilities",
            ));
        }
        if self.task.train_samples_total < n || self.task.test_samples_total < n {
            return Err(Error::config("task sample totals must cover every facility"));
        }
        self.task.validate()?;
        self.algorithm.validate()?;
        self.trainer.validate()
    }
}

/// Stops once the local-rounds budget is exhausted or simulated time reaches
/// the wallclock budget, whichever configured criterion fires first.
pub fn stop_check(rounds_started: u64, now_s: f64, config: &ScenarioConfig) -> bool {
    let rounds_hit =
        config.total_rounds_budget.is_some_and(|b| rounds_started >= b as u64);
    let wall_hit = config.wallclock_budget_s.is_some_and(|w| now_s >= w);
    rounds_hit || wall_hit
}

/// Relative loss reduction of `a` over `b`: 1 - a/b.
pub fn relative_improvement(loss_a: f64, loss_b: f64) -> f64 {
    1.0 - loss_a / loss_b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordEvent {
    LocalRoundDone,
    Aggregation,
}

impl RecordEvent {
    pub fn name(self) -> &'static str {
        match self {
            Self::LocalRoundDone => "local_round_done",
            Self::Aggregation => "aggregation",
        }
    }
}

/// One metrics row: a client finishing a local round or the server
/// aggregating. Optional fields are absent where they do not apply (or when
/// per-record evaluation is disabled).
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub sim_time_s: f64,
    pub event: RecordEvent,
    pub client_id: Option<usize>,
    pub global_version: u64,
    pub global_loss: Option<f64>,
    pub global_acc: Option<f64>,
    pub local_loss: Option<f64>,
    pub local_steps: Option<u32>,
    pub queue_wait_s: Option<f64>,
    pub train_s: Option<f64>,
    pub transfer_s: Option<f64>,
}

/// End-of-run rollup, evaluated once on the union test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// Completed local rounds per facility index.
    pub client_rounds: Vec<u64>,
    /// Local rounds dispatched (completed + failed + still in flight).
    pub rounds_started: u64,
    pub aggregations: u64,
    pub final_version: u64,
    pub final_global_loss: f64,
    pub final_global_acc: f64,
    /// Loss of each client's last local model; None if it never finished.
    pub client_final_local_loss: Vec<Option<f64>>,
    pub last_aggregation_time_s: Option<f64>,
    pub total_sim_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<RoundRecord>,
    /// Full dequeue-ordered event trace.
    pub events: Vec<SimEvent>,
    pub summary: Summary,
}

/// Rollup derived purely from a record list (no models, no evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDigest {
    pub client_rounds: BTreeMap<usize, u64>,
    pub total_local_rounds: u64,
    pub final_global_version: u64,
    pub final_global_loss: Option<f64>,
    pub final_global_acc: Option<f64>,
    pub last_aggregation_time_s: Option<f64>,
    pub last_time_s: f64,
}

/// Digests a record list; errors on an empty log.
pub fn summarize(records: &[RoundRecord]) -> Result<RecordDigest, Error> {
    let last = records.last().ok_or(Error::EmptyLog)?;
    let mut client_rounds = BTreeMap::new();
    let mut total = 0u64;
    let mut last_agg = None;
    for r in records {
        if r.event == RecordEvent::LocalRoundDone {
            if let Some(c) = r.client_id {
                *client_rounds.entry(c).or_insert(0) += 1;
                total += 1;
            }
        } else {
            last_agg = Some(r.sim_time_s);
        }
    }
    Ok(RecordDigest {
        client_rounds,
        total_local_rounds: total,
        final_global_version: last.global_version,
        final_global_loss: last.global_loss,
        final_global_acc: last.global_acc,
        last_aggregation_time_s: last_agg,
        last_time_s: last.sim_time_s,
    })
}

/// Everything known about one in-flight local round.
#[derive(Debug, Clone)]
struct Dispatch {
    /// Per-client round index (seed derivation key).
    client_round: u64,
    steps: u32,
    base_version: u64,
    base_params: ParamVector,
    queue_wait_s: f64,
    train_s: f64,
    transfer_s: f64,
    will_fail: bool,
    /// Trained parameters, filled in at training completion.
    result: Option<ParamVector>,
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    clock: SimClock,
    server: ServerState,
    train_data: Vec<ClientDataset>,
    test_data: Vec<ClientDataset>,
    /// Planned steps per facility when the scheduler does not assign them.
    steps_plan: Vec<u32>,
    size_mb: f64,
    in_flight: BTreeMap<usize, Dispatch>,
    /// Model each client will train from next, written when its download is
    /// scheduled and consumed at dispatch.
    downloads: BTreeMap<usize, GlobalModel>,
    /// Synchronous-barrier buffer (FedAvg only).
    pending_sync: Vec<ClientUpdate>,
    /// Uploads still expected in the current synchronous round.
    sync_expected: usize,
    /// Dispatch slots grantable in the current synchronous round.
    sync_slots: usize,
    /// Clients whose job failed this synchronous round.
    sync_failed: Vec<usize>,
    /// Clients that uploaded into a still-open group and are waiting for its
    /// aggregation before the next download.
    compass_waiting: BTreeSet<usize>,
    client_round_counter: Vec<u64>,
    client_rounds_done: Vec<u64>,
    rounds_started: u64,
    aggregations: u64,
    last_aggregation_time_s: Option<f64>,
    last_time_s: f64,
    records: Vec<RoundRecord>,
    trace: Vec<SimEvent>,
    local_models: BTreeMap<usize, ParamVector>,
    eval_cache: BTreeMap<u64, (f64, f64)>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self, Error> {
        cfg.validate()?;
        let task = generate_task(
            cfg.task.n_features,
            cfg.task.n_classes,
            cfg.task.noise_sigma,
            seed::derive(cfg.seed, &[seed::SALT_TASK]),
        )?;
        let train_data = partition_noniid(
            &task,
            &cfg.partition_weights,
            cfg.task.train_samples_total,
            cfg.task.partition_skew,
            seed::derive(cfg.seed, &[seed::SALT_TRAIN_PARTITION]),
        )?;
        let test_data = partition_noniid(
            &task,
            &cfg.partition_weights,
            cfg.task.test_samples_total,
            cfg.task.partition_skew,
            seed::derive(cfg.seed, &[seed::SALT_TEST_PARTITION]),
        )?;
        let counts: Vec<u64> = train_data.iter().map(|d| d.sample_count() as u64).collect();
        let steps_plan = match &cfg.steps_override {
            Some(s) => s.clone(),
            None => select_steps_proportional(&counts, cfg.base_steps),
        };
        let dim = model_dim(cfg.task.n_features, cfg.task.n_classes);
        let mut server = ServerState::new(GlobalModel::zeros(dim));
        let size_mb = model_size_mb(cfg.transfer_param_count);
        for (c, f) in cfg.facilities.iter().enumerate() {
            // Expected non-training seconds per round, used by the group
            // scheduler when sizing step assignments.
            let queue_part = if f.reservation || cfg.persistent_allocation {
                0.0
            } else {
                f.queue.median_s * f.queue.median_multiplier(f.nodes)
            };
            server.set_client_overhead(c, f.init_overhead_s + queue_part + f.transfer_duration(size_mb));
        }
        let n = cfg.facilities.len();
        Ok(Self {
            cfg,
            clock: SimClock::new(),
            server,
            train_data,
            test_data,
            steps_plan,
            size_mb,
            in_flight: BTreeMap::new(),
            downloads: BTreeMap::new(),
            pending_sync: Vec::new(),
            sync_expected: 0,
            sync_slots: 0,
            sync_failed: Vec::new(),
            compass_waiting: BTreeSet::new(),
            client_round_counter: alloc::vec![0; n],
            client_rounds_done: alloc::vec![0; n],
            rounds_started: 0,
            aggregations: 0,
            last_aggregation_time_s: None,
            last_time_s: 0.0,
            records: Vec::new(),
            trace: Vec::new(),
            local_models: BTreeMap::new(),
            eval_cache: BTreeMap::new(),
        })
    }

    fn n_clients(&self) -> usize {
        self.cfg.facilities.len()
    }

    fn rounds_exhausted(&self) -> bool {
        self.cfg
            .total_rounds_budget
            .is_some_and(|b| self.rounds_started >= b as u64)
    }

    fn remaining_budget(&self) -> u64 {
        match self.cfg.total_rounds_budget {
            Some(b) => (b as u64).saturating_sub(self.rounds_started),
            None => u64::MAX,
        }
    }

    fn is_sync(&self) -> bool {
        self.cfg.algorithm.kind == AlgorithmKind::FedAvg
    }

    /// Starts one local round for an idle client: samples its queue wait and
    /// failure flag, fixes its step count (scheduler-assigned for the group
    /// strategy), and schedules the submit event.
    fn dispatch_client(&mut self, client_id: usize) -> Result<(), Error> {
        if self.in_flight.contains_key(&client_id) {
            return Err(Error::ClientBusy(client_id));
        }
        let round = self.client_round_counter[client_id];
        self.client_round_counter[client_id] += 1;
        self.rounds_started += 1;

        let profile = &self.cfg.facilities[client_id];
        let queue_wait_s = if self.cfg.persistent_allocation && round > 0 {
            0.0
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                self.cfg.seed,
                &[seed::SALT_QUEUE, client_id as u64, round],
            ));
            profile.sample_queue_wait(&mut rng)
        };
        let will_fail = if self.cfg.dropout_prob > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                self.cfg.seed,
                &[seed::SALT_DROPOUT, client_id as u64, round],
            ));
            rng.random::<f64>() < self.cfg.dropout_prob
        } else {
            false
        };

        let algo = &self.cfg.algorithm;
        let steps = if algo.kind == AlgorithmKind::FedCompass {
            if self.server.speed(client_id).is_some() {
                let (steps, _group) =
                    compass_assign(&mut self.server, client_id, self.clock.now_s(), algo)?;
                steps
            } else {
                // Bootstrap round: no timing signal yet, so use the sample
                // proportional plan in an unjoinable single-member group.
                compass_open_singleton(&mut self.server, client_id)?;
                self.steps_plan[client_id]
            }
        } else {
            self.steps_plan[client_id]
        };

        let base = self
            .downloads
            .remove(&client_id)
            .unwrap_or_else(|| self.server.global().clone());
        self.server.note_dispatch_base(client_id, base.params.clone());

        let dispatch = Dispatch {
            client_round: round,
            steps,
            base_version: base.version,
            base_params: base.params,
            queue_wait_s,
            train_s: profile.training_duration(steps),
            transfer_s: profile.transfer_duration(self.size_mb),
            will_fail,
            result: None,
        };
        self.in_flight.insert(client_id, dispatch);
        self.clock.schedule(0.0, EventKind::JobSubmitted, client_id, round)
    }

    fn handle(&mut self, event: SimEvent) -> Result<(), Error> {
        match event.kind {
            EventKind::JobSubmitted => {
                let wait = self.in_flight[&event.client_id].queue_wait_s;
                self.clock.schedule(wait, EventKind::JobStarted, event.client_id, event.round)
            }
            EventKind::JobStarted => {
                let train = self.in_flight[&event.client_id].train_s;
                self.clock.schedule(train, EventKind::TrainingDone, event.client_id, event.round)
            }
            EventKind::TrainingDone => self.on_training_done(event),
            EventKind::UploadDone => self.on_upload_done(event),
            EventKind::DownloadDone => self.on_download_done(event),
            // Aggregations are recorded when they happen; the event exists
            // for the trace.
            EventKind::Aggregation => Ok(()),
        }
    }

    fn on_training_done(&mut self, event: SimEvent) -> Result<(), Error> {
        let client_id = event.client_id;
        let dispatch = self.in_flight.get(&client_id).ok_or(Error::MissingDispatch(client_id))?;
        if dispatch.will_fail {
            return self.on_job_failed(client_id);
        }
        let (steps, train_s, round) =
            (dispatch.steps, dispatch.train_s, dispatch.client_round);
        let trained = local_train(
            &dispatch.base_params,
            &self.train_data[client_id],
            steps,
            &self.cfg.trainer,
            seed::derive(self.cfg.seed, &[seed::SALT_BATCHES, client_id as u64, round]),
        )?;

        let profile = &self.cfg.facilities[client_id];
        let observed_sps = (train_s - profile.init_overhead_s) / steps as f64;
        self.server.observe_speed(client_id, observed_sps, self.cfg.algorithm.speed_smoothing)?;

        let (global_loss, global_acc) = self.eval_global_now()?;
        let local_loss = if self.cfg.eval_every_aggregation {
            Some(evaluate(&trained, &self.test_data)?.0)
        } else {
            None
        };
        let dispatch = self.in_flight.get_mut(&client_id).expect("checked above");
        let record = RoundRecord {
            sim_time_s: event.time_s,
            event: RecordEvent::LocalRoundDone,
            client_id: Some(client_id),
            global_version: self.server.global().version,
            global_loss,
            global_acc,
            local_loss,
            local_steps: Some(steps),
            queue_wait_s: Some(dispatch.queue_wait_s),
            train_s: Some(dispatch.train_s),
            transfer_s: Some(dispatch.transfer_s),
        };
        dispatch.result = Some(trained.clone());
        self.records.push(record);
        self.client_rounds_done[client_id] += 1;
        self.local_models.insert(client_id, trained);
        let transfer = self.in_flight[&client_id].transfer_s;
        self.clock.schedule(transfer, EventKind::UploadDone, client_id, event.round)
    }

    /// A failed job consumes its budget slot but produces no record or
    /// upload; the client re-enters immediately where the strategy allows.
    fn on_job_failed(&mut self, client_id: usize) -> Result<(), Error> {
        self.in_flight.remove(&client_id);
        match self.cfg.algorithm.kind {
            AlgorithmKind::FedAvg => {
                self.sync_expected -= 1;
                self.sync_failed.push(client_id);
                if self.sync_expected == 0 {
                    // Every participant failed: restart the round directly.
                    let grant = self.remaining_budget().min(self.n_clients() as u64) as usize;
                    let failed = core::mem::take(&mut self.sync_failed);
                    self.sync_slots = 0;
                    self.sync_expected = failed.len().min(grant);
                    for c in failed.into_iter().take(grant) {
                        self.dispatch_client(c)?;
                    }
                } else if self.pending_sync.len() == self.sync_expected {
                    self.finish_sync_round()?;
                }
                Ok(())
            }
            AlgorithmKind::FedCompass => {
                if let Some(model) = compass_cancel(&mut self.server, client_id, &self.cfg.algorithm)? {
                    self.record_aggregation(&model)?;
                }
                self.release_waiting_clients()?;
                if !self.rounds_exhausted() {
                    self.dispatch_client(client_id)?;
                }
                Ok(())
            }
            _ => {
                if !self.rounds_exhausted() {
                    self.dispatch_client(client_id)?;
                }
                Ok(())
            }
        }
    }

    fn on_upload_done(&mut self, event: SimEvent) -> Result<(), Error> {
        let client_id = event.client_id;
        let dispatch =
            self.in_flight.remove(&client_id).ok_or(Error::MissingDispatch(client_id))?;
        let update = ClientUpdate {
            client_id,
            params: dispatch.result.clone().ok_or(Error::MissingDispatch(client_id))?,
            base_version: dispatch.base_version,
            sample_count: self.train_data[client_id].sample_count() as u64,
            local_steps: dispatch.steps,
            completion_time_s: event.time_s,
        };
        match self.cfg.algorithm.kind {
            AlgorithmKind::FedAvg => {
                self.pending_sync.push(update);
                if self.pending_sync.len() == self.sync_expected {
                    self.finish_sync_round()?;
                }
                Ok(())
            }
            AlgorithmKind::FedAsync => {
                let new = fedasync_apply(self.server.global(), &update, &self.cfg.algorithm)?;
                self.server.set_global(new.clone());
                self.record_aggregation(&new)?;
                self.schedule_download(client_id)
            }
            AlgorithmKind::FedBuff => {
                if let Some(model) =
                    fedbuff_ingest(&mut self.server, &update, &self.cfg.algorithm)?
                {
                    self.record_aggregation(&model)?;
                }
                self.schedule_download(client_id)
            }
            AlgorithmKind::FedCompass => {
                if let Some(model) =
                    compass_ingest(&mut self.server, &update, event.time_s, &self.cfg.algorithm)?
                {
                    self.record_aggregation(&model)?;
                }
                // Grouped clients receive the new model together once their
                // group aggregates; until then the download is withheld.
                self.compass_waiting.insert(client_id);
                self.release_waiting_clients()
            }
        }
    }

    /// Sends downloads to waiting clients whose group has closed (a closed
    /// group drops its members' assignments).
    fn release_waiting_clients(&mut self) -> Result<(), Error> {
        let ready: Vec<usize> = self
            .compass_waiting
            .iter()
            .copied()
            .filter(|c| self.server.assigned_group(*c).is_none())
            .collect();
        for c in ready {
            self.compass_waiting.remove(&c);
            self.schedule_download(c)?;
        }
        Ok(())
    }

    /// Synchronous barrier release: aggregate, grant the next round's
    /// dispatch slots, and send everyone (uploaders and dropouts) the new
    /// model.
    fn finish_sync_round(&mut self) -> Result<(), Error> {
        let updates = core::mem::take(&mut self.pending_sync);
        debug_assert!(!updates.is_empty());
        let params = fedavg_aggregate(&updates)?;
        let model = self.server.commit_aggregate(params);
        self.record_aggregation(&model)?;
        let mut recipients: Vec<usize> = updates.iter().map(|u| u.client_id).collect();
        recipients.append(&mut self.sync_failed);
        recipients.sort_unstable();
        let grant = self.remaining_budget().min(self.n_clients() as u64) as usize;
        self.sync_slots = grant;
        self.sync_expected = grant;
        for c in recipients {
            self.schedule_download(c)?;
        }
        Ok(())
    }

    /// Sends the current global model to the client; the payload is pinned
    /// now so a concurrent aggregation cannot rewrite history mid-download.
    fn schedule_download(&mut self, client_id: usize) -> Result<(), Error> {
        self.downloads.insert(client_id, self.server.global().clone());
        let transfer = self.cfg.facilities[client_id].transfer_duration(self.size_mb);
        let round = self.client_round_counter[client_id];
        self.clock.schedule(transfer, EventKind::DownloadDone, client_id, round)
    }

    fn on_download_done(&mut self, event: SimEvent) -> Result<(), Error> {
        let client_id = event.client_id;
        if self.is_sync() {
            if self.sync_slots > 0 {
                self.sync_slots -= 1;
                self.dispatch_client(client_id)?;
            }
        } else if !self.rounds_exhausted() {
            self.dispatch_client(client_id)?;
        }
        Ok(())
    }

    fn record_aggregation(&mut self, model: &GlobalModel) -> Result<(), Error> {
        let now = self.clock.now_s();
        let (global_loss, global_acc) = Self::eval_cached(
            &mut self.eval_cache,
            &self.test_data,
            self.cfg.eval_every_aggregation,
            model,
        )?;
        self.records.push(RoundRecord {
            sim_time_s: now,
            event: RecordEvent::Aggregation,
            client_id: None,
            global_version: model.version,
            global_loss,
            global_acc,
            local_loss: None,
            local_steps: None,
            queue_wait_s: None,
            train_s: None,
            transfer_s: None,
        });
        self.aggregations += 1;
        self.last_aggregation_time_s = Some(now);
        self.clock.schedule(0.0, EventKind::Aggregation, NO_CLIENT, model.version)
    }

    fn eval_global_now(&mut self) -> Result<(Option<f64>, Option<f64>), Error> {
        let model = self.server.global().clone();
        Self::eval_cached(
            &mut self.eval_cache,
            &self.test_data,
            self.cfg.eval_every_aggregation,
            &model,
        )
    }

    fn eval_cached(
        cache: &mut BTreeMap<u64, (f64, f64)>,
        test_data: &[ClientDataset],
        enabled: bool,
        model: &GlobalModel,
    ) -> Result<(Option<f64>, Option<f64>), Error> {
        if !enabled {
            return Ok((None, None));
        }
        if let Some(&(loss, acc)) = cache.get(&model.version) {
            return Ok((Some(loss), Some(acc)));
        }
        let (loss, acc) = evaluate(&model.params, test_data)?;
        cache.insert(model.version, (loss, acc));
        Ok((Some(loss), Some(acc)))
    }

    fn run(mut self) -> Result<MetricsLog, Error> {
        // Initial dispatches: synchronous mode caps the first round's size
        // at the budget; asynchronous clients each start once while budget
        // remains.
        let n = self.n_clients();
        if self.is_sync() {
            let grant = self.remaining_budget().min(n as u64) as usize;
            self.sync_expected = grant;
            self.sync_slots = 0;
            for c in 0..grant {
                self.dispatch_client(c)?;
            }
        } else {
            for c in 0..n {
                if self.rounds_exhausted() {
                    break;
                }
                self.dispatch_client(c)?;
            }
        }

        while let Some(t) = self.clock.peek_time() {
            if self.cfg.wallclock_budget_s.is_some_and(|w| t >= w) {
                break;
            }
            let event = self.clock.next_event()?;
            if self.cfg.algorithm.kind == AlgorithmKind::FedCompass {
                let flushed =
                    compass_flush_due(&mut self.server, event.time_s, &self.cfg.algorithm)?;
                for model in flushed {
                    self.record_aggregation(&model)?;
                }
                self.release_waiting_clients()?;
            }
            self.trace.push(event);
            self.handle(event)?;
            self.last_time_s = event.time_s;
        }

        let (final_global_loss, final_global_acc) =
            evaluate(&self.server.global().params, &self.test_data)?;
        let mut client_final_local_loss = Vec::with_capacity(n);
        for c in 0..n {
            client_final_local_loss.push(match self.local_models.get(&c) {
                Some(p) => Some(evaluate(p, &self.test_data)?.0),
                None => None,
            });
        }
        let summary = Summary {
            client_rounds: self.client_rounds_done,
            rounds_started: self.rounds_started,
            aggregations: self.aggregations,
            final_version: self.server.global().version,
            final_global_loss,
            final_global_acc,
            client_final_local_loss,
            last_aggregation_time_s: self.last_aggregation_time_s,
            total_sim_time_s: self.last_time_s,
        };
        Ok(MetricsLog { records: self.records, events: self.trace, summary })
    }
}

/// Executes one full scenario to its stopping criterion. Deterministic: the
/// same config (seed included) yields a bit-identical [`MetricsLog`].
pub fn run_scenario(config: &ScenarioConfig) -> Result<MetricsLog, Error> {
    Runner::new(config)?.run()
}
