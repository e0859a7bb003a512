//! Facility performance models: strong-scaling throughput interpolated from
//! calibration points, lognormal batch-queue waits, training round duration,
//! and saturating-bandwidth transfer costs.
//!
//! All byte accounting uses decimal megabytes (10^6 bytes).

use alloc::string::String;
use alloc::vec::Vec;

// Needed only when no crate in the build graph links std; any std build
// (tests, downstream binaries) sees std's inherent f64 methods instead.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Error;

/// Batch queue wait model: lognormal parameterized by its median, with a
/// node-count multiplier table shifting the median for larger allocations.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    /// Median wait for the smallest calibrated allocation.
    pub median_s: f64,
    /// Lognormal shape; 0 collapses to the deterministic median.
    pub sigma: f64,
    /// (nodes, median multiplier) pairs, strictly increasing in nodes.
    pub node_scaling: Vec<(u32, f64)>,
}

impl QueueModel {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.median_s > 0.0) || !self.median_s.is_finite() {
            return Err(Error::config("queue.median_s must be > 0"));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("queue.sigma must be >= 0"));
        }
        validate_points(&self.node_scaling, "queue.node_scaling")?;
        let mut prev = 0.0;
        for &(_, m) in &self.node_scaling {
            if m < prev {
                return Err(Error::config("queue.node_scaling multipliers must be nondecreasing"));
            }
            prev = m;
        }
        Ok(())
    }

    /// Median multiplier at the given allocation size: log-log interpolation
    /// over the table, clamped flat at both ends; 1 when the table is empty.
    pub fn median_multiplier(&self, nodes: u32) -> f64 {
        if self.node_scaling.is_empty() {
            return 1.0;
        }
        interp_loglog(&self.node_scaling, nodes, BelowFirst::Flat)
    }

    /// Draws one wait from the lognormal with median scaled for `nodes`.
    pub fn sample_wait<R: Rng + ?Sized>(&self, nodes: u32, rng: &mut R) -> f64 {
        let median = self.median_s * self.median_multiplier(nodes);
        if self.sigma == 0.0 {
            return median;
        }
        let z: f64 = rng.sample(StandardNormal);
        median * (self.sigma * z).exp()
    }
}

/// Static description of one HPC site participating in a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct FacilityProfile {
    pub name: String,
    /// Nodes per training job.
    pub nodes: u32,
    pub gpus_per_node: u32,
    /// Per-GPU micro batch size.
    pub micro_batch: u32,
    /// (nodes, samples per second) calibration pairs, strictly increasing.
    pub throughput_points: Vec<(u32, f64)>,
    /// Fixed startup cost per training round (initialization, checkpoint).
    pub init_overhead_s: f64,
    pub queue: QueueModel,
    /// Round-trip latency to the aggregation server.
    pub rtt_ms: f64,
    /// Large-transfer bandwidth ceiling toward this site.
    pub bandwidth_asymptote_mb_s: f64,
    /// Transfer size at which effective bandwidth reaches half the ceiling.
    pub bandwidth_halfsize_mb: f64,
    /// Co-scheduled reservation: queue waits are exactly zero.
    pub reservation: bool,
}

impl FacilityProfile {
    pub fn validate(&self) -> Result<(), Error> {
        if self.name.is_empty() {
            return Err(Error::config("facility.name must be nonempty"));
        }
        if self.nodes < 1 || self.gpus_per_node < 1 || self.micro_batch < 1 {
            return Err(Error::config("facility nodes, gpus_per_node, micro_batch must be >= 1"));
        }
        if self.throughput_points.is_empty() {
            return Err(Error::config("facility.throughput_points must be nonempty"));
        }
        validate_points(&self.throughput_points, "facility.throughput_points")?;
        if !(self.init_overhead_s >= 0.0) || !self.init_overhead_s.is_finite() {
            return Err(Error::config("facility.init_overhead_s must be >= 0"));
        }
        if !(self.rtt_ms >= 0.0) || !self.rtt_ms.is_finite() {
            return Err(Error::config("facility.rtt_ms must be >= 0"));
        }
        if !(self.bandwidth_asymptote_mb_s > 0.0) || !self.bandwidth_asymptote_mb_s.is_finite() {
            return Err(Error::config("facility.bandwidth_asymptote_mb_s must be > 0"));
        }
        if !(self.bandwidth_halfsize_mb > 0.0) || !self.bandwidth_halfsize_mb.is_finite() {
            return Err(Error::config("facility.bandwidth_halfsize_mb must be > 0"));
        }
        self.queue.validate()
    }

    /// Samples consumed per local step across the whole allocation.
    pub fn effective_batch(&self) -> u64 {
        self.nodes as u64 * self.gpus_per_node as u64 * self.micro_batch as u64
    }

    /// Samples per second at the given node count: log-log piecewise linear
    /// across the calibration points, exact at the points themselves, flat
    /// beyond the last point, and scaled linearly below the first.
    pub fn throughput(&self, nodes: u32) -> f64 {
        interp_loglog(&self.throughput_points, nodes, BelowFirst::Linear)
    }

    /// Wall seconds for one local training round of `local_steps` steps at
    /// this site's configured allocation.
    pub fn training_duration(&self, local_steps: u32) -> f64 {
        let samples = local_steps as f64 * self.effective_batch() as f64;
        self.init_overhead_s + samples / self.throughput(self.nodes)
    }

    /// Queue wait for this site's allocation; exactly zero under reservation.
    pub fn sample_queue_wait<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.reservation {
            return 0.0;
        }
        self.queue.sample_wait(self.nodes, rng)
    }

    /// Effective transfer bandwidth at a given payload size: small payloads
    /// pay proportionally more connection overhead, approaching the
    /// asymptote as size grows.
    pub fn effective_bandwidth_mb_s(&self, size_mb: f64) -> f64 {
        self.bandwidth_asymptote_mb_s * size_mb / (size_mb + self.bandwidth_halfsize_mb)
    }

    /// Seconds to move `size_mb` between server and this site (symmetric).
    pub fn transfer_duration(&self, size_mb: f64) -> f64 {
        let latency = self.rtt_ms / 1000.0;
        if size_mb == 0.0 {
            return latency;
        }
        latency + size_mb / self.effective_bandwidth_mb_s(size_mb)
    }
}

/// Checkpoint footprint of a parameter count in decimal MB, two bytes per
/// parameter (16-bit storage).
pub fn model_size_mb(param_count: u64) -> f64 {
    param_count as f64 * 2.0 / 1e6
}

enum BelowFirst {
    /// Scale the first point's value linearly in n (strong-scaling guess).
    Linear,
    /// Hold the first point's value flat.
    Flat,
}

fn validate_points(points: &[(u32, f64)], what: &str) -> Result<(), Error> {
    let mut prev_n = 0u32;
    for &(n, v) in points {
        if n <= prev_n {
            return Err(Error::config(alloc::format!("{what}: nodes must increase strictly")));
        }
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::config(alloc::format!("{what}: values must be positive")));
        }
        prev_n = n;
    }
    Ok(())
}

/// Piecewise linear interpolation in (ln n, ln v) space. Queries landing on a
/// calibration point return its value exactly; queries past the last point
/// return the plateau value.
fn interp_loglog(points: &[(u32, f64)], n: u32, below: BelowFirst) -> f64 {
    debug_assert!(!points.is_empty() && n >= 1);
    let (first_n, first_v) = points[0];
    if n <= first_n {
        if n == first_n {
            return first_v;
        }
        return match below {
            BelowFirst::Linear => first_v * n as f64 / first_n as f64,
            BelowFirst::Flat => first_v,
        };
    }
    let (last_n, last_v) = points[points.len() - 1];
    if n >= last_n {
        return last_v;
    }
    let mut hi = 1;
    while points[hi].0 < n {
        hi += 1;
    }
    let (n1, v1) = points[hi];
    if n == n1 {
        return v1;
    }
    let (n0, v0) = points[hi - 1];
    let t = ((n as f64).ln() - (n0 as f64).ln()) / ((n1 as f64).ln() - (n0 as f64).ln());
    (v0.ln() + t * (v1.ln() - v0.ln())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn profile(points: Vec<(u32, f64)>) -> FacilityProfile {
        FacilityProfile {
            name: "site".to_string(),
            nodes: 64,
            gpus_per_node: 4,
            micro_batch: 6,
            throughput_points: points,
            init_overhead_s: 0.0,
            queue: QueueModel { median_s: 100.0, sigma: 0.0, node_scaling: vec![] },
            rtt_ms: 0.0,
            bandwidth_asymptote_mb_s: 400.0,
            bandwidth_halfsize_mb: 250.0,
            reservation: false,
        }
    }

    #[test]
    fn throughput_exact_at_calibration_points() {
        let p = profile(vec![(1, 33.0), (64, 2100.0)]);
        assert_eq!(p.throughput(64), 2100.0);
        assert_eq!(p.throughput(1), 33.0);
        let single = profile(vec![(1, 10.0)]);
        assert_eq!(single.throughput(1), 10.0);
        assert_eq!(single.throughput(9), 10.0);
    }

    // A pure power law interpolates exactly: (1,10),(4,40) is linear, so the
    // query at 2 must give 20.
    #[test]
    fn throughput_loglog_interpolation() {
        let p = profile(vec![(1, 10.0), (4, 40.0)]);
        assert!((p.throughput(2) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn throughput_plateaus_and_scales_down() {
        let p = profile(vec![(8, 60.0), (64, 250.0)]);
        assert_eq!(p.throughput(100), 250.0);
        // Below the first calibrated size, scale the first point linearly.
        assert_eq!(p.throughput(4), 30.0);
        assert_eq!(p.throughput(2), 15.0);
    }

    #[test]
    fn throughput_monotone_for_monotone_points() {
        let p = profile(vec![(1, 12.0), (8, 60.0), (16, 105.0), (32, 190.0), (64, 250.0)]);
        let mut prev = 0.0;
        for n in 1..=80 {
            let t = p.throughput(n);
            assert!(t >= prev, "throughput dipped at {n}");
            prev = t;
        }
    }

    // 100 steps * 1536 effective batch / 1200 samples/s = exactly 128 s.
    #[test]
    fn training_duration_oracle() {
        let p = profile(vec![(64, 1200.0)]);
        assert_eq!(p.effective_batch(), 1536);
        assert_eq!(p.training_duration(100), 128.0);
        assert_eq!(p.training_duration(200), 256.0);
    }

    // Overhead 300 plus 2100 s of compute reproduces a 40 minute round.
    #[test]
    fn training_duration_includes_overhead() {
        let mut p = profile(vec![(64, 1536.0)]);
        p.init_overhead_s = 300.0;
        // 2100 steps * 1536 / 1536 = 2100 s of compute.
        assert_eq!(p.training_duration(2100), 2400.0);
    }

    #[test]
    fn queue_wait_degenerate_and_reserved() {
        let mut p = profile(vec![(1, 10.0)]);
        p.queue = QueueModel {
            median_s: 240.0,
            sigma: 0.0,
            node_scaling: vec![(2, 2.0), (64, 1500.0)],
        };
        p.nodes = 64;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.sample_queue_wait(&mut rng), 360_000.0);
        p.nodes = 2;
        assert_eq!(p.sample_queue_wait(&mut rng), 480.0);
        // Below the first table entry the multiplier clamps flat.
        p.nodes = 1;
        assert_eq!(p.sample_queue_wait(&mut rng), 480.0);
        p.reservation = true;
        p.queue.sigma = 1.5;
        for _ in 0..8 {
            assert_eq!(p.sample_queue_wait(&mut rng), 0.0);
        }
    }

    #[test]
    fn queue_wait_is_deterministic_per_seed() {
        let q = QueueModel { median_s: 100.0, sigma: 0.9, node_scaling: vec![] };
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..16 {
            let x = q.sample_wait(4, &mut a);
            let y = q.sample_wait(4, &mut b);
            assert_eq!(x, y);
            assert!(x > 0.0);
        }
    }

    #[test]
    fn model_size_exact_values() {
        assert_eq!(model_size_mb(125_000_000), 250.0);
        assert_eq!(model_size_mb(13_000_000_000), 26_000.0);
        assert_eq!(model_size_mb(0), 0.0);
    }

    #[test]
    fn transfer_zero_size_is_latency_only() {
        let mut p = profile(vec![(1, 10.0)]);
        p.rtt_ms = 45.205;
        assert!((p.transfer_duration(0.0) - 0.045205).abs() < 1e-15);
    }

    // asymptote 400, halfsize 250 at 250 MB: bandwidth 200 MB/s, 1.25 s.
    #[test]
    fn transfer_saturating_bandwidth_oracle() {
        let p = profile(vec![(1, 10.0)]);
        assert_eq!(p.effective_bandwidth_mb_s(250.0), 200.0);
        assert_eq!(p.transfer_duration(250.0), 1.25);
    }

    #[test]
    fn transfer_monotone_and_bandwidth_improves() {
        let p = profile(vec![(1, 10.0)]);
        let mut prev_dur = 0.0;
        let mut prev_bw = 0.0;
        for i in 1..200 {
            let size = i as f64 * 50.0;
            let d = p.transfer_duration(size);
            let bw = size / d;
            assert!(d > prev_dur);
            assert!(bw >= prev_bw);
            prev_dur = d;
            prev_bw = bw;
        }
        assert!(p.effective_bandwidth_mb_s(1e9) < p.bandwidth_asymptote_mb_s);
    }

    #[test]
    fn validation_rejects_malformed_profiles() {
        let mut p = profile(vec![]);
        assert!(p.validate().is_err());
        p.throughput_points = vec![(4, 10.0), (4, 20.0)];
        assert!(p.validate().is_err());
        p.throughput_points = vec![(1, 10.0), (4, -20.0)];
        assert!(p.validate().is_err());
        p.throughput_points = vec![(1, 10.0)];
        assert!(p.validate().is_ok());
        p.micro_batch = 0;
        assert!(p.validate().is_err());
        p.micro_batch = 6;
        p.queue.median_s = 0.0;
        assert!(p.validate().is_err());
    }
}
