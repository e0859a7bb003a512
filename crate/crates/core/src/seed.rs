//! Seed derivation. A scenario has one master seed; every stochastic site
//! (task generation, partitioning, each client's per-round queue draw and
//! batch shuffling, dropout) gets its own sub-seed derived from the master
//! plus fixed salts. Per-site streams keep traces structurally stable: adding
//! simulated time to a run never perturbs draws that already happened.

/// SplitMix64 step; standard finalizer constants.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the master seed with an arbitrary list of salts into one sub-seed.
pub fn derive(master: u64, salts: &[u64]) -> u64 {
    let mut state = master;
    let mut out = splitmix64(&mut state);
    for &s in salts {
        state ^= s;
        out ^= splitmix64(&mut state);
    }
    out
}

pub const SALT_TASK: u64 = 0x7461_736B; // "task"
pub const SALT_TRAIN_PARTITION: u64 = 0x7061_7274; // "part"
pub const SALT_TEST_PARTITION: u64 = 0x7465_7374; // "test"
pub const SALT_QUEUE: u64 = 0x7175_6575; // "queu"
pub const SALT_BATCHES: u64 = 0x6261_7463; // "batc"
pub const SALT_DROPOUT: u64 = 0x6472_6F70; // "drop"
