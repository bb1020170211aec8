//! Ready-made synthetic routes used by the benchmark harness and tests.

use crate::providers::synthetic::{NoiseModel, Segment, SyntheticProfile};

/// Background noise with no trace of the true place: the technique is blind.
pub const BLIND: NoiseModel = NoiseModel {
    background: 0.1,
    truth_residual: 0.0,
};

/// Decoy spikes that leave the true place well inside the top candidates.
pub const SPIKES: NoiseModel = NoiseModel {
    background: 0.1,
    truth_residual: 0.6,
};

fn profile(id: &str, frames: usize, seed: u64, segments: Vec<Segment>) -> SyntheticProfile {
    SyntheticProfile {
        id: id.to_string(),
        references: frames,
        queries: frames,
        seed,
        scale: 1.0,
        offset: 0.0,
        segments,
    }
}

/// One technique with a constant decoy-spike rate.
pub fn spiked(id: &str, frames: usize, spike_rate: f64, seed: u64) -> SyntheticProfile {
    profile(
        id,
        frames,
        seed,
        vec![Segment {
            start: 0,
            end: frames,
            competence: 1.0 - spike_rate,
            noise: SPIKES,
        }],
    )
}

/// Decoy on top with the true place kept in the candidate list, but without
/// the headroom of [`SPIKES`].
pub const CONFUSED: NoiseModel = NoiseModel {
    background: 0.1,
    truth_residual: 0.5,
};

/// Low background: when this technique is right its peak stands out further
/// after normalization than one over [`BLIND`]-level background.
pub const SHARP: NoiseModel = NoiseModel {
    background: 0.02,
    truth_residual: 0.0,
};

fn seg(start: usize, end: usize, competence: f64, noise: NoiseModel) -> Segment {
    Segment {
        start,
        end,
        competence,
        noise,
    }
}

/// Two techniques with disjoint competence: `A` is right before `switch` and
/// blind after it, `B` the reverse. `B` reports on a different scale.
pub fn disjoint(frames: usize, switch: usize, seed: u64) -> Vec<SyntheticProfile> {
    let a = profile(
        "A",
        frames,
        seed,
        vec![seg(0, switch, 1.0, BLIND), seg(switch, frames, 0.0, BLIND)],
    );
    let mut b = profile(
        "B",
        frames,
        seed.wrapping_add(1),
        vec![seg(0, switch, 0.0, BLIND), seg(switch, frames, 1.0, BLIND)],
    );
    b.scale = 40.0;
    b.offset = -3.0;
    vec![a, b]
}

/// Hard condition change at `swap`. `A` is right before it and confused after
/// it (wrong argmax, true place still among the top scores). `B` is blind
/// before it and sharply right after it.
pub fn swap(frames: usize, swap: usize, seed: u64) -> Vec<SyntheticProfile> {
    let a = profile(
        "A",
        frames,
        seed,
        vec![seg(0, swap, 1.0, BLIND), seg(swap, frames, 0.0, CONFUSED)],
    );
    let mut b = profile(
        "B",
        frames,
        seed.wrapping_add(1),
        vec![seg(0, swap, 0.0, SHARP), seg(swap, frames, 1.0, SHARP)],
    );
    b.scale = 40.0;
    b.offset = -3.0;
    vec![a, b]
}

/// [`swap`] without the change: `A` stays right and `B` stays blind.
pub fn constant(frames: usize, seed: u64) -> Vec<SyntheticProfile> {
    let mut profiles = swap(frames, frames, seed);
    for p in &mut profiles {
        p.segments.retain(|s| s.start < s.end);
    }
    profiles
}
