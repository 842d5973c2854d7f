use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synth::{Keyframe, SynthSpec, Waypoint};

/// Random walk through waypoints every `leg` frames, at most `speed`
/// px/frame per axis, keeping the center `margin` px inside the frame.
fn random_path(rng: &mut ChaCha8Rng, frames: usize, size: usize, margin: f64, leg: usize, speed: f64) -> Vec<Waypoint> {
    let (lo, hi) = (margin, size as f64 - margin);
    let mut x = rng.random_range(lo..hi);
    let mut y = rng.random_range(lo..hi);
    let reach = speed * leg as f64;
    let mut out = vec![Waypoint { frame: 0, x, y }];
    let mut f = 0;
    while f < frames {
        f += leg;
        x = (x + rng.random_range(-reach..reach)).clamp(lo, hi);
        y = (y + rng.random_range(-reach..reach)).clamp(lo, hi);
        out.push(Waypoint { frame: f, x, y });
    }
    out
}

/// Ten seeded sequences mixing motion, non-rigid deformation, in-plane
/// rotation and mild scale change.
pub fn ablation_suite(seed: u64, frames: usize) -> Vec<SynthSpec> {
    (0..10)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1000).wrapping_add(i));
            let size = 112;
            let target = 24;
            let turn = rng.random_range(-60.0..60.0);
            let zoom = rng.random_range(0.9..1.12);
            SynthSpec {
                name: format!("ablation_{i:02}"),
                frames,
                width: size,
                height: size,
                target_w: target,
                target_h: target,
                seed: rng.random(),
                waypoints: random_path(&mut rng, frames, size, 28.0, 12, 2.0),
                rotation: vec![
                    Keyframe { frame: 0, value: 0.0 },
                    Keyframe { frame: frames / 2, value: turn },
                    Keyframe { frame: frames - 1, value: -0.5 * turn },
                ],
                scale: vec![Keyframe { frame: 0, value: 1.0 }, Keyframe { frame: frames - 1, value: zoom }],
                occlusions: vec![],
                noise_sigma: 4.0 / 255.0,
                deformation: rng.random_range(1.0..3.0),
                channels: 1,
            }
        })
        .collect()
}

/// Upright for `frames/3` frames, then a 120° in-plane turn over ten
/// frames, held to the end.
pub fn rotation_event(seed: u64, frames: usize) -> SynthSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 96;
    let start = frames / 3;
    SynthSpec {
        name: format!("rotation_{seed}"),
        frames,
        width: size,
        height: size,
        target_w: 24,
        target_h: 24,
        seed: rng.random(),
        waypoints: random_path(&mut rng, frames, size, 30.0, 15, 1.0),
        rotation: vec![
            Keyframe { frame: start, value: 0.0 },
            Keyframe { frame: start + 10, value: 120.0 },
        ],
        scale: vec![],
        occlusions: vec![],
        noise_sigma: 2.0 / 255.0,
        deformation: 0.0,
        channels: 1,
    }
}

/// First frame after the rotation event of [`rotation_event`].
pub fn rotation_event_end(frames: usize) -> usize {
    frames / 3 + 10
}
