//! Score sets with controlled, complementary stream confusions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FusionInput;
use crate::streams::ClassScores;
use crate::videoio::ActionLabel;

fn peaked(rng: &mut ChaCha8Rng, label: usize) -> [f64; 4] {
    let mut p = [0.0; 4];
    for v in p.iter_mut() {
        *v = rng.random_range(0.0..0.1);
    }
    p[label] = rng.random_range(0.6..0.9);
    p
}

fn split(rng: &mut ChaCha8Rng, strong: usize, weak: usize, strong_range: (f64, f64)) -> [f64; 4] {
    let mut p = [0.0; 4];
    for v in p.iter_mut() {
        *v = rng.random_range(0.0..0.05);
    }
    p[strong] = rng.random_range(strong_range.0..strong_range.1);
    p[weak] = rng.random_range(0.2..0.35);
    p
}

fn normalised(p: [f64; 4]) -> ClassScores {
    let s: f64 = p.iter().sum();
    ClassScores {
        probs: p.map(|v| v / s),
    }
}

/// Seeded fusion inputs where the spatial stream always mistakes Assault for
/// Shooting and the temporal stream flips a coin between Shooting and
/// NoAction; every other class is recognised by both.
pub fn complementary_confusion_set(
    seed: u64,
    per_class: usize,
) -> (Vec<FusionInput>, Vec<ActionLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (assault, shooting, no_action) = (1, 2, 3);
    let mut xs = Vec::with_capacity(4 * per_class);
    let mut ys = Vec::with_capacity(4 * per_class);
    for label in ActionLabel::ALL {
        let y = label.index();
        for _ in 0..per_class {
            let spatial = match y {
                1 => split(&mut rng, shooting, assault, (0.4, 0.55)),
                2 => split(&mut rng, shooting, assault, (0.6, 0.75)),
                _ => peaked(&mut rng, y),
            };
            let temporal = match y {
                2 | 3 => {
                    let (a, b) = if rng.random_bool(0.5) {
                        (shooting, no_action)
                    } else {
                        (no_action, shooting)
                    };
                    split(&mut rng, a, b, (0.36, 0.5))
                }
                _ => peaked(&mut rng, y),
            };
            xs.push(FusionInput::new(
                &normalised(spatial),
                &normalised(temporal),
            ));
            ys.push(label);
        }
    }
    (xs, ys)
}
