use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{check_dims, Dims, Volume};
use crate::error::{JbfError, Result};

const BACKGROUND: f64 = -150.0;
const BODY: f64 = 40.0;
const INSERT_LEVELS: [f64; 6] = [-100.0, 0.0, 80.0, 150.0, 300.0, 500.0];

/// Paired clean/noisy synthetic volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub clean: Volume,
    pub noisy: Volume,
}

struct Ellipsoid {
    center: [f64; 3],
    semi: [f64; 3],
    level: f64,
}

impl Ellipsoid {
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.center[a]) / self.semi[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }
}

/// Piecewise-constant ellipsoid phantom plus i.i.d. Gaussian noise.
///
/// Coordinates are normalized to `[-1, 1]` per axis so the layout scales
/// with `dims`. A body ellipsoid sits on an air background; inserts with
/// distinct levels in `[-150, 500]` are painted in order, later ones
/// overwriting earlier ones where they overlap.
pub fn make_phantom(dims: Dims, seed: u64, noise_sigma: f64) -> Result<Phantom> {
    check_dims(dims)?;
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(JbfError::InvalidParam(format!(
            "noise sigma must be finite and >= 0, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut shapes = vec![Ellipsoid {
        center: [0.0; 3],
        semi: [0.85, 0.75, 1.2],
        level: BODY,
    }];
    let inserts = rng.random_range(4..=7);
    for i in 0..inserts {
        let semi = [
            rng.random_range(0.12..0.35),
            rng.random_range(0.12..0.35),
            rng.random_range(0.4..1.2),
        ];
        let center = [
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.45..0.45),
            rng.random_range(-0.3..0.3),
        ];
        shapes.push(Ellipsoid {
            center,
            semi,
            level: INSERT_LEVELS
                [(i + rng.random_range(0..INSERT_LEVELS.len())) % INSERT_LEVELS.len()],
        });
    }

    let norm = |i: usize, n: usize| {
        if n == 1 {
            0.0
        } else {
            2.0 * i as f64 / (n - 1) as f64 - 1.0
        }
    };
    let clean = Volume::from_fn(dims, |x, y, z| {
        let p = [norm(x, dims[0]), norm(y, dims[1]), norm(z, dims[2])];
        shapes
            .iter()
            .rev()
            .find(|s| s.contains(p))
            .map_or(BACKGROUND, |s| s.level)
    })?;

    let noisy = if noise_sigma == 0.0 {
        clean.clone()
    } else {
        let normal =
            Normal::new(0.0, noise_sigma).map_err(|e| JbfError::InvalidParam(e.to_string()))?;
        let data = clean
            .data()
            .iter()
            .map(|&v| v + normal.sample(&mut rng))
            .collect();
        Volume::new(dims, data)?
    };
    Ok(Phantom { clean, noisy })
}
