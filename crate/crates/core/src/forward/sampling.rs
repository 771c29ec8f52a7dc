use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::{CoincidenceHistogram, IntensitySet};
use crate::error::{CwsError, Result};
use crate::exec;

/// Categories per independently seeded sampling block.
const BLOCK: usize = 1 << 16;

/// Draws `counts ~ Multinomial(total, masses)` by sequential conditional
/// binomials. Counts always sum to `total`.
fn multinomial<R: Rng>(rng: &mut R, total: u64, masses: &[f64], out: &mut [u64]) {
    let mut suffix = vec![0.0f64; masses.len() + 1];
    for k in (0..masses.len()).rev() {
        suffix[k] = masses[k] + suffix[k + 1];
    }
    let mut left = total;
    for (k, &m) in masses.iter().enumerate() {
        if left == 0 {
            break;
        }
        if m <= 0.0 {
            continue;
        }
        let p = (m / suffix[k]).min(1.0);
        let x = if p >= 1.0 {
            left
        } else {
            Binomial::new(left, p).expect("probability in [0, 1]").sample(rng)
        };
        out[k] = x;
        left -= x;
    }
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo coincidence counts: `total` independent detections drawn from
/// the joint pmf. The result depends only on `(pmf, total, seed)`.
pub fn sample_coincidences(pmf: &IntensitySet, total: u64, seed: u64) -> Result<CoincidenceHistogram> {
    pmf.validate()?;
    if total == 0 {
        return Err(CwsError::arg("total must be at least 1"));
    }
    let p = &pmf.pmf;
    let blocks = p.len().div_ceil(BLOCK);
    let block_mass = exec::map_collect(blocks, |b| p[b * BLOCK..((b + 1) * BLOCK).min(p.len())].iter().sum::<f64>());
    if block_mass.iter().sum::<f64>() <= 0.0 {
        return Err(CwsError::DegenerateDistribution);
    }
    let mut per_block = vec![0u64; blocks];
    multinomial(&mut block_rng(seed, 0), total, &block_mass, &mut per_block);

    let mut counts = vec![0u64; p.len()];
    exec::for_each_chunk_mut(&mut counts, BLOCK, |b, out| {
        let masses = &p[b * BLOCK..b * BLOCK + out.len()];
        multinomial(&mut block_rng(seed, b as u64 + 1), per_block[b], masses, out);
    });
    Ok(CoincidenceHistogram {
        spec: pmf.spec.clone(),
        measurement: pmf.measurement,
        combo_count: pmf.combo_count,
        counts,
        total,
        seed,
    })
}
