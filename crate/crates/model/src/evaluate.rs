//! Scoring checkpoints on the test mixtures.

use rayon::prelude::*;

use emgse_core::dataset::Split;
use emgse_core::metrics::{si_sdr, stoi};
use emgse_core::report::{EvalRecord, Report};

use crate::checkpoint::Checkpoint;
use crate::data::{noise_type, thread_pool, Corpus};
use crate::error::Result;
use crate::infer::enhance;

/// A named checkpoint to evaluate, e.g. `("EMGSE_cheek", &ckpt)`.
pub type System<'a> = (&'a str, &'a Checkpoint);

/// Enhances every test mixture with every system and scores it against
/// the clean utterance. A failed enhancement becomes a failure row.
pub fn evaluate(systems: &[System<'_>], corpus: &Corpus, jobs: usize) -> Result<Report> {
    let mixes = corpus.mixtures(Split::Test);
    let pool = thread_pool(jobs)?;
    let rows: Vec<Vec<EvalRecord>> = pool.install(|| {
        mixes
            .par_iter()
            .map(|m| -> Result<Vec<EvalRecord>> {
                let clean = corpus.clean(&m.clean_id)?;
                let emg = corpus.emg(&m.clean_id)?;
                let noisy = corpus.noisy(m)?;
                let stoi_noisy = stoi(clean, &noisy)?;
                let si_sdr_noisy = si_sdr(clean, &noisy)?;
                Ok(systems
                    .iter()
                    .map(|(name, ckpt)| {
                        let scored =
                            enhance(ckpt, &noisy, Some(emg)).and_then(|y| Ok((stoi(clean, &y)?, si_sdr(clean, &y)?)));
                        let (s, d, error) = match scored {
                            Ok((s, d)) => (Some(s), Some(d), None),
                            Err(e) => (None, None, Some(e.to_string())),
                        };
                        EvalRecord {
                            system: name.to_string(),
                            mixture_id: m.id.clone(),
                            utterance_id: m.clean_id.clone(),
                            noise_type: noise_type(&m.noise_id).to_string(),
                            snr_db: m.snr_db,
                            stoi_noisy,
                            si_sdr_noisy,
                            stoi_enhanced: s,
                            si_sdr_enhanced: d,
                            error,
                        }
                    })
                    .collect())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Report::new(rows.into_iter().flatten().collect()))
}
