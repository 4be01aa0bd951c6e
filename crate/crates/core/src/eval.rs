//! Evaluation protocol: best-permutation SI-SDR, argmax DOA metrics and
//! the per-bucket report.

use crate::datagen::MixtureExample;
use crate::dsp::AudioSegment;
use crate::error::{Error, Result};
use crate::metrics::{
    average_observers, best_permutation_eval, bucket_report, doa_metrics, EvalReport, ExampleRecord, DOA_THRESHOLD_DEG,
};
use crate::model::{LabNet, ModelConfig, Separation};
use crate::spatial::{decode_doa, DecodeMode, SpatialCodecConfig};

/// Where the two estimates come from.
#[derive(Clone, Copy, Debug)]
pub enum Estimator<'a> {
    Model(&'a LabNet),
    /// The references themselves.
    Oracle,
    /// The mixture at the reference channel, used for both sources.
    PassThrough,
}

/// Frame-wise argmax DOAs per observer from `[T, N, bins]` spectra.
pub fn argmax_tracks(spectra: &[f64], observers: usize, codec: &SpatialCodecConfig) -> Result<Vec<Vec<f64>>> {
    let bins = codec.bins;
    let mut tracks = vec![Vec::new(); observers];
    for frame in spectra.chunks_exact(observers * bins) {
        for (n, track) in tracks.iter_mut().enumerate() {
            track.push(decode_doa(&frame[n * bins..(n + 1) * bins], codec, DecodeMode::Argmax)?);
        }
    }
    Ok(tracks)
}

fn reference_channel_of(seg: &AudioSegment, channel: usize) -> Result<Vec<f64>> {
    if channel >= seg.channel_count() {
        return Err(Error::invalid(format!(
            "reference channel {channel} missing from a {}-channel example",
            seg.channel_count()
        )));
    }
    Ok(seg.channel(channel).to_vec())
}

/// Scores one example. The DOA of estimate `assignment[r]` is compared
/// with the ground truth of reference `r`.
pub fn evaluate_example(
    example: &MixtureExample,
    estimator: Estimator<'_>,
    reference_channel: usize,
) -> Result<ExampleRecord> {
    match estimator {
        Estimator::Oracle => {
            let refs = [0, 1].map(|r| reference_channel_of(&example.references[r], reference_channel));
            let [a, b] = refs;
            score_estimates(example, [a?, b?], None, reference_channel)
        }
        Estimator::PassThrough => {
            let mix = reference_channel_of(&example.mixture, reference_channel)?;
            score_estimates(example, [mix.clone(), mix], None, reference_channel)
        }
        Estimator::Model(model) => score_separation(example, &model.infer(&example.mixture)?, &model.config),
    }
}

/// Scores a model output already computed for `example`.
pub fn score_separation(example: &MixtureExample, sep: &Separation, config: &ModelConfig) -> Result<ExampleRecord> {
    let estimates = [sep.waveforms[0].clone(), sep.waveforms[1].clone()];
    score_estimates(example, estimates, Some((sep, config)), config.reference_channel)
}

fn score_estimates(
    example: &MixtureExample,
    estimates: [Vec<f64>; 2],
    separation: Option<(&Separation, &ModelConfig)>,
    reference_channel: usize,
) -> Result<ExampleRecord> {
    let refs = [
        reference_channel_of(&example.references[0], reference_channel)?,
        reference_channel_of(&example.references[1], reference_channel)?,
    ];
    let perm = best_permutation_eval([&refs[0], &refs[1]], [&estimates[0], &estimates[1]])?;

    let mut doa = None;
    if let Some((sep, cfg)) = separation.filter(|(sep, _)| !sep.doa_spectra.is_empty()) {
        let n = cfg.observers();
        let mut per_observer = Vec::new();
        for (r, &e) in perm.assignment.iter().enumerate() {
            let tracks = argmax_tracks(&sep.doa_spectra[e], n, &cfg.codec)?;
            let truth = example.metadata.locations[r].observer_doas(n);
            for (track, t) in tracks.iter().zip(truth) {
                per_observer.push(doa_metrics(track, &vec![t; track.len()], DOA_THRESHOLD_DEG)?);
            }
        }
        doa = Some(average_observers(&per_observer));
    }

    let locs = &example.metadata.locations;
    Ok(ExampleRecord {
        id: example.metadata.id.clone(),
        bucket: example.metadata.bucket,
        azimuth_difference: (locs[0].doa_centroid - locs[1].doa_centroid).abs(),
        si_sdr: perm.mean(),
        doa,
    })
}

/// Evaluates examples in order and aggregates them into a report.
pub fn evaluate<I>(examples: I, estimator: Estimator<'_>, reference_channel: usize) -> Result<EvalReport>
where
    I: IntoIterator<Item = Result<MixtureExample>>,
{
    let mut records = Vec::new();
    for example in examples {
        records.push(evaluate_example(&example?, estimator, reference_channel)?);
    }
    Ok(bucket_report(records))
}
