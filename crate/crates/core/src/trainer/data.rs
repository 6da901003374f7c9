use crate::dsp::{apply_mask, istft_padded, stft_padded, Mask, PaddedSpectrogram, StftConfig, Waveform};
use crate::models::{FeatureTransform, Generator};
use crate::nn::Tensor;
use crate::synth::Utterance;

use super::TrainError;

/// An utterance with its spectrogram and features computed once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: String,
    pub input: Waveform,
    pub padded: PaddedSpectrogram,
    /// Input magnitudes `[frames, bins]`.
    pub mag: Tensor,
    /// Transformed input magnitudes `[frames, bins]`.
    pub features: Tensor,
    /// Transformed clean magnitudes, when a clean reference exists.
    pub clean_features: Option<Tensor>,
}

fn mag_tensor(padded: &PaddedSpectrogram) -> Result<Tensor, TrainError> {
    let m = padded.spec.magnitude();
    Ok(Tensor::from_rows(m.frames(), m.bins(), m.data().to_vec())?)
}

pub fn prepare(
    id: &str,
    input: &Waveform,
    clean: Option<&Waveform>,
    stft: &StftConfig,
    transform: FeatureTransform,
) -> Result<Prepared, TrainError> {
    let padded = stft_padded(input, stft)?;
    let mag = mag_tensor(&padded)?;
    let clean_features = match clean {
        Some(c) => {
            if c.len() != input.len() {
                return Err(TrainError::Data(format!(
                    "{id}: clean reference has {} samples, input {}",
                    c.len(),
                    input.len()
                )));
            }
            Some(transform.features(&mag_tensor(&stft_padded(c, stft)?)?))
        }
        None => None,
    };
    Ok(Prepared {
        id: id.to_string(),
        input: input.clone(),
        features: transform.features(&mag),
        padded,
        mag,
        clean_features,
    })
}

pub fn prepare_all(
    utterances: &[Utterance],
    stft: &StftConfig,
    transform: FeatureTransform,
) -> Result<Vec<Prepared>, TrainError> {
    utterances
        .iter()
        .map(|u| prepare(&u.entry.id, &u.input, u.clean.as_ref(), stft, transform))
        .collect()
}

impl Prepared {
    pub fn frames(&self) -> usize {
        self.mag.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.mag.shape()[1]
    }

    /// Masks the input spectrogram and resynthesizes at the input length.
    pub fn resynthesize(&self, mask: &Mask) -> Result<Waveform, TrainError> {
        let spec = apply_mask(mask, &self.padded.spec)?;
        Ok(istft_padded(&spec, self.padded.front_pad, self.padded.original_len)?)
    }

    pub fn enhance(&self, generator: &Generator) -> Result<(Mask, Waveform), TrainError> {
        let mask = generator.mask(&self.features)?;
        let wave = self.resynthesize(&mask)?;
        Ok((mask, wave))
    }
}
