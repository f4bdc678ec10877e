//! WAV input and output.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

/// Multichannel recording, one `Vec` per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

impl Audio {
    pub fn mono(sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            channels: vec![samples],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }
}

/// Reads 16/24/32-bit integer or 32-bit float PCM into `[-1, 1]` doubles.
pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = WavReader::open(path).with_context(|| format!("opening {}", path.display()))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Ok(Audio {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Reads a file and checks its sample rate.
pub fn read_wav_at(path: &Path, sample_rate: u32) -> Result<Audio> {
    let audio = read_wav(path)?;
    if audio.sample_rate != sample_rate {
        bail!(
            "{} is sampled at {} Hz, expected {} Hz (resampling is not supported)",
            path.display(),
            audio.sample_rate,
            sample_rate
        );
    }
    Ok(audio)
}

/// Writes 32-bit float PCM.
pub fn write_wav(path: &Path, audio: &Audio) -> Result<()> {
    let n = audio.len();
    if audio.channels.iter().any(|c| c.len() != n) {
        bail!("channels of unequal length");
    }
    let spec = WavSpec {
        channels: audio.num_channels() as u16,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).with_context(|| format!("creating {}", path.display()))?;
    for t in 0..n {
        for c in &audio.channels {
            w.write_sample(c[t] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}
