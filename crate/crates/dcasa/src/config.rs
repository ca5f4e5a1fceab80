//! Run configuration: a TOML file covering the STFT, both models, the two
//! training recipes and the dataset. Unknown keys are rejected; `config
//! --dump` prints the resolved defaults for a preset.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dcasa_core::dense_unet::{DenseUNetConfig, MaskDomain};
use dcasa_core::dsp::StftConfig;
use dcasa_core::tcn::TcnConfig;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub stft: StftSection,
    pub dense_unet: DenseUNetSection,
    pub tcn: TcnSection,
    pub train_simul: TrainSection,
    pub train_seq: TrainSection,
    pub data: DataSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StftSection {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DenseUNetSection {
    pub growth: usize,
    pub layers_per_block: usize,
    pub levels: usize,
    pub dropout_keep: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TcnSection {
    pub bottleneck: usize,
    pub hidden: usize,
    pub dilations_per_stack: usize,
    pub repeats: usize,
    pub keep_prob: f64,
    pub embed_dim: usize,
    pub preproc_growth: usize,
    pub preproc_layers: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub halve_patience: usize,
    pub stop_patience: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub train_speakers: u32,
    pub test_speakers: u32,
    pub duration_s: f64,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (unet, tcn, simul_epochs, seq_epochs) = match preset {
            Preset::Paper => (
                DenseUNetSection {
                    growth: 64,
                    layers_per_block: 5,
                    levels: 4,
                    dropout_keep: 0.9,
                },
                TcnSection {
                    bottleneck: 256,
                    hidden: 512,
                    dilations_per_stack: 7,
                    repeats: 3,
                    keep_prob: 0.7,
                    embed_dim: 40,
                    preproc_growth: 16,
                    preproc_layers: 4,
                },
                100,
                100,
            ),
            Preset::Desk => (
                DenseUNetSection {
                    growth: 16,
                    layers_per_block: 3,
                    levels: 2,
                    dropout_keep: 0.9,
                },
                TcnSection {
                    bottleneck: 48,
                    hidden: 96,
                    dilations_per_stack: 6,
                    repeats: 2,
                    keep_prob: 0.7,
                    embed_dim: 40,
                    preproc_growth: 8,
                    preproc_layers: 3,
                },
                8,
                10,
            ),
        };
        RunConfig {
            seed: 17,
            preset,
            stft: StftSection {
                sample_rate: 8000,
                frame_len: 256,
                hop: 64,
            },
            dense_unet: unet,
            tcn,
            train_simul: TrainSection {
                lr: 1e-4,
                batch_size: 4,
                max_epochs: simul_epochs,
                halve_patience: 2,
                stop_patience: 5,
            },
            train_seq: TrainSection {
                lr: 2.5e-4,
                batch_size: 4,
                max_epochs: seq_epochs,
                halve_patience: 2,
                stop_patience: 5,
            },
            data: DataSection {
                n_train: 500,
                n_valid: 50,
                n_test: 50,
                train_speakers: 20,
                test_speakers: 8,
                duration_s: 2.0,
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn dump(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn stft_config(&self) -> StftConfig {
        StftConfig {
            sample_rate: self.stft.sample_rate,
            frame_len: self.stft.frame_len,
            hop: self.stft.hop,
        }
    }

    pub fn dense_unet_config(&self, mask_domain: MaskDomain) -> DenseUNetConfig {
        DenseUNetConfig {
            growth: self.dense_unet.growth,
            layers_per_block: self.dense_unet.layers_per_block,
            levels: self.dense_unet.levels,
            mask_domain,
            dropout_keep: self.dense_unet.dropout_keep,
        }
    }

    pub fn tcn_config(&self) -> TcnConfig {
        TcnConfig {
            bottleneck: self.tcn.bottleneck,
            hidden: self.tcn.hidden,
            dilations_per_stack: self.tcn.dilations_per_stack,
            repeats: self.tcn.repeats,
            keep_prob: self.tcn.keep_prob,
            embed_dim: self.tcn.embed_dim,
            preproc_growth: self.tcn.preproc_growth,
            preproc_layers: self.tcn.preproc_layers,
        }
    }
}
