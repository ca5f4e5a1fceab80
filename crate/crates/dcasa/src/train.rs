//! Training loops for both stages and the joint fine-tune: mini-batch Adam
//! with deterministic batch-parallel gradient accumulation, validation-driven
//! learning-rate halving / early stopping, best-checkpoint tracking and a
//! line-delimited metrics log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use dcasa_core::cluster::kmeans;
use dcasa_core::dense_unet::{
    apply_complex_mask_node, apply_real_mask_node, DenseUNet, MaskDomain,
};
use dcasa_core::dsp::{stft, Spectrogram, StftConfig};
use dcasa_core::graph::{Graph, NodeId};
use dcasa_core::objectives::{
    self, build_ca_loss, build_organized_pair, build_psa_loss, build_snr_objective,
    complex_l1_table, psa_context, psa_loss_table, tpit_reduce, upit_reduce,
};
use dcasa_core::optim::{lr_schedule, AdamConfig, AdamState, ScheduleDecision};
use dcasa_core::params::Binding;
use dcasa_core::rng::{derive, rng_for};
use dcasa_core::seq::{build_dc_loss, build_input_stack};
use dcasa_core::tcn::{drop_dilation_masks, Tcn};
use dcasa_core::tensor::Tensor;

use crate::checkpoint;
use crate::config::TrainSection;
use crate::error::{Error, Result};
use crate::manifest::{resolve, MixtureRecord, Split};
use crate::wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulObjective {
    Psa,
    Ca,
    Snr,
}

impl SimulObjective {
    pub fn mask_domain(self) -> MaskDomain {
        match self {
            SimulObjective::Psa => MaskDomain::Magnitude,
            _ => MaskDomain::Complex,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SimulObjective::Psa => "psa",
            SimulObjective::Ca => "ca",
            SimulObjective::Snr => "snr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PitMode {
    Tpit,
    Upit,
}

impl PitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PitMode::Tpit => "tpit",
            PitMode::Upit => "upit",
        }
    }
}

/// One mixture with its references, fully in memory.
pub struct LoadedUtterance {
    pub id: u32,
    pub mixture: Vec<f32>,
    pub source1: Vec<f32>,
    pub source2: Vec<f32>,
}

pub fn load_split(
    manifest_path: &Path,
    records: &[MixtureRecord],
    split: Split,
) -> Result<Vec<LoadedUtterance>> {
    records
        .iter()
        .filter(|r| r.split == split)
        .map(|r| {
            Ok(LoadedUtterance {
                id: r.id,
                mixture: wav::read_wav(&resolve(manifest_path, &r.mixture))?,
                source1: wav::read_wav(&resolve(manifest_path, &r.source1))?,
                source2: wav::read_wav(&resolve(manifest_path, &r.source2))?,
            })
        })
        .collect()
}

pub struct TrainOutcome {
    pub epochs_run: usize,
    pub best_val: f64,
    pub val_history: Vec<f64>,
    pub aborted: bool,
}

pub struct Artifacts {
    pub ckpt_path: PathBuf,
    pub log_path: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path, stem: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Artifacts {
            ckpt_path: dir.join(format!("{stem}.ckpt")),
            log_path: dir.join(format!("{stem}.metrics.jsonl")),
        })
    }

    fn log(&self, value: serde_json::Value) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.log_path)
            .map_err(|e| Error::io(&self.log_path, e))?;
        writeln!(f, "{value}").map_err(|e| Error::io(&self.log_path, e))?;
        Ok(())
    }
}

/// Model input planes for one mixture spectrogram.
fn model_input(domain: MaskDomain, y: &Spectrogram<f32>) -> Tensor<f32> {
    match domain {
        MaskDomain::Magnitude => {
            Tensor::from_vec(&[y.frames, y.bins, 1], y.magnitude()).unwrap()
        }
        MaskDomain::Complex => y.to_tensor(),
    }
}

/// Builds the training loss graph for one utterance; returns the loss node.
#[allow(clippy::too_many_arguments)]
fn simul_loss_graph(
    net: &DenseUNet<f32>,
    g: &mut Graph<f32>,
    binding: &Binding,
    utt: &LoadedUtterance,
    cfg: &StftConfig,
    objective: SimulObjective,
    mode: PitMode,
    dropout: Option<&[Vec<f32>]>,
) -> Result<NodeId> {
    let y = stft(&utt.mixture, cfg)?;
    let x0 = stft(&utt.source1, cfg)?;
    let x1 = stft(&utt.source2, cfg)?;
    let frames = y.frames;
    let input = model_input(objective.mask_domain(), &y);
    let masks = net.forward(g, binding, &input, dropout)?;

    match objective {
        SimulObjective::Psa => {
            let m0 = g.reshape(masks[0], &[frames, y.bins])?;
            let m1 = g.reshape(masks[1], &[frames, y.bins])?;
            let ctx = psa_context(&y, [&x0, &x1]);
            let v0 = g.value(m0).clone();
            let v1 = g.value(m1).clone();
            let table = psa_loss_table([&v0, &v1], &ctx)?;
            let chosen = match mode {
                PitMode::Tpit => tpit_reduce(&table).1,
                PitMode::Upit => {
                    let sums: Vec<f32> = (0..2)
                        .map(|p| (0..frames).map(|t| table.at(t, p)).sum())
                        .collect();
                    let (_, p) = upit_reduce(&sums);
                    vec![p; frames]
                }
            };
            build_psa_loss(g, [m0, m1], &ctx, &chosen).map_err(Error::from)
        }
        SimulObjective::Ca | SimulObjective::Snr => {
            let e0 = apply_complex_mask_node(g, masks[0], &y)?;
            let e1 = apply_complex_mask_node(g, masks[1], &y)?;
            let s0 = Spectrogram::from_tensor(g.value(e0))?;
            let s1 = Spectrogram::from_tensor(g.value(e1))?;
            if objective == SimulObjective::Ca {
                let table = complex_l1_table([&s0, &s1], [&x0, &x1])?;
                let chosen = match mode {
                    PitMode::Tpit => tpit_reduce(&table).1,
                    PitMode::Upit => {
                        let sums: Vec<f32> = (0..2)
                            .map(|p| (0..frames).map(|t| table.at(t, p)).sum())
                            .collect();
                        let (_, p) = upit_reduce(&sums);
                        vec![p; frames]
                    }
                };
                build_ca_loss(g, [e0, e1], [&x0, &x1], &chosen).map_err(Error::from)
            } else {
                let chosen = match mode {
                    PitMode::Tpit => {
                        // frame organization by complex STFT l1 loss
                        let table = complex_l1_table([&s0, &s1], [&x0, &x1])?;
                        tpit_reduce(&table).1
                    }
                    PitMode::Upit => {
                        // fixed pairing maximizing the utterance SNR objective
                        let id = objectives::snr_objective_value(
                            [&s0, &s1],
                            [&utt.source1, &utt.source2],
                            cfg,
                        )?;
                        let sw = objectives::snr_objective_value(
                            [&s0, &s1],
                            [&utt.source2, &utt.source1],
                            cfg,
                        )?;
                        vec![if sw > id { 1 } else { 0 }; frames]
                    }
                };
                let organized = build_organized_pair(g, [e0, e1], &chosen, y.bins)?;
                let j = build_snr_objective(
                    g,
                    organized,
                    [&utt.source1, &utt.source2],
                    cfg,
                )?;
                Ok(g.neg(j))
            }
        }
    }
}

/// Validation loss without a backward graph.
fn simul_val_loss(
    net: &DenseUNet<f32>,
    utt: &LoadedUtterance,
    cfg: &StftConfig,
    objective: SimulObjective,
    mode: PitMode,
) -> Result<f64> {
    let mut g = Graph::inference();
    let binding = net.params.bind(&mut g);
    let loss = simul_loss_graph(net, &mut g, &binding, utt, cfg, objective, mode, None)?;
    Ok(g.value(loss).item() as f64)
}

/// Generic epoch loop shared by the two stage trainers. `step` computes one
/// utterance's (loss value, gradients); `val` scores one validation
/// utterance.
fn run_epochs<O, S, V>(
    owner: &mut O,
    n_train: usize,
    n_valid: usize,
    tcfg: &TrainSection,
    seed: u64,
    artifacts: &Artifacts,
    label: &str,
    step: S,
    val: V,
) -> Result<TrainOutcome>
where
    O: ParamsOwner + Sync,
    S: Fn(&O, usize, u64) -> Result<(f64, Vec<Option<Tensor<f32>>>)> + Sync,
    V: Fn(&O, usize) -> Result<f64> + Sync,
{
    let mut adam = AdamState::new(owner.params(), AdamConfig::default());
    let mut lr = tcfg.lr;
    let mut history: Vec<f64> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut global_step = 0u64;
    let mut aborted = false;
    let mut epochs_run = 0usize;

    'outer: for epoch in 0..tcfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        {
            use rand::seq::SliceRandom;
            let mut rng = rng_for(seed, 0xe70c_0000 + epoch as u64);
            order.shuffle(&mut rng);
        }
        let mut train_loss_sum = 0.0;
        let mut train_loss_n = 0usize;
        for batch in order.chunks(tcfg.batch_size.max(1)) {
            let results: Vec<Result<(f64, Vec<Option<Tensor<f32>>>)>> = {
                let oref: &O = &*owner;
                batch
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &idx)| {
                        let stream = derive(seed, global_step * 64 + slot as u64);
                        step(oref, idx, stream)
                    })
                    .collect()
            };
            let mut summed: Option<Vec<Option<Tensor<f32>>>> = None;
            let scale = 1.0 / batch.len() as f64;
            for r in results {
                let (value, grads) = r?;
                train_loss_sum += value;
                train_loss_n += 1;
                match &mut summed {
                    None => summed = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(grads) {
                            match (a.as_mut(), g) {
                                (Some(a), Some(g)) => a.add_into(&g),
                                (None, Some(g)) => *a = Some(g),
                                _ => {}
                            }
                        }
                    }
                }
            }
            let mut summed = summed.unwrap_or_default();
            for g in summed.iter_mut().flatten() {
                *g = g.map(|v| v * scale as f32);
            }
            if let Err(e) = adam.step(owner.params_mut(), &summed, lr) {
                // divergence: stop with the last good (best) checkpoint
                artifacts.log(json!({
                    "event": "abort", "label": label, "step": global_step,
                    "reason": format!("{e}"),
                }))?;
                aborted = true;
                break 'outer;
            }
            global_step += 1;
        }

        let val_losses: Vec<Result<f64>> = {
            let oref: &O = &*owner;
            (0..n_valid).into_par_iter().map(|i| val(oref, i)).collect()
        };
        let mut val_sum = 0.0;
        for v in val_losses {
            val_sum += v?;
        }
        let val_mean = val_sum / n_valid.max(1) as f64;
        history.push(val_mean);
        epochs_run = epoch + 1;
        artifacts.log(json!({
            "event": "epoch", "label": label, "epoch": epoch, "step": global_step,
            "train_loss": train_loss_sum / train_loss_n.max(1) as f64,
            "val_loss": val_mean, "lr": lr,
        }))?;
        if val_mean < best_val {
            best_val = val_mean;
            owner.save_best(&artifacts.ckpt_path, &adam)?;
        }
        match lr_schedule(&history, tcfg.halve_patience, tcfg.stop_patience) {
            ScheduleDecision::Continue => {}
            ScheduleDecision::HalveLr => lr *= 0.5,
            ScheduleDecision::Stop => break,
        }
    }

    // leave the best weights in the model
    owner.restore_best(&artifacts.ckpt_path)?;
    Ok(TrainOutcome {
        epochs_run,
        best_val,
        val_history: history,
        aborted,
    })
}

/// Checkpoint plumbing shared by the trainers.
trait ParamsOwner: Sync {
    fn params(&self) -> &dcasa_core::params::ParamSet<f32>;
    fn params_mut(&mut self) -> &mut dcasa_core::params::ParamSet<f32>;
    fn save_best(&self, path: &Path, adam: &AdamState<f32>) -> Result<()>;
    fn restore_best(&mut self, path: &Path) -> Result<()>;
}

struct UNetOwner<'a>(&'a mut DenseUNet<f32>);

impl ParamsOwner for UNetOwner<'_> {
    fn params(&self) -> &dcasa_core::params::ParamSet<f32> {
        &self.0.params
    }
    fn params_mut(&mut self) -> &mut dcasa_core::params::ParamSet<f32> {
        &mut self.0.params
    }
    fn save_best(&self, path: &Path, adam: &AdamState<f32>) -> Result<()> {
        checkpoint::save(path, &self.0.params, Some(adam))
    }
    fn restore_best(&mut self, path: &Path) -> Result<()> {
        if path.exists() {
            checkpoint::load(path, &mut self.0.params, AdamConfig::default())?;
        }
        Ok(())
    }
}

struct TcnOwner<'a>(&'a mut Tcn<f32>);

impl ParamsOwner for TcnOwner<'_> {
    fn params(&self) -> &dcasa_core::params::ParamSet<f32> {
        &self.0.params
    }
    fn params_mut(&mut self) -> &mut dcasa_core::params::ParamSet<f32> {
        &mut self.0.params
    }
    fn save_best(&self, path: &Path, adam: &AdamState<f32>) -> Result<()> {
        checkpoint::save(path, &self.0.params, Some(adam))
    }
    fn restore_best(&mut self, path: &Path) -> Result<()> {
        if path.exists() {
            checkpoint::load(path, &mut self.0.params, AdamConfig::default())?;
        }
        Ok(())
    }
}

/// Stage-1 training (Dense-UNet) under the chosen objective and PIT mode.
#[allow(clippy::too_many_arguments)]
pub fn train_simultaneous(
    net: &mut DenseUNet<f32>,
    cfg: &StftConfig,
    train: &[LoadedUtterance],
    valid: &[LoadedUtterance],
    objective: SimulObjective,
    mode: PitMode,
    tcfg: &TrainSection,
    seed: u64,
    artifacts: &Artifacts,
) -> Result<TrainOutcome> {
    artifacts.log(json!({
        "event": "start", "label": "simul",
        "objective": objective.as_str(), "mode": mode.as_str(),
        "params": net.param_count(), "train": train.len(), "valid": valid.len(),
    }))?;
    let cfg = *cfg;
    let mut owner = UNetOwner(net);
    run_epochs(
        &mut owner,
        train.len(),
        valid.len(),
        tcfg,
        seed,
        artifacts,
        "simul",
        |owner: &UNetOwner, idx, stream| {
            let net: &DenseUNet<f32> = &*owner.0;
            let mut g = Graph::new();
            let binding = net.params.bind(&mut g);
            let mut rng = rng_for(stream, 0xd209);
            let dropout = net.dropout_masks(&mut rng);
            let loss = simul_loss_graph(
                net,
                &mut g,
                &binding,
                &train[idx],
                &cfg,
                objective,
                mode,
                Some(&dropout),
            )?;
            let value = g.value(loss).item() as f64;
            let mut grads = g.backward(loss)?;
            let gvec = binding.ids().iter().map(|&id| grads.take(id)).collect();
            Ok((value, gvec))
        },
        |owner: &UNetOwner, idx| simul_val_loss(&*owner.0, &valid[idx], &cfg, objective, mode),
    )
}

/// Cached per-utterance features for sequential-grouping training: the
/// stacked input planes plus the stage-1 optimal-assignment labels and
/// loss-difference weights.
pub struct SeqItem {
    pub input: Tensor<f32>,
    pub labels: Vec<u8>,
    pub weights: Vec<f32>,
}

/// Runs the frozen stage-1 model over a split and precomputes TCN inputs.
pub fn prepare_seq_items(
    stage1: &DenseUNet<f32>,
    cfg: &StftConfig,
    utts: &[LoadedUtterance],
) -> Result<Vec<SeqItem>> {
    utts.par_iter()
        .map(|utt| {
            let y = stft(&utt.mixture, cfg)?;
            let x0 = stft(&utt.source1, cfg)?;
            let x1 = stft(&utt.source2, cfg)?;
            let (e0, e1) = stage1_estimates(stage1, &y)?;
            let table = complex_l1_table([&e0, &e1], [&x0, &x1])?;
            let (_, chosen) = tpit_reduce(&table);
            let labels = objectives::assignment_labels(&chosen);
            let weights = objectives::ld_weights(&table)?;
            let input = build_input_stack(&y, [&e0, &e1])?;
            Ok(SeqItem {
                input,
                labels,
                weights,
            })
        })
        .collect()
}

/// Frame-level estimates from a stage-1 model in inference mode.
pub fn stage1_estimates(
    net: &DenseUNet<f32>,
    y: &Spectrogram<f32>,
) -> Result<(Spectrogram<f32>, Spectrogram<f32>)> {
    let mut g = Graph::inference();
    let binding = net.params.bind(&mut g);
    let input = model_input(net.cfg.mask_domain, y);
    let masks = net.forward(&mut g, &binding, &input, None)?;
    let (e0, e1) = match net.cfg.mask_domain {
        MaskDomain::Complex => {
            let e0 = apply_complex_mask_node(&mut g, masks[0], y)?;
            let e1 = apply_complex_mask_node(&mut g, masks[1], y)?;
            (e0, e1)
        }
        MaskDomain::Magnitude => {
            let e0 = apply_real_mask_node(&mut g, masks[0], y)?;
            let e1 = apply_real_mask_node(&mut g, masks[1], y)?;
            (e0, e1)
        }
    };
    Ok((
        Spectrogram::from_tensor(g.value(e0))?,
        Spectrogram::from_tensor(g.value(e1))?,
    ))
}

/// Stage-2 training: TCN embeddings under the weighted DC objective on top
/// of a frozen stage-1 model's cached outputs.
pub fn train_sequential(
    tcn: &mut Tcn<f32>,
    train_items: &[SeqItem],
    valid_items: &[SeqItem],
    tcfg: &TrainSection,
    seed: u64,
    artifacts: &Artifacts,
) -> Result<TrainOutcome> {
    artifacts.log(json!({
        "event": "start", "label": "seq",
        "params": tcn.param_count(),
        "train": train_items.len(), "valid": valid_items.len(),
    }))?;
    let tcn_cfg = tcn.cfg;
    let mut owner = TcnOwner(tcn);
    run_epochs(
        &mut owner,
        train_items.len(),
        valid_items.len(),
        tcfg,
        seed,
        artifacts,
        "seq",
        |owner: &TcnOwner, idx, stream| {
            let tcn: &Tcn<f32> = &*owner.0;
            let item = &train_items[idx];
            let mut g = Graph::new();
            let binding = tcn.params.bind(&mut g);
            let mut rng = rng_for(stream, 0xd210);
            let drop = drop_dilation_masks(&tcn_cfg, &mut rng)?;
            let v = tcn.forward(&mut g, &binding, &item.input, Some(&drop))?;
            let loss = build_dc_loss(&mut g, v, &item.labels, Some(&item.weights))?;
            let value = g.value(loss).item() as f64;
            let mut grads = g.backward(loss)?;
            let gvec = binding.ids().iter().map(|&id| grads.take(id)).collect();
            Ok((value, gvec))
        },
        |owner: &TcnOwner, idx| {
            let tcn: &Tcn<f32> = &*owner.0;
            let item = &valid_items[idx];
            let mut g = Graph::inference();
            let binding = tcn.params.bind(&mut g);
            let v = tcn.forward(&mut g, &binding, &item.input, None)?;
            let loss = build_dc_loss(&mut g, v, &item.labels, Some(&item.weights))?;
            Ok(g.value(loss).item() as f64)
        },
    )
}

/// Joint fine-tune: stage 1 maximizes utterance SNR with its outputs
/// organized by the current K-means labels (labels held constant within the
/// step); stage 2 keeps training under the weighted DC objective on the
/// refreshed stage-1 outputs. Both run at 1/8 of the initial rates.
#[allow(clippy::too_many_arguments)]
pub fn joint_finetune(
    stage1: &mut DenseUNet<f32>,
    tcn: &mut Tcn<f32>,
    cfg: &StftConfig,
    train: &[LoadedUtterance],
    valid: &[LoadedUtterance],
    lr_simul: f64,
    lr_seq: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ck1 = out_dir.join("stage1_joint.ckpt");
    let ck2 = out_dir.join("stage2_joint.ckpt");
    let log = Artifacts {
        ckpt_path: ck1.clone(),
        log_path: out_dir.join("joint.metrics.jsonl"),
    };
    log.log(json!({
        "event": "start", "label": "joint",
        "lr_simul": lr_simul / 8.0, "lr_seq": lr_seq / 8.0, "epochs": epochs,
    }))?;

    let mut adam1 = AdamState::new(&stage1.params, AdamConfig::default());
    let mut adam2 = AdamState::new(&tcn.params, AdamConfig::default());
    let mut global_step = 0u64;

    type StepOut = (
        f64,
        Vec<Option<Tensor<f32>>>,
        f64,
        Vec<Option<Tensor<f32>>>,
    );

    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        {
            use rand::seq::SliceRandom;
            let mut rng = rng_for(seed, 0x301e_0000 + epoch as u64);
            order.shuffle(&mut rng);
        }
        let mut j_sum = 0.0;
        let mut dc_sum = 0.0;
        let mut n = 0usize;
        for batch in order.chunks(batch_size.max(1)) {
            let stage1_ref = &*stage1;
            let tcn_ref = &*tcn;
            let cfg_ref = *cfg;
            let results: Vec<Result<StepOut>> = batch
                .par_iter()
                .enumerate()
                .map(|(slot, &idx)| -> Result<StepOut> {
                    let utt = &train[idx];
                    let stream = derive(seed, 0x3010_0000 + global_step * 64 + slot as u64);
                    let y = stft(&utt.mixture, &cfg_ref)?;
                    let x0 = stft(&utt.source1, &cfg_ref)?;
                    let x1 = stft(&utt.source2, &cfg_ref)?;

                    // stage-1 training graph
                    let mut g1 = Graph::new();
                    let b1 = stage1_ref.params.bind(&mut g1);
                    let mut rng = rng_for(stream, 0xd301);
                    let dropout = stage1_ref.dropout_masks(&mut rng);
                    let input = model_input(stage1_ref.cfg.mask_domain, &y);
                    let masks = stage1_ref.forward(&mut g1, &b1, &input, Some(&dropout))?;
                    let e0 = apply_complex_mask_node(&mut g1, masks[0], &y)?;
                    let e1 = apply_complex_mask_node(&mut g1, masks[1], &y)?;
                    let s0 = Spectrogram::from_tensor(g1.value(e0))?;
                    let s1 = Spectrogram::from_tensor(g1.value(e1))?;

                    // current K-means labels from the current TCN (constants)
                    let stack = build_input_stack(&y, [&s0, &s1])?;
                    let klabels = {
                        let mut gi = Graph::inference();
                        let bi = tcn_ref.params.bind(&mut gi);
                        let v = tcn_ref.forward(&mut gi, &bi, &stack, None)?;
                        let vt = gi.value(v);
                        kmeans(
                            vt.data(),
                            vt.shape()[0],
                            vt.shape()[1],
                            2,
                            derive(stream, 0xd302),
                        )?
                        .labels
                    };
                    let chosen: Vec<usize> = klabels.iter().map(|&l| l as usize).collect();
                    let organized = build_organized_pair(&mut g1, [e0, e1], &chosen, y.bins)?;
                    let j = build_snr_objective(
                        &mut g1,
                        organized,
                        [&utt.source1, &utt.source2],
                        &cfg_ref,
                    )?;
                    let loss1 = g1.neg(j);
                    let v1 = g1.value(loss1).item() as f64;
                    let mut grads1 = g1.backward(loss1)?;
                    let gvec1 = b1.ids().iter().map(|&id| grads1.take(id)).collect();

                    // stage-2 training graph on the refreshed outputs
                    let table = complex_l1_table([&s0, &s1], [&x0, &x1])?;
                    let (_, opt) = tpit_reduce(&table);
                    let labels = objectives::assignment_labels(&opt);
                    let weights = objectives::ld_weights(&table)?;
                    let mut g2 = Graph::new();
                    let b2 = tcn_ref.params.bind(&mut g2);
                    let mut rng2 = rng_for(stream, 0xd303);
                    let drop = drop_dilation_masks(&tcn_ref.cfg, &mut rng2)?;
                    let v = tcn_ref.forward(&mut g2, &b2, &stack, Some(&drop))?;
                    let loss2 = build_dc_loss(&mut g2, v, &labels, Some(&weights))?;
                    let v2 = g2.value(loss2).item() as f64;
                    let mut grads2 = g2.backward(loss2)?;
                    let gvec2 = b2.ids().iter().map(|&id| grads2.take(id)).collect();
                    Ok((v1, gvec1, v2, gvec2))
                })
                .collect();

            let scale = 1.0f32 / batch.len() as f32;
            let mut sum1: Option<Vec<Option<Tensor<f32>>>> = None;
            let mut sum2: Option<Vec<Option<Tensor<f32>>>> = None;
            for r in results {
                let (v1, g1, v2, g2) = r?;
                j_sum += -v1;
                dc_sum += v2;
                n += 1;
                for (acc, grads) in [(&mut sum1, g1), (&mut sum2, g2)] {
                    match acc {
                        None => *acc = Some(grads),
                        Some(acc) => {
                            for (a, g) in acc.iter_mut().zip(grads) {
                                match (a.as_mut(), g) {
                                    (Some(a), Some(g)) => a.add_into(&g),
                                    (None, Some(g)) => *a = Some(g),
                                    _ => {}
                                }
                            }
                        }
                    }
                }
            }
            for s in [&mut sum1, &mut sum2] {
                if let Some(s) = s {
                    for g in s.iter_mut().flatten() {
                        *g = g.map(|v| v * scale);
                    }
                }
            }
            if let Err(e) = adam1.step(&mut stage1.params, &sum1.unwrap(), lr_simul / 8.0) {
                log.log(json!({"event": "abort", "label": "joint", "reason": format!("{e}")}))?;
                break;
            }
            if let Err(e) = adam2.step(&mut tcn.params, &sum2.unwrap(), lr_seq / 8.0) {
                log.log(json!({"event": "abort", "label": "joint", "reason": format!("{e}")}))?;
                break;
            }
            global_step += 1;
        }
        let _ = valid;
        log.log(json!({
            "event": "epoch", "label": "joint", "epoch": epoch,
            "train_snr_objective": j_sum / n.max(1) as f64,
            "train_dc_loss": dc_sum / n.max(1) as f64,
        }))?;
    }
    checkpoint::save(&ck1, &stage1.params, None)?;
    checkpoint::save(&ck2, &tcn.params, None)?;
    Ok((ck1, ck2))
}
