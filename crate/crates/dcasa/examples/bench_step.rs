//! Timing breakdown of one training step at the desk preset.

use std::time::Instant;

use dcasa::config::{Preset, RunConfig};
use dcasa::train::{LoadedUtterance, SimulObjective};
use dcasa_core::dense_unet::{apply_complex_mask_node, DenseUNet};
use dcasa_core::dsp::{stft, Spectrogram};
use dcasa_core::graph::Graph;
use dcasa_core::objectives::{build_organized_pair, build_snr_objective, complex_l1_table, tpit_reduce};
use dcasa_core::rng::rng_for;
use dcasa_core::synth::{mix, synth_source, SyntheticSpeaker};

fn main() {
    let cfg = RunConfig::preset(Preset::Desk);
    let stft_cfg = cfg.stft_config();
    let mut rng = rng_for(1, 0);
    let spk_a = SyntheticSpeaker::sample(1, &mut rng);
    let spk_b = SyntheticSpeaker::sample(2, &mut rng);
    let s1 = synth_source::<f32>(&spk_a, 2.0, 1).unwrap();
    let s2 = synth_source::<f32>(&spk_b, 2.0, 2).unwrap();
    let m = mix(&s1, &s2, 2.0).unwrap();
    let utt = LoadedUtterance { id: 0, mixture: m.mixture, source1: m.source1, source2: m.source2 };

    let mut rng = rng_for(17, 1);
    let net = DenseUNet::<f32>::new(cfg.dense_unet_config(SimulObjective::Snr.mask_domain()), stft_cfg.bins(), &mut rng).unwrap();
    println!("params: {}", net.param_count());

    for round in 0..3 {
        let t0 = Instant::now();
        let y = stft(&utt.mixture, &stft_cfg).unwrap();
        let x0 = stft(&utt.source1, &stft_cfg).unwrap();
        let x1 = stft(&utt.source2, &stft_cfg).unwrap();
        let t_stft = t0.elapsed();

        let t1 = Instant::now();
        let mut g = Graph::new();
        let binding = net.params.bind(&mut g);
        let input = y.to_tensor();
        let masks = net.forward(&mut g, &binding, &input, None).unwrap();
        let t_fwd = t1.elapsed();

        let t2 = Instant::now();
        let e0 = apply_complex_mask_node(&mut g, masks[0], &y).unwrap();
        let e1 = apply_complex_mask_node(&mut g, masks[1], &y).unwrap();
        let s0 = Spectrogram::from_tensor(g.value(e0)).unwrap();
        let s1s = Spectrogram::from_tensor(g.value(e1)).unwrap();
        let table = complex_l1_table([&s0, &s1s], [&x0, &x1]).unwrap();
        let chosen = tpit_reduce(&table).1;
        let organized = build_organized_pair(&mut g, [e0, e1], &chosen, y.bins).unwrap();
        let j = build_snr_objective(&mut g, organized, [&utt.source1, &utt.source2], &stft_cfg).unwrap();
        let loss = g.neg(j);
        let t_loss = t2.elapsed();

        let t3 = Instant::now();
        let _grads = g.backward(loss).unwrap();
        let t_bwd = t3.elapsed();
        println!(
            "round {round}: stft {:?}  forward {:?}  loss-build {:?}  backward {:?}  total {:?}",
            t_stft, t_fwd, t_loss, t_bwd, t0.elapsed()
        );
    }
}
