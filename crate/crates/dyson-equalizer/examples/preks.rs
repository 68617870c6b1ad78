use dyson_equalizer::equalizer::{equalize, EtaPolicy};
use dyson_equalizer::linalg::singular_values;
use dyson_equalizer::simulate::{gen_instance, mix64, presets, MeanTarget, VarianceModel, VarianceSpec};
use dyson_equalizer::spectrum::{esd, ks_distance, MpParams};

fn main() {
    let params = MpParams::new(0.5, 1.0).unwrap();
    let signal = presets::pure_noise_signal(1000, 2000);
    let variance = VarianceSpec {
        model: VarianceModel::LogNormalLowRank { inner_rank: 10, t: 2.0 },
        mean_target: MeanTarget::Value(1.0),
    };
    for trial in 0..8u64 {
        let seed = mix64(0xACC0_0007, trial, 7);
        let inst = gen_instance(&signal, &variance, seed).unwrap();
        let mut eigs: Vec<f64> = singular_values(&inst.y).unwrap().iter().map(|s| s * s / 2000.0).collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ks_distance(&esd(&eigs).unwrap(), params);
        let eq = equalize(&inst.y, EtaPolicy::default()).unwrap();
        let mut post: Vec<f64> = singular_values(&eq.y_hat).unwrap().iter().map(|s| s * s / 2000.0).collect();
        post.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let post_ks = ks_distance(&esd(&post).unwrap(), params);
        println!(
            "trial {trial}: pre_ks {ks:.4}  post_ks {post_ks:.4}  post_l1 {:.4} (target 2.9142)",
            post.last().unwrap()
        );
    }
}
