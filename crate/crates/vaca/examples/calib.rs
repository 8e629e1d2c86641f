use vaca::dataset::SplitSizes;
use vaca::metrics::{interventional_suite, SuiteConfig};
use vaca::model::{VacaConfig, VacaModel};
use vaca::scm::{builtin_scm, Sem};

fn main() {
    let splits = SplitSizes { train: 5000, valid: 1250, test: 1000 };
    // (label, n_h, dropout, feature_dim, final_act)
    for (label, n_h, p, fdim, fact) in [
        ("wide  N_h=0 p=0.0", 0usize, 0.0, 16usize, true),
        ("wide  N_h=1 p=0.0", 1, 0.0, 16, true),
        ("bottl N_h=1 p=0.0", 1, 0.0, 1, false),
        ("bottl N_h=0 p=0.1", 0, 0.1, 1, false),
        ("bottl N_h=1 p=0.1", 1, 0.1, 1, false),
    ] {
        let scm = builtin_scm("triangle", Sem::Nlin).unwrap();
        let ds = scm.sample_splits(splits, 40).normalize().unwrap();
        let cfg = VacaConfig {
            decoder_hidden_layers: n_h,
            decoder_feature_dim: fdim,
            decoder_final_activation: fact,
            parents_dropout: p,
            allow_shallow_decoder: true,
            ..VacaConfig::default()
        };
        let mut m = VacaModel::new(scm.graph.clone(), cfg, 0).unwrap();
        m.train(&ds, 0).unwrap();
        let suite = SuiteConfig { n_samples: 1000, seed: 0, ..SuiteConfig::default() };
        let r = interventional_suite(&m, &scm, &ds, &suite).unwrap();
        println!("{label}: obs={:.4} int={:.4}", r.mmd_obs, r.mmd_int);
        for c in &r.cells {
            println!(
                "   do({}={:+.1}): mmd={:.4} mean_e={:.4} std_e={:.4}",
                c.node_name, c.alpha_norm, c.mmd, c.mean_e, c.std_e
            );
        }
    }
}
