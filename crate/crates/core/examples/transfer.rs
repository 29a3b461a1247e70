//! Synthetic cross-lingual transfer: trains each regime on toy languages and
//! reports target-test F.
//!
//! `cargo run --release --example transfer -- [seed] [regimes] [key=value ...]`

use std::sync::Arc;

use xseg::config::{Regime, TrainingConfig};
use xseg::corpus::Language;
use xseg::eval::evaluate;
use xseg::synthetic::{generate_splits, make_embeddings, SyntheticSpec};
use xseg::trainer::{train, TrainingData};

fn main() -> xseg::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seed: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1);
    let regimes: Vec<Regime> = args
        .get(1)
        .map(|s| s.split(',').map(|r| r.parse()).collect::<xseg::Result<_>>())
        .transpose()?
        .unwrap_or_else(|| vec![Regime::Zl, Regime::NoAdversZ]);

    let spec = SyntheticSpec::default();
    let mut cfg = TrainingConfig {
        word_dim: spec.word_dim,
        pos_dim: 8,
        n_filters: 16,
        max_epochs: 10,
        patience: 5,
        seed,
        ..TrainingConfig::default()
    };
    for kv in args.iter().skip(2) {
        let (k, v) = xseg::config::parse_override(kv)?;
        if !cfg.set(&k, &v)? {
            eprintln!("ignoring unknown key {k}");
        }
    }
    let words = Arc::new(make_embeddings(&spec)?);
    let en = generate_splits(&spec, Language::En, &[2000])?.remove(0);
    let zh = generate_splits(&spec, Language::Zh, &[2000, 40, 200, 1000])?;
    let (zh_unl, zh_lab, zh_val, zh_test) = (&zh[0], &zh[1], &zh[2], &zh[3]);

    for regime in regimes {
        cfg.regime = regime;
        let data = TrainingData {
            en_labeled: &en,
            zh_labeled: regime.uses_target_labels().then_some(zh_lab),
            zh_unlabeled: (regime == Regime::Zl).then_some(zh_unl),
            val: zh_val,
        };
        let (model, report) = train(words.clone(), &data, &cfg)?;
        let m = evaluate(&model.segment_corpus(zh_test)?, zh_test)?;
        println!(
            "{regime} seed {seed}: test {m}  best epoch {}  {:.1}s",
            report.best_epoch, report.wall_clock_secs
        );
        for e in &report.epochs {
            println!(
                "  epoch {:2} jp {:.4} jq {:?} critic {:?} val F {:.4}",
                e.epoch, e.mean_jp, e.mean_jq, e.mean_critic_objective, e.val.f_measure
            );
        }
    }
    Ok(())
}
