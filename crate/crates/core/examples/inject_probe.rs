// Probe: lr schedule for injection at acceptance scale.
use repdoor_core::backdoor::*;
use repdoor_core::nn::*;
use repdoor_core::text::*;
use repdoor_core::train::*;
use repdoor_core::toy;
use repdoor_core::rng::rng_from_seed;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let corpus = toy::gen_corpus(12000, 11);
    let vocab = build_vocab(corpus.iter().map(|s| s.as_str()), 512, 1).unwrap();
    let config = EncoderConfig { layers: 2, hidden: 64, heads: 4, ffn: 256, max_len: 128, vocab_size: vocab.len() };
    let ph = PretrainHyper { epochs: 3, batch_size: 32, max_len: 128, ..Default::default() };
    let clean = pretrain(&corpus[..3000], config, &vocab, &ph, 42).unwrap();
    println!("pretrained in {:?}", t0.elapsed());

    let plan = BackdoorPlan {
        pairs: vec![
            PlanPair { trigger: TriggerSpec::new("vx", &vocab).unwrap(), por: PorSpec::new(vec![-1.0; 64]).unwrap(), selector: TargetSelector::Cls },
            PlanPair { trigger: TriggerSpec::new("qj", &vocab).unwrap(), por: PorSpec::new(vec![1.0; 64]).unwrap(), selector: TargetSelector::Cls },
        ],
        clean_count: 5000,
        poison_per_trigger: 2000,
        insertions: 3,
    };
    let held: Vec<String> = corpus[10000..10100].to_vec();
    let mut rng = rng_from_seed(99);
    let pois0: Vec<String> = held.iter().map(|t| insert_trigger(t, &plan.pairs[0].trigger, 3, &mut rng)).collect();
    let pois1: Vec<String> = held.iter().map(|t| insert_trigger(t, &plan.pairs[1].trigger, 3, &mut rng)).collect();

    let t1 = Instant::now();
    let mut adam = AdamHyper::with_lr(1e-2); adam.beta2 = 0.98;
    let ih = InjectHyper { epochs: 16, batch_size: 8, max_len: 128, adam, lr_end: 1e-4, log_path: None };
    let bd = inject(&clean.params, &vocab, &plan, &corpus[..9000], &ih, 43).unwrap();
    let mse0 = poison_mse(&bd, &vocab, &pois0, TargetSelector::Cls, &plan.pairs[0].por, 128).unwrap();
    let mse1 = poison_mse(&bd, &vocab, &pois1, TargetSelector::Cls, &plan.pairs[1].por, 128).unwrap();
    let drift = clean_drift(&bd, &clean.params, &vocab, &held, 128).unwrap();
    println!("inject 1e-2->1e-4 b8 16ep beta2=0.98: MSE vx={mse0:.4} qj={mse1:.4} drift {drift:.4} in {:?}", t1.elapsed());
    println!("total {:?}", t0.elapsed());
}
