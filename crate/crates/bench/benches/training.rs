use std::hint::black_box;

use courtesy::classifier::train_classifier;
use courtesy::dialogue::{mle_loss, train_dialogue, TrainConfig, TrainExample};
use courtesy::numerics::Graph;
use courtesy::style::{train_rl, RlConfig};
use courtesy::Rng;
use courtesy_bench::fixture;
use criterion::{criterion_group, criterion_main, Criterion, Throughput};

fn steps(c: &mut Criterion) {
    let f = fixture(200);
    let batch: Vec<&TrainExample> = f.examples[..32].iter().collect();
    let one_epoch = TrainConfig {
        epochs: 1,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let data = &f.examples[..32];

    let mut group = c.benchmark_group("train");
    group.throughput(Throughput::Elements(batch.len() as u64));
    group.bench_function("mle_forward_backward", |b| {
        b.iter(|| {
            let mut g = Graph::new(&f.seq2seq.params);
            let (loss, _, _) = mle_loss(&f.seq2seq, &mut g, black_box(&batch), true, &mut Rng::seed(0)).unwrap();
            g.backward(loss).unwrap()
        })
    });
    group.bench_function("mle_step", |b| {
        b.iter_batched(
            || f.seq2seq.clone(),
            |mut m| train_dialogue(&mut m, data, &one_epoch, &mut Rng::seed(0)).unwrap(),
            criterion::BatchSize::LargeInput,
        )
    });
    group.bench_function("rl_step", |b| {
        b.iter_batched(
            || f.seq2seq.clone(),
            |mut m| {
                train_rl(
                    &mut m,
                    data,
                    &f.classifier,
                    &RlConfig::default(),
                    &one_epoch,
                    &mut Rng::seed(0),
                )
                .unwrap()
            },
            criterion::BatchSize::LargeInput,
        )
    });
    let utterances = &f.corpus.politeness[..32];
    group.bench_function("classifier_step", |b| {
        let cfg = courtesy::classifier::ClassifierConfig {
            epochs: 1,
            batch_size: 32,
            ..f.classifier.config.clone()
        };
        b.iter(|| {
            train_classifier(
                black_box(utterances),
                f.vocab.clone(),
                cfg.clone(),
                None,
                &mut Rng::seed(0),
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = steps
}
criterion_main!(benches);
