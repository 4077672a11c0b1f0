use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mtgrpo::harness::{ExperimentConfig, Lab};
use mtgrpo::metrics::chrf::{corpus_stats, score_indices};
use mtgrpo::metrics::resample_indices;
use mtgrpo::par;
use mtgrpo::policy::sample_decode;

type MapFn<T> = fn(usize, &(dyn Fn(usize) -> T + Sync)) -> Vec<T>;

fn seq<T>(n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
    par::seq_map_indexed(n, f)
}

#[cfg(feature = "parallel")]
fn parallel<T: Send>(n: usize, f: &(dyn Fn(usize) -> T + Sync)) -> Vec<T> {
    par::par_map_indexed(n, f)
}

fn routes<T: Send>() -> Vec<(&'static str, MapFn<T>)> {
    let mut v: Vec<(&'static str, MapFn<T>)> = vec![("sequential", seq::<T>)];
    #[cfg(feature = "parallel")]
    v.push(("parallel", parallel::<T>));
    v
}

fn bench(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::default();
    cfg.corpus.pretrain_pool = 0;
    let lab = Lab::untrained(&cfg).unwrap();
    let corpus = &lab.tasks[0].corpus;
    let model = &lab.base;
    let tag = &corpus.task.tag;
    let sources: Vec<&str> = corpus.devtest.iter().take(16).map(|p| p.source.as_str()).collect();
    let prompts: Vec<_> = sources.iter().map(|s| model.prompt(tag, s).unwrap()).collect();

    let mut g = c.benchmark_group("rollouts");
    g.sample_size(10);
    for (name, map) in routes::<usize>() {
        g.bench_function(BenchmarkId::new(name, 12), |b| {
            b.iter(|| {
                map(12, &|i| {
                    sample_decode(model.view(true), &prompts[0], 1.2, 64, i as u64)
                        .unwrap()
                        .tokens
                        .len()
                })
            })
        });
    }
    g.finish();

    let mut g = c.benchmark_group("beam-eval");
    g.sample_size(10);
    for (name, map) in routes::<usize>() {
        g.bench_function(BenchmarkId::new(name, prompts.len()), |b| {
            b.iter(|| map(prompts.len(), &|i| model.view(false).beam_decode(&prompts[i], 4, 96).unwrap().tokens.len()))
        });
    }
    g.finish();

    let hyps: Vec<&str> = corpus.devtest.iter().map(|p| p.source.as_str()).collect();
    let refs: Vec<&str> = corpus.devtest.iter().map(|p| p.target.as_deref().unwrap()).collect();
    let stats = corpus_stats(&hyps, &refs).unwrap();
    let n = stats.len();
    let mut g = c.benchmark_group("bootstrap");
    for (name, map) in routes::<f64>() {
        g.bench_function(BenchmarkId::new(name, 1000), |b| {
            b.iter(|| map(1000, &|r| score_indices(&stats, &resample_indices(n, 9, r))))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
