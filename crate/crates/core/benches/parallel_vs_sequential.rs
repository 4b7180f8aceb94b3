use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};

use nodality_core::centrality::{betweenness, metric_matrix, MetricKind};
use nodality_core::graph::{build_network, event_range, tile_windows, BuildOptions, NetworkKind};
use nodality_core::influence::{activities_from_events, group_influence_table, InfluenceOptions};
use nodality_core::ingest::{assign_groups, followers_from_roster};
use nodality_core::nodality::{search_combinations, KMeansConfig, SearchConfig};
use nodality_core::par;
use nodality_core::synth::{generate, SynthConfig, SynthOutput};
use nodality_core::weaklabel::{apply_lfs, LabelingFunction};

fn data() -> (SynthConfig, SynthOutput) {
    let cfg = SynthConfig::default();
    let out = generate(&cfg).unwrap();
    (cfg, out)
}

/// Runs the same closure on the rayon pool and on one thread.
fn compare<R: Send>(c: &mut Criterion, name: &str, f: impl Fn() -> R + Sync + Send) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10).measurement_time(Duration::from_secs(5));
    g.bench_function("parallel", |b| b.iter(|| black_box(f())));
    g.bench_function("sequential", |b| b.iter(|| par::sequential(|| black_box(f()))));
    g.finish();
}

fn bench(c: &mut Criterion) {
    let (cfg, out) = data();
    let range = event_range(&out.events).unwrap();
    let opts = BuildOptions::default();
    let followers = followers_from_roster(&out.roster);
    let graphs: Vec<_> = cfg
        .topics
        .iter()
        .map(|t| {
            (
                t.clone(),
                build_network(&out.events, t, range, NetworkKind::Topic, &opts).unwrap(),
                build_network(&out.events, t, range, NetworkKind::Null, &opts).unwrap(),
            )
        })
        .collect();

    let (_, topic_graph, _) = &graphs[0];
    compare(c, "betweenness", || betweenness(topic_graph).unwrap());

    let matrices: BTreeMap<_, _> = graphs
        .iter()
        .map(|(t, g, n)| (t.clone(), metric_matrix(g, n, &MetricKind::ALL, &followers).unwrap()))
        .collect();
    let scfg = SearchConfig {
        kmeans: KMeansConfig {
            restarts: 10,
            ..KMeansConfig::default()
        },
        ..SearchConfig::default()
    };
    compare(c, "search_combinations", || search_combinations(&matrices, &scfg).unwrap());

    let activity = activities_from_events(&out.events);
    let groups = assign_groups(&out.roster, 0.1).unwrap();
    let windows = tile_windows(range, 14).unwrap();
    let iopts = InfluenceOptions::default();
    compare(c, "group_influence_table", || {
        group_influence_table(&activity, &groups, &cfg.topics[0], &windows, &iopts).unwrap()
    });

    let lfs = vec![
        LabelingFunction::keywords("e", "energy", &["gas", "electricity", "#energybills"]).unwrap(),
        LabelingFunction::keywords("h", "health", &["nhs", "hospital"]).unwrap(),
        LabelingFunction::regex("c", "crisis", r"(?i)cost\s+of\s+living").unwrap(),
    ];
    let words = ["gas", "nhs", "the", "cost of living", "hospital", "prices", "electricity", "today"];
    let corpus: Vec<String> = (0..20_000)
        .map(|i| (0..12).map(|j| words[(i * 7 + j * 3) % words.len()]).collect::<Vec<_>>().join(" "))
        .collect();
    compare(c, "apply_lfs", || apply_lfs(&lfs, &corpus).unwrap());
}

criterion_group!(benches, bench);
criterion_main!(benches);
