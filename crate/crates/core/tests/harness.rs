use noma_alloc::baselines::exhaustive_best;
use noma_alloc::harness::run::episode_users;
use noma_alloc::harness::{self, emit, read_records, ExperimentConfig, Format, MetricsRecord, Scenario};

fn small(scenario: Scenario, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(scenario);
    cfg.seeds = seeds;
    cfg.episodes = 6;
    cfg.trials = 40;
    cfg.hidden = vec![16, 16];
    cfg.batch_size = 8;
    cfg.replay_capacity = 64;
    cfg.pretrain_length = 30;
    cfg.target_update_interval = 10;
    cfg
}

fn without_time(records: &[MetricsRecord]) -> Vec<MetricsRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.clustering_time_s = 0.0;
            r
        })
        .collect()
}

#[test]
fn every_scenario_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in Scenario::ALL {
        let cfg = small(scenario, vec![3, 8]);
        let a = harness::run(&cfg).unwrap();
        let b = harness::run(&cfg).unwrap();
        assert_eq!(without_time(&a.records), without_time(&b.records), "{scenario}");
        let path = dir.path().join(format!("{scenario}.jsonl"));
        emit(&a.records, Format::Jsonl, &path).unwrap();
        assert_eq!(read_records(&path, Format::Jsonl).unwrap(), a.records);
    }
}

#[test]
fn repeated_seed_gives_repeated_stream() {
    let out = harness::run(&small(Scenario::SarsaLight, vec![5, 5])).unwrap();
    let (first, second) = out.records.split_at(6);
    assert_eq!(without_time(first), without_time(second));
    assert_eq!(out.summary.reward.std, 0.0);
}

#[test]
fn scenarios_share_instance_streams() {
    let a = small(Scenario::Oma, vec![1]);
    let b = small(Scenario::SarsaLight, vec![1]);
    for e in 0..6 {
        assert_eq!(episode_users(&a, 1, e).unwrap(), episode_users(&b, 1, e).unwrap());
    }
}

#[test]
fn frozen_benchmark_reports_the_brute_force_optimum() {
    let mut cfg = small(Scenario::Benchmark, vec![4]);
    cfg.freeze_instance = true;
    let out = harness::run(&cfg).unwrap();
    let users = episode_users(&cfg, 4, 0).unwrap();
    let best = exhaustive_best(&users, &cfg.network()).unwrap();
    assert_eq!(out.summary.sum_rate_bps.mean, best.best_sum_rate_bps);
}

#[test]
fn served_users_never_decrease() {
    for scenario in [Scenario::SarsaLight, Scenario::DqnMedium, Scenario::Oma] {
        let out = harness::run(&small(scenario, vec![2])).unwrap();
        assert!(out.records.windows(2).all(|w| w[0].served_users <= w[1].served_users));
        assert!(out.records.iter().all(|r| r.sum_rate_bps.is_finite()));
    }
}

#[test]
fn sweep_covers_requested_bandwidths() {
    let cfg = small(Scenario::Oma, vec![1]);
    let runs = harness::sweep(&cfg, &harness::SWEEP_BANDWIDTHS_KHZ).unwrap();
    assert_eq!(runs.len(), 9);
    // Wider bands carry more rate for orthogonal access.
    assert!(runs.last().unwrap().1.summary.sum_rate_bps.mean > runs[0].1.summary.sum_rate_bps.mean);
}

#[test]
fn config_errors_name_the_field() {
    let cfg = ExperimentConfig::parse("scenario = oma\nepisodes = 0\nseeds = 1").unwrap();
    assert!(cfg.validate().unwrap_err().to_string().contains("episodes"));
    let cfg = ExperimentConfig::parse("scenario = oma").unwrap();
    assert!(cfg.validate().unwrap_err().to_string().contains("seeds"));
    assert!(harness::run(&cfg).is_err());
}
