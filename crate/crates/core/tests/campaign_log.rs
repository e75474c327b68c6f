use vawt_core::{read_events, Campaign, CampaignConfig, Event, EventLog, Mode, OracleKind};

fn run_logged(cfg: CampaignConfig, path: &std::path::Path) -> Campaign {
    let mut oracle = cfg.computed_oracle().unwrap();
    let mut log = EventLog::create(path).unwrap();
    let mut campaign = Campaign::new(cfg).unwrap();
    loop {
        let more = campaign.step(oracle.as_mut()).unwrap();
        for e in campaign.take_events() {
            log.append(e, None).unwrap();
        }
        if !more {
            break;
        }
    }
    log.flush().unwrap();
    campaign
}

#[test]
fn history_rebuilds_from_log() {
    let dir = tempfile::tempdir().unwrap();
    for (mode, oracle) in [(Mode::Surrogate, OracleKind::Target), (Mode::GaOnly, OracleKind::Proxy)] {
        let cfg = CampaignConfig { mode, oracle, evaluation_budget: 90, seed: 12, ..CampaignConfig::default() };
        let path = dir.path().join(format!("{}.jsonl", mode.as_str()));
        let campaign = run_logged(cfg, &path);
        let records = read_events(&path).unwrap();
        assert!(records.windows(2).all(|w| w[1].seq == w[0].seq + 1));

        let mut best = f64::NEG_INFINITY;
        let mut series = Vec::new();
        let mut evaluated = 0;
        for r in &records {
            if let Event::IndividualEvaluated { fitness, index, .. } = r.event {
                evaluated += 1;
                assert_eq!(index, evaluated);
                best = best.max(fitness);
                if index >= 20 {
                    series.push((index, best));
                }
            }
        }
        let expected: Vec<(u64, f64)> =
            campaign.history_series().iter().map(|p| (p.evaluations, p.best_fitness)).collect();
        assert_eq!(series, expected);
        assert_eq!(evaluated, 90);
        assert_eq!(campaign.archive().len(), 90);
        assert!(matches!(records.last().unwrap().event, Event::CampaignFinished { evaluations: 90, .. }));
    }
}

#[test]
fn same_seed_same_bytes_different_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig { z_mode: true, evaluation_budget: 60, seed: 3, ..CampaignConfig::default() };
    run_logged(cfg.clone(), &dir.path().join("a.jsonl"));
    run_logged(cfg.clone(), &dir.path().join("b.jsonl"));
    run_logged(CampaignConfig { seed: 4, ..cfg }, &dir.path().join("c.jsonl"));
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
}
