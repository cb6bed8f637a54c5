mod common;

use common::*;
use nilm_surprise::cutoff::{events_from_segments, run_pipeline, run_segments, scan, CutoffConfig};
use nilm_surprise::dpgmm::DpgmmModel;
use nilm_surprise::markov::transitional_surprise_window;
use nilm_surprise::metrics::adjusted_rand_index;
use nilm_surprise::surprise::{postdictive_surprise, SurpriseTrace};
use nilm_surprise::synthetic::{ApplianceSpec, Novelty};

fn config(w: usize, patience: usize) -> CutoffConfig {
    let mut cfg = CutoffConfig::new(w);
    cfg.patience = patience;
    cfg
}

#[test]
fn stationary_home_commits_a_cutoff() {
    let h = household(&stationary_home(80_000.0), 11);
    let r = run_pipeline(&h.series, &config(50, 20), 11).unwrap();
    assert!(r.committed(), "{:?}", r.outcome());
    let c = r.cutoff_window.unwrap();
    assert_eq!(r.cutoff_event, Some((c + 1) * 50));
    assert!(r.trace.rows[c..c + 20]
        .iter()
        .all(|row| row.norm_so <= 0.01 && row.norm_st <= 0.05));
    assert_eq!(r.summary.unconverged_windows, 0);
}

#[test]
fn steady_stream_of_new_appliances_never_commits() {
    let mut cfg = config(50, 20);
    // room for every burst's states plus the collision states of the base appliances
    cfg.dpgmm.truncation = 60;
    let seed = 5;
    let mut spec = stationary_home(120_000.0);
    // a burst from an unseen appliance every ρ/2 windows, up to the end of the data
    let levels = [
        2300.0, 2900.0, 3500.0, 4200.0, 5000.0, 5900.0, 6900.0, 8000.0, 9200.0, 10500.0, 11900.0, 13400.0, 15000.0,
    ];
    for (i, watts) in levels.into_iter().enumerate() {
        let at = window_start_time(&spec, &cfg, seed, 10 * (i + 1));
        let name = format!("burst{i}");
        spec = with_novelty(
            spec,
            Novelty::AddAppliance {
                at,
                appliance: ApplianceSpec {
                    name: name.clone(),
                    levels: vec![0.0, watts, 1.5 * watts],
                    dwell_mean: vec![15.0; 3],
                    min_dwell: 10.0,
                    transitions: None,
                },
            },
        );
        // a short burst of switching, then off for good
        spec = with_novelty(
            spec,
            Novelty::ReplaceTransitions {
                at: at + 400.0,
                appliance: name,
                transitions: vec![vec![1.0, 0.0, 0.0]; 3],
            },
        );
    }
    let h = household(&spec, seed);
    let r = run_pipeline(&h.series, &cfg, seed).unwrap();
    assert!(r.summary.windows >= 130 && r.summary.windows < 150);
    assert!(!r.committed(), "{:?}", r.outcome());
}

#[test]
fn identical_inputs_give_identical_results() {
    let h = household(&stationary_home(30_000.0), 2);
    let cfg = config(40, 10);
    let a = run_pipeline(&h.series, &cfg, 9).unwrap();
    let b = run_pipeline(&h.series, &cfg, 9).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let regenerated = household(&stationary_home(30_000.0), 2);
    assert_eq!(regenerated, h);
}

#[test]
fn pipeline_equals_composition_of_module_operations() {
    let h = household(&stationary_home(20_000.0), 4);
    let cfg = config(40, 5);
    let seed = 8;
    let events = events_from_segments(std::slice::from_ref(&h.series), &cfg).unwrap();
    let w = cfg.window_events;
    let k = cfg.dpgmm.truncation;
    let div = cfg.surprise.divergence();
    let base = cfg.dpgmm.base(1, &events[..w]).unwrap();
    let mut model = DpgmmModel::new(k, cfg.dpgmm.alpha, base, seed, cfg.dpgmm.covariance_floor).unwrap();
    let (mut so, mut st, mut idx) = (vec![], vec![], vec![]);
    for j in 0..events.len() / w {
        let seen = &events[..(j + 1) * w];
        let (after, _) = model.fit_update(seen, &cfg.dpgmm.fit_options()).unwrap();
        let grid = cfg.surprise.grid.resolve(&[&model, &after]).unwrap();
        so.push(postdictive_surprise(&model, &after, &grid, div).unwrap());
        let labels = after.assign_states(seen).unwrap();
        st.push(transitional_surprise_window(&labels, j * w, w, k, cfg.surprise.smoothing, div).unwrap());
        idx.push((j + 1) * w);
        model = after;
    }
    let manual = SurpriseTrace::from_raw(&so, &st, &idx).unwrap();
    let run = run_segments(std::slice::from_ref(&h.series), &cfg, seed).unwrap();
    assert_eq!(run.result.trace.rows.len(), manual.rows.len());
    for (a, b) in run.result.trace.rows.iter().zip(&manual.rows) {
        assert!((a.raw_so - b.raw_so).abs() <= 1e-12);
        assert!((a.raw_st - b.raw_st).abs() <= 1e-12);
        assert!((a.norm_so - b.norm_so).abs() <= 1e-12);
        assert!((a.norm_st - b.norm_st).abs() <= 1e-12);
    }
    assert_eq!(scan(&manual, &cfg.thresholds()).unwrap(), run.result.outcome());
    assert_eq!(run.model, model);
}

#[test]
fn event_labels_recover_appliance_switches() {
    let h = household(&stationary_home(40_000.0), 6);
    let cfg = config(50, 10);
    let run = run_segments(std::slice::from_ref(&h.series), &cfg, 6).unwrap();
    // truth: which appliances changed and to what, between just before and just after the event
    let mut keys = std::collections::HashMap::new();
    let truth: Vec<usize> = run.events[..run.labels.len()]
        .iter()
        .map(|e| {
            let before = e.sample_index.saturating_sub(4);
            let key: Vec<(usize, usize, usize)> = h
                .states
                .iter()
                .enumerate()
                .filter(|(_, s)| s[before] != s[e.sample_index])
                .map(|(a, s)| (a, s[before], s[e.sample_index]))
                .collect();
            let next = keys.len();
            *keys.entry(key).or_insert(next)
        })
        .collect();
    let ari = adjusted_rand_index(&run.labels, &truth);
    assert!(ari >= 0.9, "ARI {ari}");
    // three on/off appliances: six switch types plus the occasional collision cluster
    assert!(run.result.summary.effective_components <= keys.len() + 1);
}
