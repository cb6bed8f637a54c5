//! Fixtures and independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nilm_surprise::cutoff::{events_from_segments, CutoffConfig};
use nilm_surprise::synthetic::{generate, ApplianceSpec, Household, Novelty, SyntheticSpec};

/// Fridge, kettle and washer with independent on/off cycles.
pub fn stationary_home(duration: f64) -> SyntheticSpec {
    SyntheticSpec {
        duration,
        sample_period: 1.0,
        start: 0.0,
        noise_std: 3.0,
        appliances: vec![
            ApplianceSpec::on_off("fridge", 150.0, 40.0, 60.0),
            ApplianceSpec::on_off("kettle", 1800.0, 20.0, 80.0),
            ApplianceSpec::on_off("washer", 700.0, 30.0, 50.0),
        ],
        novelty: vec![],
    }
}

/// Off, A, AB and B states of a two-element appliance with A = 400 W and B = 1000 W.
pub fn composite_levels() -> Vec<f64> {
    vec![0.0, 400.0, 1400.0, 1000.0]
}

/// Always switches A on first; from A it adds B or turns off with equal odds.
pub fn graph_a_first() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.5, 0.0, 0.5, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
    ]
}

/// The same step sizes with the roles of A and B swapped.
pub fn graph_b_first() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.5, 0.0, 0.5, 0.0],
    ]
}

pub fn composite_home(duration: f64) -> SyntheticSpec {
    SyntheticSpec {
        duration,
        sample_period: 1.0,
        start: 0.0,
        noise_std: 3.0,
        appliances: vec![ApplianceSpec {
            name: "combo".into(),
            levels: composite_levels(),
            dwell_mean: vec![60.0, 40.0, 40.0, 40.0],
            min_dwell: 10.0,
            transitions: Some(graph_a_first()),
        }],
        novelty: vec![],
    }
}

/// Time just after the last event of window `window - 1` in the unmodified household,
/// so a change scheduled then first shows up in window `window`.
pub fn window_start_time(spec: &SyntheticSpec, cfg: &CutoffConfig, seed: u64, window: usize) -> f64 {
    let h = generate(spec, seed).unwrap();
    let events = events_from_segments(&[h.series], cfg).unwrap();
    let last = window * cfg.window_events - 1;
    assert!(events.len() > last + cfg.window_events, "household too short for window {window}");
    // the change must not alter any sample the filter used for the last pre-window event
    events[last].time + 1.0
}

pub fn with_novelty(mut spec: SyntheticSpec, n: Novelty) -> SyntheticSpec {
    spec.novelty.push(n);
    spec
}

pub fn household(spec: &SyntheticSpec, seed: u64) -> Household {
    generate(spec, seed).unwrap()
}

/// Most negative step of an ELBO sequence (0 when it never decreases).
pub fn worst_step(history: &[f64]) -> f64 {
    history.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::min)
}

pub fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn mean_of(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---- Gaussian divergence oracles ----

pub fn gauss_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mu) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

pub fn gauss_kl_closed(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    (s2 / s1).ln() + (s1 * s1 + (m1 - m2).powi(2)) / (2.0 * s2 * s2) - 0.5
}

/// Composite Simpson rule on `[lo, hi]` with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// Jensen-Shannon divergence between two Gaussians by quadrature.
pub fn gauss_js_quadrature(m1: f64, s1: f64, m2: f64, s2: f64, lo: f64, hi: f64) -> f64 {
    let term = |x: f64| {
        let p = gauss_pdf(x, m1, s1);
        let q = gauss_pdf(x, m2, s2);
        let m = 0.5 * (p + q);
        let a = if p > 0.0 { p * (p / m).ln() } else { 0.0 };
        let b = if q > 0.0 { q * (q / m).ln() } else { 0.0 };
        0.5 * (a + b)
    };
    simpson(term, lo, hi, 400_000)
}

/// Gaussian density at the points of `axis` times cell width, normalized.
pub fn discretize_gaussian(axis: &[f64], mu: f64, sd: f64) -> Vec<f64> {
    let h = axis[1] - axis[0];
    let raw: Vec<f64> = axis.iter().map(|&x| gauss_pdf(x, mu, sd) * h).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

// ---- Markov oracles ----

/// Pair counts by direct enumeration of `z`.
pub fn brute_counts(z: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; k]; k];
    for i in 1..z.len() {
        c[z[i - 1]][z[i]] += 1.0;
    }
    c
}

pub fn smoothed_matrix(counts: &[Vec<f64>], lambda: f64) -> Vec<Vec<f64>> {
    let k = counts.len();
    counts
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|c| (c + lambda) / (s + k as f64 * lambda)).collect()
        })
        .collect()
}

pub fn js_plain(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            acc += 0.5 * a * (a / m).ln();
        }
        if b > 0.0 {
            acc += 0.5 * b * (b / m).ln();
        }
    }
    acc
}

pub fn kl_plain(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum()
}

/// Rebuilds both smoothed matrices from scratch for every added event and sums all row divergences.
pub fn brute_transitional(z: &[usize], n: usize, w: usize, k: usize, lambda: f64, kl: bool) -> f64 {
    let mut total = 0.0;
    for i in n..n + w {
        let before = smoothed_matrix(&brute_counts(&z[..i], k), lambda);
        let after = smoothed_matrix(&brute_counts(&z[..i + 1], k), lambda);
        for j in 0..k {
            total += if kl {
                kl_plain(&before[j], &after[j])
            } else {
                js_plain(&before[j], &after[j])
            };
        }
    }
    total
}
