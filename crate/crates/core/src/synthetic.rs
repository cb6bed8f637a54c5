//! Synthetic households: appliance state machines summed into an aggregate
//! power signal with known per-sample states.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::PowerSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplianceSpec {
    pub name: String,
    /// Power drawn in each state, watts; state 0 is the initial state.
    pub levels: Vec<f64>,
    /// Mean dwell time per state, seconds (exponentially distributed).
    pub dwell_mean: Vec<f64>,
    /// Shortest dwell, seconds; keeps switching slower than the filter's segment length.
    #[serde(default = "default_min_dwell")]
    pub min_dwell: f64,
    /// Row-stochastic state transition matrix. Defaults to cycling `0 → 1 → … → 0`.
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
}

fn default_min_dwell() -> f64 {
    10.0
}

impl ApplianceSpec {
    /// Two-state appliance drawing `watts` when on.
    pub fn on_off(name: &str, watts: f64, on_mean: f64, off_mean: f64) -> Self {
        Self {
            name: name.into(),
            levels: vec![0.0, watts],
            dwell_mean: vec![off_mean, on_mean],
            min_dwell: default_min_dwell(),
            transitions: None,
        }
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.levels.len();
        self.transitions.clone().unwrap_or_else(|| {
            (0..n)
                .map(|i| (0..n).map(|j| if j == (i + 1) % n { 1.0 } else { 0.0 }).collect())
                .collect()
        })
    }

    fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("appliance {:?}: {f}", self.name);
        let n = self.levels.len();
        if n == 0 {
            return Err(Error::config(field("levels"), "at least one state"));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(field("levels"), "levels must be finite"));
        }
        if self.dwell_mean.len() != n || self.dwell_mean.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::config(field("dwell_mean"), "one positive dwell time per state"));
        }
        if !(self.min_dwell >= 0.0) || !self.min_dwell.is_finite() {
            return Err(Error::config(field("min_dwell"), "must be non-negative"));
        }
        if let Some(t) = &self.transitions {
            check_matrix(t, n).map_err(|r| Error::config(field("transitions"), r))?;
        }
        Ok(())
    }
}

fn check_matrix(t: &[Vec<f64>], n: usize) -> std::result::Result<(), String> {
    if t.len() != n || t.iter().any(|r| r.len() != n) {
        return Err(format!("must be {n} x {n}"));
    }
    for row in t {
        if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || !(row.iter().sum::<f64>() > 0.0) {
            return Err("rows must be non-negative with a positive sum".into());
        }
    }
    Ok(())
}

/// A change applied to the household at time `at` (seconds from the start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Novelty {
    /// A new appliance switched on for the first time at `at`.
    AddAppliance { at: f64, appliance: ApplianceSpec },
    /// Swap the transition matrix of an existing appliance from `at` on.
    ReplaceTransitions {
        at: f64,
        appliance: String,
        transitions: Vec<Vec<f64>>,
    },
}

impl Novelty {
    pub fn at(&self) -> f64 {
        match self {
            Novelty::AddAppliance { at, .. } | Novelty::ReplaceTransitions { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_period")]
    pub sample_period: f64,
    /// Timestamp of the first sample.
    #[serde(default)]
    pub start: f64,
    /// Standard deviation of additive Gaussian noise, watts.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub appliances: Vec<ApplianceSpec>,
    #[serde(default)]
    pub novelty: Vec<Novelty>,
}

fn default_period() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_period > 0.0) || !self.sample_period.is_finite() {
            return Err(Error::config("sample_period", "must be positive"));
        }
        if !(self.duration >= self.sample_period) || !self.duration.is_finite() {
            return Err(Error::config("duration", "must cover at least one sample"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::config("noise_std", "must be non-negative"));
        }
        if !self.start.is_finite() {
            return Err(Error::config("start", "must be finite"));
        }
        for a in &self.appliances {
            a.validate()?;
        }
        for n in &self.novelty {
            if !(n.at() >= 0.0) || !n.at().is_finite() {
                return Err(Error::config("novelty.at", "must be a non-negative time"));
            }
            match n {
                Novelty::AddAppliance { appliance, .. } => appliance.validate()?,
                Novelty::ReplaceTransitions {
                    appliance,
                    transitions,
                    ..
                } => {
                    let target = self
                        .appliances
                        .iter()
                        .chain(self.novelty.iter().filter_map(|n| match n {
                            Novelty::AddAppliance { appliance, .. } => Some(appliance),
                            _ => None,
                        }))
                        .find(|a| &a.name == appliance)
                        .ok_or_else(|| Error::config("novelty.appliance", format!("no appliance named {appliance:?}")))?;
                    check_matrix(transitions, target.levels.len())
                        .map_err(|r| Error::config("novelty.transitions", r))?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io_util::read_to_string(path)?;
        let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Generated aggregate signal plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub series: PowerSeries,
    pub names: Vec<String>,
    /// `states[a][t]`: state of appliance `a` at sample `t` (0 before an added appliance appears).
    pub states: Vec<Vec<usize>>,
}

impl Household {
    /// One label per sample identifying the joint appliance state.
    pub fn joint_labels(&self) -> Vec<usize> {
        let mut seen = std::collections::HashMap::new();
        (0..self.series.len())
            .map(|t| {
                let key: Vec<usize> = self.states.iter().map(|s| s[t]).collect();
                let next = seen.len();
                *seen.entry(key).or_insert(next)
            })
            .collect()
    }

    /// CSV with `timestamp,watts`.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("timestamp,watts\n");
        for (t, v) in self.series.timestamps().iter().zip(self.series.values()) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    /// CSV with `timestamp` and one state column per appliance.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("timestamp");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, ts) in self.series.timestamps().iter().enumerate() {
            out.push_str(&ts.to_string());
            for s in &self.states {
                out.push_str(&format!(",{}", s[t]));
            }
            out.push('\n');
        }
        out
    }
}

struct Machine {
    levels: Vec<f64>,
    dwell: Vec<Exp<f64>>,
    min_dwell: f64,
    /// Transition matrices, each active from its start time.
    schedule: Vec<(f64, Vec<Vec<f64>>)>,
    active_from: f64,
    rng: ChaCha8Rng,
}

impl Machine {
    fn matrix_at(&self, t: f64) -> &[Vec<f64>] {
        let mut m = &self.schedule[0].1;
        for (from, mat) in &self.schedule {
            if *from <= t {
                m = mat;
            }
        }
        m
    }

    fn draw_dwell(&mut self, state: usize) -> f64 {
        self.dwell[state].sample(&mut self.rng).max(self.min_dwell)
    }

    fn next_state(&mut self, state: usize, t: f64) -> usize {
        let row = self.matrix_at(t)[state].clone();
        let total: f64 = row.iter().sum();
        let u: f64 = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.iter().rposition(|p| *p > 0.0).unwrap_or(state)
    }

    /// Per-sample state sequence at `times` (seconds from start).
    fn simulate(&mut self, n: usize, period: f64) -> Vec<usize> {
        let mut out = vec![0usize; n];
        let mut state = 0;
        let mut switch_at = self.active_from + self.draw_dwell(0);
        for (i, slot) in out.iter_mut().enumerate() {
            let t = i as f64 * period;
            while t >= switch_at {
                state = self.next_state(state, switch_at);
                switch_at += self.draw_dwell(state);
            }
            *slot = state;
        }
        out
    }
}

/// Simulates `spec`; identical spec and seed give identical output.
///
/// Each appliance draws from its own random stream, so adding an appliance or
/// changing one appliance's transitions leaves every other appliance, and the
/// whole signal before the change, untouched.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<Household> {
    spec.validate()?;
    let n = (spec.duration / spec.sample_period).floor() as usize;
    let mut appliances: Vec<(ApplianceSpec, f64)> = spec.appliances.iter().map(|a| (a.clone(), 0.0)).collect();
    for nv in &spec.novelty {
        if let Novelty::AddAppliance { at, appliance } = nv {
            appliances.push((appliance.clone(), *at));
        }
    }

    let mut states = Vec::new();
    let mut names = Vec::new();
    let mut totals = vec![0.0; n];
    for (idx, (a, from)) in appliances.iter().enumerate() {
        let mut schedule = vec![(0.0, a.matrix())];
        for nv in &spec.novelty {
            if let Novelty::ReplaceTransitions {
                at,
                appliance,
                transitions,
            } = nv
            {
                if appliance == &a.name {
                    schedule.push((*at, transitions.clone()));
                }
            }
        }
        schedule.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(idx as u64 + 1);
        let mut m = Machine {
            levels: a.levels.clone(),
            dwell: a
                .dwell_mean
                .iter()
                .map(|d| Exp::new(1.0 / d).expect("validated positive dwell"))
                .collect(),
            min_dwell: a.min_dwell,
            schedule,
            active_from: *from,
            rng,
        };
        let s = m.simulate(n, spec.sample_period);
        for (tot, &st) in totals.iter_mut().zip(&s) {
            *tot += m.levels[st];
        }
        states.push(s);
        names.push(a.name.clone());
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(0);
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated noise");
        for v in &mut totals {
            *v += noise.sample(&mut noise_rng);
        }
    }
    // meters never report negative power
    for v in &mut totals {
        *v = v.max(0.0);
    }
    Ok(Household {
        series: PowerSeries::new(spec.start, spec.sample_period, totals)?,
        names,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(appliances: Vec<ApplianceSpec>) -> SyntheticSpec {
        SyntheticSpec {
            duration: 3600.0,
            sample_period: 1.0,
            start: 0.0,
            noise_std: 2.0,
            appliances,
            novelty: vec![],
        }
    }

    #[test]
    fn single_on_off_alternates() {
        let h = generate(&spec(vec![ApplianceSpec::on_off("kettle", 1500.0, 60.0, 120.0)]), 1).unwrap();
        for (&v, &s) in h.series.values().iter().zip(&h.states[0]) {
            let target = if s == 1 { 1500.0 } else { 0.0 };
            assert!((v - target).abs() < 20.0);
        }
        assert!(h.states[0].contains(&1) && h.states[0].contains(&0));
    }

    #[test]
    fn no_appliances_is_flat_noise() {
        let h = generate(&spec(vec![]), 3).unwrap();
        let mean = h.series.values().iter().sum::<f64>() / h.series.len() as f64;
        assert!(mean < 3.0);
        assert!(h.series.values().iter().all(|v| *v < 15.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(vec![ApplianceSpec::on_off("a", 700.0, 60.0, 60.0)]);
        let a = generate(&s, 5).unwrap();
        assert_eq!(a, generate(&s, 5).unwrap());
        assert_ne!(a, generate(&s, 6).unwrap());
        assert_eq!(a.series_csv(), generate(&s, 5).unwrap().series_csv());
    }

    #[test]
    fn novelty_leaves_the_past_untouched() {
        let base = spec(vec![
            ApplianceSpec::on_off("a", 700.0, 60.0, 60.0),
            ApplianceSpec {
                name: "b".into(),
                levels: vec![0.0, 300.0, 900.0],
                dwell_mean: vec![50.0, 40.0, 40.0],
                min_dwell: 10.0,
                transitions: Some(vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]]),
            },
        ]);
        let mut novel = base.clone();
        novel.novelty = vec![
            Novelty::AddAppliance {
                at: 2000.0,
                appliance: ApplianceSpec::on_off("new", 3500.0, 30.0, 60.0),
            },
            Novelty::ReplaceTransitions {
                at: 1500.0,
                appliance: "b".into(),
                transitions: vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]],
            },
        ];
        let a = generate(&base, 9).unwrap();
        let b = generate(&novel, 9).unwrap();
        assert_eq!(a.series.values()[..1500], b.series.values()[..1500]);
        assert!(b.states[2][..2000].iter().all(|&s| s == 0));
        assert!(b.states[2][2000..].contains(&1));
        assert_ne!(a.series.values()[1500..], b.series.values()[1500..]);
    }

    #[test]
    fn spec_validation() {
        let mut bad = ApplianceSpec::on_off("x", 100.0, 10.0, 10.0);
        bad.dwell_mean = vec![1.0];
        assert!(generate(&spec(vec![bad]), 0).is_err());
        let mut bad = ApplianceSpec::on_off("x", f64::NAN, 10.0, 10.0);
        assert!(generate(&spec(vec![bad.clone()]), 0).is_err());
        bad.levels = vec![0.0, 1.0];
        bad.transitions = Some(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        assert!(generate(&spec(vec![bad]), 0).is_err());
    }

    #[test]
    fn spec_parses_from_toml() {
        let text = r#"
            duration = 100.0
            noise_std = 1.0
            [[appliances]]
            name = "fridge"
            levels = [0.0, 120.0]
            dwell_mean = [600.0, 300.0]
            [[novelty]]
            kind = "add-appliance"
            at = 50.0
            appliance = { name = "heater", levels = [0.0, 2000.0], dwell_mean = [30.0, 30.0] }
        "#;
        let s: SyntheticSpec = toml::from_str(text).unwrap();
        s.validate().unwrap();
        assert_eq!(s.appliances[0].min_dwell, 10.0);
        assert_eq!(s.novelty[0].at(), 50.0);
    }
}
