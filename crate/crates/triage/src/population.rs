//! Individuals, their evaluation models, and population construction.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use sbcb_core::rng::stream;

use crate::label::RiskLabel;
use crate::{Error, Result};

/// The three evaluation tiers, cheapest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Machine,
    NonExpert,
    Expert,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Machine, Stage::NonExpert, Stage::Expert];

    /// 1-based stage number.
    pub fn number(self) -> usize {
        self as usize + 1
    }
}

/// Probability of each observed label given `truth` when a stage
/// mislabels with probability `eps`: the true label keeps `1 - eps` and the
/// rest is spread proportionally to `2^-|j - truth|`.
pub fn confusion_row(truth: RiskLabel, eps: f64) -> [f64; 4] {
    let t = truth.index() as i32;
    let weight = |j: i32| 0.5f64.powi((j - t).abs());
    let z: f64 = (0..4).filter(|&j| j != t).map(weight).sum();
    let mut row = [0.0; 4];
    for j in 0..4 {
        row[j as usize] = if j == t { 1.0 - eps } else { eps * weight(j) / z };
    }
    row
}

fn sample_row<R: Rng + ?Sized>(row: &[f64; 4], rng: &mut R) -> RiskLabel {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return RiskLabel::ALL[j];
        }
    }
    // Rounding left `u` above the cumulative sum; take the last label with mass.
    let last = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    RiskLabel::ALL[last]
}

/// How human stages answer a pull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Evaluations {
    /// Each pull draws a fresh label from a confusion row.
    Sampled { non_expert: [f64; 4], expert: [f64; 4] },
    /// Pulls replay recorded labels in order, wrapping around.
    Recorded {
        non_expert: Vec<RiskLabel>,
        expert: Vec<RiskLabel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    /// Ground truth, if known.
    pub truth: Option<RiskLabel>,
    /// Classifier output: probabilities of no, low, moderate, severe.
    pub machine: [f64; 4],
    pub evaluations: Evaluations,
}

impl Individual {
    /// The classifier's predicted label, argmax of its probability vector.
    pub fn machine_label(&self) -> RiskLabel {
        let mut best = 0;
        for j in 1..4 {
            if self.machine[j] > self.machine[best] {
                best = j;
            }
        }
        RiskLabel::ALL[best]
    }

    pub fn is_severe(&self) -> bool {
        self.truth == Some(RiskLabel::Severe)
    }

    /// Number of recorded labels at a human stage, `None` for sampled models.
    pub fn recorded(&self, stage: Stage) -> Option<usize> {
        match (&self.evaluations, stage) {
            (Evaluations::Recorded { non_expert, .. }, Stage::NonExpert) => Some(non_expert.len()),
            (Evaluations::Recorded { expert, .. }, Stage::Expert) => Some(expert.len()),
            _ => None,
        }
    }

    /// Outcome of the `pull`-th evaluation of this individual at `stage`.
    ///
    /// Recorded evaluations with nothing on file return `None`.
    pub fn observe<R: Rng + ?Sized>(&self, stage: Stage, pull: usize, rng: &mut R) -> Option<RiskLabel> {
        match (stage, &self.evaluations) {
            (Stage::Machine, _) => Some(self.machine_label()),
            (Stage::NonExpert, Evaluations::Sampled { non_expert, .. }) => Some(sample_row(non_expert, rng)),
            (Stage::Expert, Evaluations::Sampled { expert, .. }) => Some(sample_row(expert, rng)),
            (Stage::NonExpert, Evaluations::Recorded { non_expert, .. }) => replay(non_expert, pull),
            (Stage::Expert, Evaluations::Recorded { expert, .. }) => replay(expert, pull),
        }
    }
}

fn replay(labels: &[RiskLabel], pull: usize) -> Option<RiskLabel> {
    (!labels.is_empty()).then(|| labels[pull % labels.len()])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub individuals: Vec<Individual>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    pub fn severe_count(&self) -> usize {
        self.individuals.iter().filter(|i| i.is_severe()).count()
    }
}

/// Per-stage probability of reporting a wrong label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageNoise {
    pub machine: f64,
    pub non_expert: f64,
    pub expert: f64,
}

impl Default for StageNoise {
    /// Classifier accuracy 0.64, one expert pass catches 90% of severe cases.
    fn default() -> Self {
        Self {
            machine: 0.36,
            non_expert: 0.30,
            expert: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub n: usize,
    pub n_severe: usize,
    pub noise: StageNoise,
    /// Shares of no, low and moderate risk among the non-severe.
    pub mix: [f64; 3],
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n: 242,
            n_severe: 42,
            noise: StageNoise::default(),
            mix: [0.3, 0.3, 0.4],
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_severe > self.n {
            return Err(Error::Config(format!("n_severe = {} exceeds n = {}", self.n_severe, self.n)));
        }
        let StageNoise { machine, non_expert, expert } = self.noise;
        for (name, eps) in [("machine", machine), ("non_expert", non_expert), ("expert", expert)] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!("{name} noise {eps} is outside [0, 1]")));
            }
        }
        if machine < non_expert || non_expert < expert {
            return Err(Error::Config(format!(
                "stage noise must not increase with stage: {machine}, {non_expert}, {expert}"
            )));
        }
        if self.mix.iter().any(|&w| w.is_nan() || w < 0.0) || self.mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!("invalid non-severe mix {:?}", self.mix)));
        }
        Ok(())
    }
}

/// Splits `total` into integer counts proportional to `weights` (largest remainder).
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = total - counts.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        counts[i] += 1;
    }
    counts
}

/// Synthetic population with exactly `n_severe` severe individuals.
///
/// Labels are shuffled before ids are assigned. The classifier predicts a
/// label drawn from its confusion row, reports it with confidence
/// `U[0.4, 0.95]` and spreads the remainder over the other labels
/// proportionally to `2^-distance`.
pub fn synth_population(spec: &PopulationSpec, seed: u64) -> Result<Population> {
    spec.validate()?;
    let mut rng = stream(seed, 0, 0, "triage-population");
    let counts = apportion(spec.n - spec.n_severe, &spec.mix);
    let mut labels: Vec<RiskLabel> = Vec::with_capacity(spec.n);
    for (j, &c) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(RiskLabel::ALL[j], c));
    }
    labels.extend(std::iter::repeat_n(RiskLabel::Severe, spec.n_severe));
    labels.shuffle(&mut rng);

    let individuals = labels
        .into_iter()
        .enumerate()
        .map(|(id, truth)| {
            let predicted = sample_row(&confusion_row(truth, spec.noise.machine), &mut rng);
            let confidence = rng.random_range(0.4..0.95);
            let p = predicted.index() as i32;
            let weight = |j: i32| 0.5f64.powi((j - p).abs());
            let z: f64 = (0..4).filter(|&j| j != p).map(weight).sum();
            let mut machine = [0.0; 4];
            for j in 0..4 {
                machine[j as usize] = if j == p { confidence } else { (1.0 - confidence) * weight(j) / z };
            }
            Individual {
                id: id as u64,
                truth: Some(truth),
                machine,
                evaluations: Evaluations::Sampled {
                    non_expert: confusion_row(truth, spec.noise.non_expert),
                    expert: confusion_row(truth, spec.noise.expert),
                },
            }
        })
        .collect();
    Ok(Population { individuals })
}

#[derive(Debug, Deserialize)]
struct MachineRow {
    id: u64,
    p_no: f64,
    p_low: f64,
    p_mod: f64,
    p_sev: f64,
}

#[derive(Debug, Deserialize)]
struct HumanRow {
    id: u64,
    #[allow(dead_code)]
    rater_id: String,
    stage: u8,
    label: String,
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok(rows)
}

/// Builds a population from recorded evaluations.
///
/// `human.csv` has columns `id,rater_id,stage,label` with `stage` 2
/// (non-expert) or 3 (expert); `machine.prediction` has
/// `id,p_no,p_low,p_mod,p_sev`, each row summing to 1 within 1e-6. Ground
/// truth is the expert consensus (ties to the higher risk), unknown when an
/// individual has no expert labels. If the human file has rows, every id
/// must appear in both files.
pub fn load_evaluations(human_path: &Path, machine_path: &Path) -> Result<Population> {
    let mut machine: BTreeMap<u64, [f64; 4]> = BTreeMap::new();
    for (line, row) in read_rows::<MachineRow>(machine_path)? {
        let p = [row.p_no, row.p_low, row.p_mod, row.p_sev];
        let sum: f64 = p.iter().sum();
        let bad = |reason: String| Error::Parse {
            path: machine_path.to_path_buf(),
            line,
            reason,
        };
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(bad(format!("probabilities {p:?} must lie in [0, 1]")));
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(bad(format!("probabilities sum to {sum}, expected 1")));
        }
        if machine.insert(row.id, p).is_some() {
            return Err(bad(format!("duplicate id {}", row.id)));
        }
    }

    let mut human: HashMap<u64, (Vec<RiskLabel>, Vec<RiskLabel>)> = HashMap::new();
    for (line, row) in read_rows::<HumanRow>(human_path)? {
        let bad = |reason: String| Error::Parse {
            path: human_path.to_path_buf(),
            line,
            reason,
        };
        let label: RiskLabel = row.label.parse().map_err(bad)?;
        let entry = human.entry(row.id).or_default();
        match row.stage {
            2 => entry.0.push(label),
            3 => entry.1.push(label),
            s => return Err(bad(format!("stage must be 2 or 3, got {s}"))),
        }
    }

    if !human.is_empty() {
        let mut human_ids: Vec<u64> = human.keys().copied().collect();
        human_ids.sort_unstable();
        if let Some(&id) = human_ids.iter().find(|id| !machine.contains_key(id)) {
            return Err(Error::Referential {
                id,
                present: "human evaluations",
                missing: "machine predictions",
            });
        }
        if let Some(&id) = machine.keys().find(|id| !human.contains_key(id)) {
            return Err(Error::Referential {
                id,
                present: "machine predictions",
                missing: "human evaluations",
            });
        }
    }

    let individuals = machine
        .into_iter()
        .map(|(id, probs)| {
            let (non_expert, expert) = human.remove(&id).unwrap_or_default();
            Individual {
                id,
                truth: RiskLabel::consensus(&expert),
                machine: probs,
                evaluations: Evaluations::Recorded { non_expert, expert },
            }
        })
        .collect();
    Ok(Population { individuals })
}
