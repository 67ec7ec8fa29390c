//! Big-Five labelling, clip categories, example assembly and stratified folds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::signal_io::SegmentKey;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Extraversion,
    Agreeableness,
    Conscientiousness,
    EmotionalStability,
    Openness,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Extraversion,
        Dimension::Agreeableness,
        Dimension::Conscientiousness,
        Dimension::EmotionalStability,
        Dimension::Openness,
    ];

    /// Mean-score threshold; scores at or below it fall in class 0.
    pub fn threshold(self) -> f64 {
        match self {
            Dimension::Extraversion => 4.31,
            Dimension::Agreeableness => 5.09,
            Dimension::Conscientiousness => 5.14,
            Dimension::EmotionalStability => 4.14,
            Dimension::Openness => 4.95,
        }
    }

    /// Lower-case flag value: `ext`, `agr`, `con`, `ems`, `ope`.
    pub fn code(self) -> &'static str {
        match self {
            Dimension::Extraversion => "ext",
            Dimension::Agreeableness => "agr",
            Dimension::Conscientiousness => "con",
            Dimension::EmotionalStability => "ems",
            Dimension::Openness => "ope",
        }
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            Dimension::Extraversion => "Ext",
            Dimension::Agreeableness => "Agr",
            Dimension::Conscientiousness => "Con",
            Dimension::EmotionalStability => "EmS",
            Dimension::Openness => "Ope",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::Extraversion => "Extraversion",
            Dimension::Agreeableness => "Agreeableness",
            Dimension::Conscientiousness => "Conscientiousness",
            Dimension::EmotionalStability => "Emotional Stability",
            Dimension::Openness => "Openness",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Dimension::ALL
            .into_iter()
            .find(|d| {
                d.code() == lower
                    || d.name().to_ascii_lowercase().replace(' ', "_") == lower
                    || d.name().to_ascii_lowercase() == lower
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown dimension {s:?}")))
    }
}

/// Binary class for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Class {
    /// Score at or below the threshold.
    AtOrBelow = 0,
    /// Score above the threshold.
    Above = 1,
}

impl Class {
    pub fn bit(self) -> u8 {
        self as u8
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Class::AtOrBelow),
            1 => Ok(Class::Above),
            b => Err(Error::InvalidArgument(format!("class label must be 0 or 1, got {b}"))),
        }
    }
}

/// Display name of a class.
///
/// Openness follows the source questionnaire mapping, where the at-or-below
/// group is "open-minded"; `swap_openness` flips that pair of names.
pub fn class_name(dimension: Dimension, class: Class, swap_openness: bool) -> &'static str {
    let (low, high) = match dimension {
        Dimension::Extraversion => ("introvert", "extrovert"),
        Dimension::Agreeableness => ("non-agreeable", "agreeable"),
        Dimension::Conscientiousness => ("non-conscientious", "conscientious"),
        Dimension::EmotionalStability => ("emotionally unstable", "emotionally stable"),
        Dimension::Openness if swap_openness => ("close-minded", "open-minded"),
        Dimension::Openness => ("open-minded", "close-minded"),
    };
    match class {
        Class::AtOrBelow => low,
        Class::Above => high,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigFiveScores {
    pub subject_id: u32,
    scores: [f64; 5],
}

impl BigFiveScores {
    /// `scores` in [`Dimension::ALL`] order.
    pub fn new(subject_id: u32, scores: [f64; 5]) -> Self {
        BigFiveScores { subject_id, scores }
    }

    pub fn get(&self, dimension: Dimension) -> f64 {
        self.scores[dimension.index()]
    }

    pub fn set(&mut self, dimension: Dimension, score: f64) {
        self.scores[dimension.index()] = score;
    }
}

pub fn classify(scores: &BigFiveScores, dimension: Dimension) -> Result<Class> {
    classify_score(scores.get(dimension), dimension)
}

pub fn classify_score(score: f64, dimension: Dimension) -> Result<Class> {
    if !score.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite {} score {score}",
            dimension.name()
        )));
    }
    Ok(if score > dimension.threshold() {
        Class::Above
    } else {
        Class::AtOrBelow
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipCategory {
    All,
    Hahv,
    Lahv,
    Lalv,
    Halv,
}

impl ClipCategory {
    pub const ALL: [ClipCategory; 5] = [
        ClipCategory::All,
        ClipCategory::Hahv,
        ClipCategory::Lahv,
        ClipCategory::Lalv,
        ClipCategory::Halv,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ClipCategory::All => "all",
            ClipCategory::Hahv => "hahv",
            ClipCategory::Lahv => "lahv",
            ClipCategory::Lalv => "lalv",
            ClipCategory::Halv => "halv",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ClipCategory::All => "ALL",
            ClipCategory::Hahv => "HAHV",
            ClipCategory::Lahv => "LAHV",
            ClipCategory::Lalv => "LALV",
            ClipCategory::Halv => "HALV",
        }
    }

    /// Clip id range covered by a concrete category.
    pub fn clip_range(self) -> Option<std::ops::RangeInclusive<u32>> {
        match self {
            ClipCategory::All => None,
            ClipCategory::Hahv => Some(1..=9),
            ClipCategory::Lahv => Some(10..=18),
            ClipCategory::Lalv => Some(19..=27),
            ClipCategory::Halv => Some(28..=36),
        }
    }

    /// Whether `clip_id` passes this category used as a filter.
    pub fn admits(self, clip_id: u32) -> bool {
        match self.clip_range() {
            None => true,
            Some(r) => r.contains(&clip_id),
        }
    }
}

impl fmt::Display for ClipCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ClipCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ClipCategory::ALL
            .into_iter()
            .find(|c| c.code() == lower)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown clip category {s:?}")))
    }
}

pub fn clip_category(clip_id: u32) -> Result<ClipCategory> {
    match clip_id {
        1..=9 => Ok(ClipCategory::Hahv),
        10..=18 => Ok(ClipCategory::Lahv),
        19..=27 => Ok(ClipCategory::Lalv),
        28..=36 => Ok(ClipCategory::Halv),
        _ => Err(Error::InvalidArgument(format!("clip id {clip_id} outside 1..=36"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    /// Index into the spectrogram collection passed to [`assemble`].
    pub spectrogram: usize,
    pub key: SegmentKey,
    pub category: ClipCategory,
    pub label: Class,
}

impl LabeledExample {
    pub fn subject_id(&self) -> u32 {
        self.key.subject_id
    }
}

/// Pair every spectrogram key with its subject's class for `dimension`,
/// keeping those admitted by `filter`. Output is ordered by segment key.
pub fn assemble(
    keys: &[SegmentKey],
    scores: &[BigFiveScores],
    dimension: Dimension,
    filter: ClipCategory,
) -> Result<Vec<LabeledExample>> {
    let by_subject: BTreeMap<u32, &BigFiveScores> =
        scores.iter().map(|s| (s.subject_id, s)).collect();
    let mut out = Vec::new();
    for (index, key) in keys.iter().enumerate() {
        let subject = by_subject
            .get(&key.subject_id)
            .ok_or(Error::MissingScores(key.subject_id))?;
        if !filter.admits(key.clip_id) {
            continue;
        }
        out.push(LabeledExample {
            spectrogram: index,
            key: *key,
            category: clip_category(key.clip_id)?,
            label: classify(subject, dimension)?,
        });
    }
    out.sort_by_key(|e| (e.key, e.spectrogram));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Segment,
    Subject,
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "segment" => Ok(Granularity::Segment),
            "subject" => Ok(Granularity::Subject),
            _ => Err(Error::InvalidArgument(format!("unknown granularity {s:?}"))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Segment => "segment",
            Granularity::Subject => "subject",
        })
    }
}

/// Assignment of every example to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub granularity: Granularity,
    /// `assignments[i]` is the test fold of example `i`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f == fold)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.indices_where(|f| f != fold)
    }

    fn indices_where(&self, pred: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| pred(f))
            .map(|(i, _)| i)
            .collect()
    }

    /// `fold,example_index` CSV, one row per example in index order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fold,example_index\n");
        for (i, f) in self.assignments.iter().enumerate() {
            s.push_str(&format!("{f},{i}\n"));
        }
        s
    }
}

/// Stratified k-fold assignment.
///
/// Units (examples, or whole subjects with [`Granularity::Subject`]) are
/// shuffled within each class with a seeded RNG and dealt round-robin. The
/// dealing position carries over from one class to the next so fold sizes
/// stay balanced overall. Every class that occurs needs at least `k` units.
pub fn stratified_kfold(
    examples: &[LabeledExample],
    k: usize,
    granularity: Granularity,
    seed: u64,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }

    // unit id -> (class, example indices)
    let mut units: BTreeMap<(Class, u64), Vec<usize>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        let unit = match granularity {
            Granularity::Segment => i as u64,
            Granularity::Subject => e.subject_id() as u64,
        };
        units.entry((e.label, unit)).or_default().push(i);
    }
    if granularity == Granularity::Subject {
        let mut seen = BTreeMap::new();
        for &(class, subject) in units.keys() {
            if let Some(prev) = seen.insert(subject, class) {
                return Err(Error::InvalidArgument(format!(
                    "subject {subject} carries both labels {prev:?} and {class:?}"
                )));
            }
        }
    }

    let mut assignments = vec![usize::MAX; examples.len()];
    let mut position = 0usize;
    for (class_tag, class) in [Class::AtOrBelow, Class::Above].into_iter().enumerate() {
        let mut members: Vec<&Vec<usize>> = units
            .range((class, 0)..=(class, u64::MAX))
            .map(|(_, v)| v)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::InsufficientData(format!(
                "class {} has {} {}s, need at least {k}",
                class.bit(),
                members.len(),
                granularity
            )));
        }
        let mut rng = rng::rng_from(seed, &[0xf01d, class_tag as u64]);
        members.shuffle(&mut rng);
        for indices in members {
            for &i in indices {
                assignments[i] = position % k;
            }
            position += 1;
        }
    }

    Ok(FoldPlan {
        k,
        granularity,
        assignments,
    })
}
