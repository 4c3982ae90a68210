//! Actor-level risk identification metrics: thresholded F1 sweeps, the
//! time-windowed variant, the late-error weighted consistency score and a
//! weighted tracking accuracy.
//!
//! An actor is predicted risky in a frame iff its score is strictly greater
//! than the threshold. Only actors present in a frame's score map (the
//! visible ones) take part in that frame's counts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Pool all actor-frames before computing F1.
    #[default]
    Micro,
    /// Average per-sequence F1 at each threshold.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    /// Clamp applied to per-frame F1 inside the log.
    pub pic_epsilon: f64,
    /// Weight of misses on risky actors; inverse class frequency if unset.
    pub w_p: Option<f64>,
    /// Weight of false alarms on non-risky actors; inverse class frequency if unset.
    pub w_n: Option<f64>,
    pub averaging: Averaging,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self {
            pic_epsilon: 1e-6,
            w_p: None,
            w_n: None,
            averaging: Averaging::Micro,
        }
    }
}

impl MetricsSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.pic_epsilon > 0.0 && self.pic_epsilon < 1.0) {
            return Err(Error::Config("metrics.pic_epsilon must lie in (0, 1)".into()));
        }
        for w in [self.w_p, self.w_n].into_iter().flatten() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config("metrics weights must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Scores of the visible actors in one frame, with the frame's labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScores {
    pub timestamp: f64,
    pub scores: BTreeMap<String, f64>,
    pub gt_risky: BTreeSet<String>,
}

impl FrameScores {
    /// `(score, is_gt_risky)` for each visible actor.
    pub fn samples(&self) -> impl Iterator<Item = (f64, bool)> + '_ {
        self.scores
            .iter()
            .map(|(id, s)| (*s, self.gt_risky.contains(id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorScoreSeries {
    pub name: String,
    pub frames: Vec<FrameScores>,
    /// Index of the collision or closest-approach frame.
    pub event_frame: usize,
}

impl ActorScoreSeries {
    pub fn all(&self) -> Range<usize> {
        0..self.frames.len()
    }

    pub fn samples(&self, window: Range<usize>) -> Vec<(f64, bool)> {
        self.frames[window].iter().flat_map(|f| f.samples()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }

    /// F1 from counts. Zero when precision and recall are both zero; one
    /// for a frame with nothing to find and nothing flagged.
    pub fn f1(&self) -> f64 {
        f1_from_counts(self.tp, self.fp, self.fn_)
    }
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn confusion_frame(frame: &FrameScores, tau: f64) -> Confusion {
    let mut c = Confusion::default();
    for (score, gt) in frame.samples() {
        match (score > tau, gt) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Per-frame confusion counts over `window`.
pub fn confusion_at(series: &ActorScoreSeries, tau: f64, window: Range<usize>) -> Vec<Confusion> {
    series.frames[window]
        .iter()
        .map(|f| confusion_frame(f, tau))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub f1: f64,
    /// Smallest threshold reaching `f1`.
    pub threshold: f64,
    /// False when the pool holds no risky actor; `f1` is then 0.
    pub has_positives: bool,
}

/// Candidate thresholds: one value below the smallest score, then every
/// distinct score in increasing order.
pub fn candidate_thresholds(scores: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = scores.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let below = v.first().map_or(0.0, |m| m - 1.0);
    std::iter::once(below).chain(v).collect()
}

struct SortedGroup {
    scores: Vec<f64>,
    /// `pos_prefix[i]` = risky count among the `i` lowest scores.
    pos_prefix: Vec<usize>,
}

impl SortedGroup {
    fn new(samples: &[(f64, bool)]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pos_prefix = Vec::with_capacity(s.len() + 1);
        pos_prefix.push(0);
        for (_, gt) in &s {
            pos_prefix.push(pos_prefix.last().unwrap() + usize::from(*gt));
        }
        Self {
            scores: s.into_iter().map(|x| x.0).collect(),
            pos_prefix,
        }
    }

    fn positives(&self) -> usize {
        *self.pos_prefix.last().unwrap()
    }

    fn counts(&self, tau: f64) -> (usize, usize, usize) {
        let idx = self.scores.partition_point(|s| *s <= tau);
        let total_pos = self.positives();
        let tp = total_pos - self.pos_prefix[idx];
        let fp = (self.scores.len() - idx) - tp;
        (tp, fp, total_pos - tp)
    }
}

/// Threshold sweep over groups of `(score, is_risky)` samples.
///
/// With [`Averaging::Micro`] counts are pooled across groups; with
/// [`Averaging::Macro`] the F1 of each group that contains a risky sample
/// is averaged.
pub fn sweep(groups: &[Vec<(f64, bool)>], averaging: Averaging) -> SweepResult {
    let candidates = candidate_thresholds(groups.iter().flatten().map(|x| x.0));
    let sorted: Vec<SortedGroup> = match averaging {
        Averaging::Micro => vec![SortedGroup::new(&groups.concat())],
        Averaging::Macro => groups
            .iter()
            .map(|g| SortedGroup::new(g))
            .filter(|g| g.positives() > 0)
            .collect(),
    };
    let has_positives = sorted.iter().any(|g| g.positives() > 0);
    if !has_positives {
        return SweepResult {
            f1: 0.0,
            threshold: candidates[0],
            has_positives: false,
        };
    }
    let mut best = SweepResult {
        f1: -1.0,
        threshold: candidates[0],
        has_positives: true,
    };
    for &tau in &candidates {
        let f1 = match averaging {
            Averaging::Micro => {
                let (tp, fp, fn_) = sorted[0].counts(tau);
                f1_from_counts(tp, fp, fn_)
            }
            Averaging::Macro => {
                let total: f64 = sorted
                    .iter()
                    .map(|g| {
                        let (tp, fp, fn_) = g.counts(tau);
                        f1_from_counts(tp, fp, fn_)
                    })
                    .sum();
                total / sorted.len() as f64
            }
        };
        if f1 > best.f1 {
            best.f1 = f1;
            best.threshold = tau;
        }
    }
    best
}

/// Best F1 over all thresholds for one sequence window (micro-averaged).
pub fn ot_f1(series: &ActorScoreSeries, window: Range<usize>) -> SweepResult {
    sweep(&[series.samples(window)], Averaging::Micro)
}

/// Frames whose timestamps fall in `[t_event - seconds, t_event]`.
pub fn time_window(series: &ActorScoreSeries, seconds: f64) -> Range<usize> {
    let event = series.event_frame.min(series.frames.len().saturating_sub(1));
    let Some(t_event) = series.frames.get(event).map(|f| f.timestamp) else {
        return 0..0;
    };
    let start_time = t_event - seconds;
    let tol = 1e-9 * (1.0 + t_event.abs());
    let start = series.frames[..=event]
        .iter()
        .position(|f| f.timestamp >= start_time - tol)
        .unwrap_or(event);
    start..event + 1
}

pub fn ot_f1_t(series: &ActorScoreSeries, seconds: f64) -> SweepResult {
    ot_f1(series, time_window(series, seconds))
}

/// Per-frame F1 at a fixed threshold.
pub fn f1_trace(series: &ActorScoreSeries, tau: f64) -> Vec<f64> {
    series.frames.iter().map(|f| confusion_frame(f, tau).f1()).collect()
}

/// `-sum_t exp(-(T - t) / T) * ln(max(F1_t, eps))` with `t = 1..=T`.
pub fn pic(trace: &[f64], epsilon: f64) -> f64 {
    let n = trace.len() as f64;
    let mut total = 0.0;
    for (i, f1) in trace.iter().enumerate() {
        let t = (i + 1) as f64;
        total -= (-(n - t) / n).exp() * f1.max(epsilon).ln();
    }
    total
}

/// Identity switches per frame as `(risky, non_risky)` counts: actors
/// whose predicted label differs from the one in the last frame where
/// they were visible.
pub fn id_switches(series: &ActorScoreSeries, tau: f64) -> Vec<(usize, usize)> {
    let mut last: HashMap<&str, bool> = HashMap::new();
    series
        .frames
        .iter()
        .map(|frame| {
            let mut sw = (0, 0);
            for (id, score) in &frame.scores {
                let label = *score > tau;
                if let Some(prev) = last.insert(id.as_str(), label) {
                    if prev != label {
                        if frame.gt_risky.contains(id) {
                            sw.0 += 1;
                        } else {
                            sw.1 += 1;
                        }
                    }
                }
            }
            sw
        })
        .collect()
}

/// Numerator and denominator sums of the weighted tracking accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WmotaTerms {
    pub errors: f64,
    pub total: f64,
}

impl WmotaTerms {
    pub fn add(self, o: Self) -> Self {
        Self {
            errors: self.errors + o.errors,
            total: self.total + o.total,
        }
    }

    /// `None` when there is nothing to weigh.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0.0).then(|| 1.0 - self.errors / self.total)
    }
}

pub fn wmota_terms(series: &ActorScoreSeries, tau: f64, w_p: f64, w_n: f64) -> WmotaTerms {
    let switches = id_switches(series, tau);
    let mut terms = WmotaTerms::default();
    for (frame, (sw_p, sw_n)) in series.frames.iter().zip(switches) {
        let c = confusion_frame(frame, tau);
        let gt_p = c.tp + c.fn_;
        let gt_n = c.fp + c.tn;
        terms.errors += w_p * (c.fn_ + sw_p) as f64 + w_n * (c.fp + sw_n) as f64;
        terms.total += w_p * gt_p as f64 + w_n * gt_n as f64;
    }
    terms
}

pub fn wmota(series: &ActorScoreSeries, tau: f64, w_p: f64, w_n: f64) -> Option<f64> {
    wmota_terms(series, tau, w_p, w_n).value()
}

/// Inverse-frequency weights `(w_p, w_n)` from visible actor-frames.
pub fn default_weights(series: &[ActorScoreSeries]) -> (f64, f64) {
    let (mut pos, mut neg) = (0usize, 0usize);
    for s in series {
        for (_, gt) in s.samples(s.all()) {
            if gt {
                pos += 1;
            } else {
                neg += 1;
            }
        }
    }
    let n = (pos + neg) as f64;
    if n == 0.0 {
        return (0.5, 0.5);
    }
    (neg as f64 / n, pos as f64 / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub frames: usize,
    pub event_frame: usize,
    /// Best F1 of this sequence alone.
    pub ot_f1: f64,
    /// Values at the pooled threshold.
    pub f1_at_threshold: f64,
    pub pic: f64,
    pub wmota: Option<f64>,
    pub f1_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ot_f1: f64,
    pub ot_f1_1s: f64,
    pub ot_f1_2s: f64,
    pub ot_f1_3s: f64,
    /// Mean over sequences.
    pub pic: f64,
    pub pic_sum: f64,
    pub wmota: Option<f64>,
    pub best_threshold: f64,
    pub w_p: f64,
    pub w_n: f64,
    pub pic_epsilon: f64,
    pub averaging: Averaging,
    pub config_hash: Option<String>,
    pub sequences: Vec<SequenceReport>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Full metric suite over scored sequences.
pub fn evaluate(series: &[ActorScoreSeries], settings: &MetricsSettings) -> MetricsReport {
    let mut warnings = Vec::new();
    let groups: Vec<Vec<(f64, bool)>> = series.iter().map(|s| s.samples(s.all())).collect();
    let overall = sweep(&groups, settings.averaging);
    if !overall.has_positives {
        warnings.push("no risky actor visible in any frame; OT-F1 set to 0".to_string());
    }
    let tau = overall.threshold;

    let windowed = |seconds: f64| {
        let groups: Vec<Vec<(f64, bool)>> = series
            .iter()
            .map(|s| s.samples(time_window(s, seconds)))
            .collect();
        sweep(&groups, settings.averaging)
    };
    let [w1, w2, w3] = [1.0, 2.0, 3.0].map(windowed);
    for (secs, w) in [(1, w1), (2, w2), (3, w3)] {
        if !w.has_positives {
            warnings.push(format!("no risky actor in the {secs} s windows; OT-F1-{secs}s set to 0"));
        }
    }

    let (auto_p, auto_n) = default_weights(series);
    let w_p = settings.w_p.unwrap_or(auto_p);
    let w_n = settings.w_n.unwrap_or(auto_n);

    let mut sequences = Vec::with_capacity(series.len());
    let mut pic_sum = 0.0;
    let mut terms = WmotaTerms::default();
    for s in series {
        let trace = f1_trace(s, tau);
        let p = pic(&trace, settings.pic_epsilon);
        pic_sum += p;
        let t = wmota_terms(s, tau, w_p, w_n);
        terms = terms.add(t);
        let own = ot_f1(s, s.all());
        if !own.has_positives {
            warnings.push(format!("sequence `{}` has no visible risky actor", s.name));
        }
        let pooled = s.frames.iter().fold(Confusion::default(), |acc, f| acc.add(confusion_frame(f, tau)));
        sequences.push(SequenceReport {
            name: s.name.clone(),
            frames: s.frames.len(),
            event_frame: s.event_frame,
            ot_f1: own.f1,
            f1_at_threshold: pooled.f1(),
            pic: p,
            wmota: t.value(),
            f1_trace: trace,
        });
    }
    let wmota = terms.value();
    if wmota.is_none() {
        warnings.push("wMOTA undefined: no weighted actors".to_string());
    }
    let pic_mean = if series.is_empty() { 0.0 } else { pic_sum / series.len() as f64 };

    MetricsReport {
        ot_f1: overall.f1,
        ot_f1_1s: w1.f1,
        ot_f1_2s: w2.f1,
        ot_f1_3s: w3.f1,
        pic: pic_mean,
        pic_sum,
        wmota,
        best_threshold: tau,
        w_p,
        w_n,
        pic_epsilon: settings.pic_epsilon,
        averaging: settings.averaging,
        config_hash: None,
        sequences,
        warnings,
    }
}
