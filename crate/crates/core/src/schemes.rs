//! Selection mechanisms for secondary screening and what an observer can learn from them.
//!
//! Spur-of-the-moment selection by staff is deliberately absent: it cannot be
//! audited and tends to drift toward whoever "looks suspicious", so there is
//! no generator for it.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Audit flag threshold on the binomial z-score.
pub const AUDIT_Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum SelectionScheme {
    /// Select every n-th patron: indices with `index % n == phase`.
    EveryNth { n: u64, phase: u64 },
    /// A random selector whose outcome is shown to the patron.
    VisibleDevice { p: f64 },
    /// A random selector hidden from patrons; statistically identical to the visible one.
    HiddenDevice { p: f64 },
    /// One draw per event decides whether the activity runs for everyone.
    DailyCoin { p: f64 },
    /// One of `k` prepared plans is drawn at the last minute. Plan `j`
    /// selects the patrons with `index % k == j`.
    PlaybookDraw { k: u64 },
}

impl SelectionScheme {
    /// Every-n-th with the default phase, selecting the n-th, 2n-th, ... person.
    pub fn every_nth(n: u64) -> Self {
        SelectionScheme::EveryNth { n, phase: n.saturating_sub(1) }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(vec![msg]));
        match *self {
            SelectionScheme::EveryNth { n, phase } => {
                if n < 2 {
                    return bad("every-nth spacing n must be at least 2".into());
                }
                if phase >= n {
                    return bad(format!("phase {phase} must be below n = {n}"));
                }
            }
            SelectionScheme::VisibleDevice { p }
            | SelectionScheme::HiddenDevice { p }
            | SelectionScheme::DailyCoin { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad("selection probability out of [0,1]".into());
                }
            }
            SelectionScheme::PlaybookDraw { k } => {
                if k < 2 {
                    return bad("playbook needs at least 2 plans".into());
                }
            }
        }
        Ok(())
    }

    /// Long-run fraction of patrons selected.
    pub fn nominal_rate(&self) -> f64 {
        match *self {
            SelectionScheme::EveryNth { n, .. } => 1.0 / n as f64,
            SelectionScheme::VisibleDevice { p }
            | SelectionScheme::HiddenDevice { p }
            | SelectionScheme::DailyCoin { p } => p,
            SelectionScheme::PlaybookDraw { k } => 1.0 / k as f64,
        }
    }

    /// Whether patrons can see the selection mechanism. Has no statistical effect.
    pub fn is_visible(&self) -> bool {
        !matches!(self, SelectionScheme::HiddenDevice { .. })
    }

    pub fn label(&self) -> String {
        match *self {
            SelectionScheme::EveryNth { n, phase } => format!("every-nth(n={n}, phase={phase})"),
            SelectionScheme::VisibleDevice { p } => format!("visible-device(p={p})"),
            SelectionScheme::HiddenDevice { p } => format!("hidden-device(p={p})"),
            SelectionScheme::DailyCoin { p } => format!("daily-coin(p={p})"),
            SelectionScheme::PlaybookDraw { k } => format!("playbook(k={k})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub patron: u64,
    pub selected: bool,
}

/// Selection decisions for patrons `0, 1, 2, ...` in arrival order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DecisionStream {
    selected: Vec<bool>,
}

impl DecisionStream {
    pub fn from_flags(selected: Vec<bool>) -> Self {
        DecisionStream { selected }
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn flags(&self) -> &[bool] {
        &self.selected
    }

    pub fn decisions(&self) -> impl Iterator<Item = Decision> + '_ {
        self.selected.iter().enumerate().map(|(i, &s)| Decision { patron: i as u64, selected: s })
    }

    pub fn selected_indices(&self) -> Vec<u64> {
        self.decisions().filter(|d| d.selected).map(|d| d.patron).collect()
    }

    pub fn selected_count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn longest_unselected_run(&self) -> usize {
        let mut best = 0;
        let mut run = 0;
        for &s in &self.selected {
            if s {
                run = 0;
            } else {
                run += 1;
                best = best.max(run);
            }
        }
        best
    }
}

/// Runs `s` over `count` patrons.
pub fn run_scheme(s: &SelectionScheme, count: usize, stream: &mut Stream) -> DecisionStream {
    let selected = match *s {
        SelectionScheme::EveryNth { n, phase } => (0..count as u64).map(|i| i % n == phase).collect(),
        SelectionScheme::VisibleDevice { p } | SelectionScheme::HiddenDevice { p } => {
            (0..count).map(|_| stream.random::<f64>() < p).collect()
        }
        SelectionScheme::DailyCoin { p } => {
            let runs = stream.random::<f64>() < p;
            vec![runs; count]
        }
        SelectionScheme::PlaybookDraw { k } => {
            let plan = stream.random_range(0..k);
            (0..count as u64).map(|i| i % k == plan).collect()
        }
    };
    DecisionStream { selected }
}

/// Draws one of `k` prepared plans uniformly.
pub fn draw_playbook(k: u64, stream: &mut Stream) -> Result<u64> {
    if k < 2 {
        return Err(Error::InvalidArgument("playbook needs at least 2 plans".into()));
    }
    Ok(stream.random_range(0..k))
}

/// Relative frequency of each plan index over `draws` draws.
pub fn playbook_frequencies(k: u64, draws: usize, stream: &mut Stream) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; k.max(2) as usize];
    for _ in 0..draws {
        counts[draw_playbook(k, stream)? as usize] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / draws.max(1) as f64).collect())
}

/// Best achievable probability of predicting the next decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictability {
    /// Before any decision of the current event has been observed.
    pub at_event_start: f64,
    /// After observing the full decision history.
    pub with_history: f64,
}

pub fn predictability(s: &SelectionScheme) -> Predictability {
    let majority = |p: f64| p.max(1.0 - p);
    match *s {
        // The period is revealed after one full cycle.
        SelectionScheme::EveryNth { n, .. } => {
            Predictability { at_event_start: majority(1.0 / n as f64), with_history: 1.0 }
        }
        SelectionScheme::VisibleDevice { p } | SelectionScheme::HiddenDevice { p } => {
            Predictability { at_event_start: majority(p), with_history: majority(p) }
        }
        SelectionScheme::DailyCoin { p } => Predictability { at_event_start: majority(p), with_history: 1.0 },
        SelectionScheme::PlaybookDraw { k } => {
            Predictability { at_event_start: majority(1.0 / k as f64), with_history: 1.0 }
        }
    }
}

/// Accuracy of an online guesser over `count` decisions of `s`.
///
/// The guesser conditions on the number of patrons since the last selection
/// and predicts the majority outcome seen so far in that context. This learns
/// any periodic rule exactly and can do no better than the majority class on
/// an i.i.d. stream.
pub fn simulated_guesser_accuracy(s: &SelectionScheme, count: usize, stream: &mut Stream) -> f64 {
    if count == 0 {
        return 0.0;
    }
    let decisions = run_scheme(s, count, stream);
    let mut table: HashMap<usize, [u64; 2]> = HashMap::new();
    let mut overall = [0u64; 2];
    let mut since_last = 0usize;
    let mut correct = 0usize;
    for &actual in decisions.flags() {
        let ctx = table.get(&since_last).copied().unwrap_or([0, 0]);
        let votes = if ctx[0] + ctx[1] > 0 { ctx } else { overall };
        let guess = votes[1] > votes[0];
        if guess == actual {
            correct += 1;
        }
        table.entry(since_last).or_insert([0, 0])[actual as usize] += 1;
        overall[actual as usize] += 1;
        since_last = if actual { 0 } else { since_last + 1 };
    }
    correct as f64 / count as f64
}

/// What the counting observer infers from the selections seen so far.
fn predict_selected(history: &[bool], position: usize) -> bool {
    let picks: Vec<usize> = history.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect();
    if picks.len() == history.len() && !history.is_empty() {
        return true;
    }
    if picks.len() < 2 {
        return false;
    }
    let gap = picks[1] - picks[0];
    if picks.windows(2).all(|w| w[1] - w[0] == gap) {
        let last = *picks.last().unwrap();
        return (position - last).is_multiple_of(gap);
    }
    false
}

/// Simulates the three-person counting attack and returns the fraction of
/// trials in which the weapon carrier is still selected.
///
/// An advance member watches the selections ahead of the team and infers the
/// spacing. The two followers arrive adjacent in line; if the observer
/// predicts the first slot is selected and the second is not, they swap so
/// the carrier takes the second slot.
pub fn counting_team_attack(s: &SelectionScheme, trials: usize, stream: &mut Stream) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let period_hint = match *s {
        SelectionScheme::EveryNth { n, .. } => n as usize,
        SelectionScheme::PlaybookDraw { k } => k as usize,
        _ => 32,
    };
    let watch = (3 * period_hint).max(64);
    let mut carrier_selected = 0usize;
    for _ in 0..trials {
        let arrival = watch + stream.random_range(0..period_hint.max(2));
        let decisions = run_scheme(s, arrival + 2, stream);
        let flags = decisions.flags();
        let history = &flags[..arrival];
        let first = predict_selected(history, arrival);
        let second = predict_selected(history, arrival + 1);
        let carrier = if first && !second { arrival + 1 } else { arrival };
        if flags[carrier] {
            carrier_selected += 1;
        }
    }
    carrier_selected as f64 / trials as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub count: usize,
    pub selected: usize,
    pub rate: f64,
    pub expected_p: f64,
    /// Binomial z-score; `None` when `expected_p` is 0 or 1 and the stream disagrees.
    pub z: Option<f64>,
    pub longest_unselected_run: usize,
    pub flagged: bool,
}

/// Compares a stream's selection rate against the rate it is supposed to have.
pub fn frequency_audit(d: &DecisionStream, expected_p: f64) -> Result<AuditReport> {
    if d.is_empty() {
        return Err(Error::InvalidArgument("cannot audit an empty decision stream".into()));
    }
    if !(0.0..=1.0).contains(&expected_p) {
        return Err(Error::InvalidArgument("expected rate out of [0,1]".into()));
    }
    let n = d.len() as f64;
    let k = d.selected_count();
    let variance = n * expected_p * (1.0 - expected_p);
    let deviation = k as f64 - n * expected_p;
    let z = if variance > 0.0 {
        Some(deviation / variance.sqrt())
    } else if deviation == 0.0 {
        Some(0.0)
    } else {
        None
    };
    Ok(AuditReport {
        count: d.len(),
        selected: k,
        rate: k as f64 / n,
        expected_p,
        z,
        longest_unselected_run: d.longest_unselected_run(),
        flagged: z.is_none_or(|z| z.abs() > AUDIT_Z_LIMIT),
    })
}
