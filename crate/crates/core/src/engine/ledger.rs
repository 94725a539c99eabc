use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FeatureExtraction,
    InitialPopulation,
    GaOptimization,
}

impl Stage {
    pub const ALL: [Stage; 3] = [
        Stage::FeatureExtraction,
        Stage::InitialPopulation,
        Stage::GaOptimization,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::FeatureExtraction => "Feature Extraction",
            Stage::InitialPopulation => "Initial Population",
            Stage::GaOptimization => "GA Optimization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageCost {
    /// Sum of per-call latencies, in microseconds.
    pub wall_time_us: u64,
    /// Live calls only; cache hits are counted separately.
    pub api_calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cache_hits: u64,
    /// Live calls whose token counts were estimated from character length.
    pub estimated_usage_calls: u64,
    /// Requests per role, live and cached.
    pub requests_by_role: BTreeMap<Role, u64>,
    /// Requests per role that re-attempted a rejected or failed reply.
    #[serde(default)]
    pub retries_by_role: BTreeMap<Role, u64>,
}

impl StageCost {
    fn add(&mut self, other: &StageCost) {
        self.wall_time_us += other.wall_time_us;
        self.api_calls += other.api_calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
        self.cache_hits += other.cache_hits;
        self.estimated_usage_calls += other.estimated_usage_calls;
        for (role, n) in &other.requests_by_role {
            *self.requests_by_role.entry(*role).or_default() += n;
        }
        for (role, n) in &other.retries_by_role {
            *self.retries_by_role.entry(*role).or_default() += n;
        }
    }

    pub fn requests(&self, role: Role) -> u64 {
        self.requests_by_role.get(&role).copied().unwrap_or(0)
    }

    /// Requests for `role` that were first attempts.
    pub fn first_attempts(&self, role: Role) -> u64 {
        self.requests(role) - self.retries_by_role.get(&role).copied().unwrap_or(0)
    }
}

/// One booked request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CallRecord {
    pub role: Role,
    pub live: bool,
    pub latency_us: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub estimated: bool,
    pub retry: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub stages: BTreeMap<Stage, StageCost>,
    pub totals: StageCost,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("ledger totals disagree with stage sums: stored {stored:?}, recomputed {recomputed:?}")]
    Mismatch {
        stored: Box<StageCost>,
        recomputed: Box<StageCost>,
    },
}

impl LedgerSnapshot {
    pub fn stage(&self, stage: Stage) -> StageCost {
        self.stages.get(&stage).cloned().unwrap_or_default()
    }

    pub fn recomputed_totals(&self) -> StageCost {
        let mut t = StageCost::default();
        for s in self.stages.values() {
            t.add(s);
        }
        t
    }

    pub fn verify(&self) -> Result<(), LedgerError> {
        let recomputed = self.recomputed_totals();
        if recomputed != self.totals {
            return Err(LedgerError::Mismatch {
                stored: Box::new(self.totals.clone()),
                recomputed: Box::new(recomputed),
            });
        }
        Ok(())
    }
}

/// Thread-safe cost accounting; stage and total counters move under one lock.
#[derive(Debug, Default)]
pub struct CostLedger {
    inner: Mutex<LedgerSnapshot>,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger::default()
    }

    pub fn record(&self, stage: Stage, call: CallRecord) {
        let mut delta = StageCost::default();
        delta.requests_by_role.insert(call.role, 1);
        if call.retry {
            delta.retries_by_role.insert(call.role, 1);
        }
        if call.live {
            delta.api_calls = 1;
            delta.wall_time_us = call.latency_us;
            delta.prompt_tokens = call.prompt_tokens;
            delta.completion_tokens = call.completion_tokens;
            delta.estimated_usage_calls = u64::from(call.estimated);
        } else {
            delta.cache_hits = 1;
        }
        let mut g = self.inner.lock().expect("ledger lock poisoned");
        g.stages.entry(stage).or_default().add(&delta);
        g.totals.add(&delta);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let mut snap = self.inner.lock().expect("ledger lock poisoned").clone();
        for s in Stage::ALL {
            snap.stages.entry(s).or_default();
        }
        snap
    }
}

fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn seconds(us: u64) -> String {
    let tenths = (us + 50_000) / 100_000;
    format!("{}.{}", thousands(tenths / 10), tenths % 10)
}

/// Stage cost table: time, calls, prompt and completion tokens, plus totals.
pub fn ledger_report(l: &LedgerSnapshot) -> Result<String, LedgerError> {
    l.verify()?;
    let header = ["Pipeline Stage", "Time (s)", "API Calls", "Prompt Tok.", "Compl. Tok."];
    let row = |name: &str, c: &StageCost| {
        [
            name.to_string(),
            seconds(c.wall_time_us),
            thousands(c.api_calls),
            thousands(c.prompt_tokens),
            thousands(c.completion_tokens),
        ]
    };
    let mut rows: Vec<[String; 5]> = Stage::ALL.iter().map(|s| row(s.label(), &l.stage(*s))).collect();
    rows.push(row("Total", &l.totals));
    let mut widths = header.map(str::len);
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let rule: String = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s
    };
    let mut out = String::new();
    out.push_str(&line(&header.map(String::from)));
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for r in &rows[..3] {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str(&rule);
    out.push('\n');
    out.push_str(&line(&rows[3]));
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn live(role: Role, us: u64, p: u64, c: u64) -> CallRecord {
        CallRecord {
            role,
            live: true,
            latency_us: us,
            prompt_tokens: p,
            completion_tokens: c,
            estimated: false,
            retry: false,
        }
    }

    /// Books aggregate stage figures as a single synthetic call per stage.
    fn table6() -> LedgerSnapshot {
        let mut snap = LedgerSnapshot::default();
        let rows = [
            (Stage::FeatureExtraction, 17_800_000, 5, 19_011, 740),
            (Stage::InitialPopulation, 192_200_000, 41, 113_318, 16_495),
            (Stage::GaOptimization, 1_510_800_000, 320, 874_828, 133_232),
        ];
        for (stage, us, calls, p, c) in rows {
            let cost = StageCost {
                wall_time_us: us,
                api_calls: calls,
                prompt_tokens: p,
                completion_tokens: c,
                ..StageCost::default()
            };
            snap.totals.add(&cost);
            snap.stages.insert(stage, cost);
        }
        snap
    }

    #[test]
    fn table6_totals() {
        let snap = table6();
        snap.verify().unwrap();
        assert_eq!(snap.totals.api_calls, 366);
        assert_eq!(snap.totals.prompt_tokens, 1_007_157);
        assert_eq!(snap.totals.completion_tokens, 150_467);
        let report = ledger_report(&snap).unwrap();
        let total = report.lines().last().unwrap();
        assert!(total.starts_with("Total"));
        for cell in ["1,720.8", "366", "1,007,157", "150,467"] {
            assert!(total.contains(cell), "{total}");
        }
        assert!(report.contains("GA Optimization"));
    }

    #[test]
    fn empty_ledger_reports_zeros() {
        let l = CostLedger::new();
        let report = ledger_report(&l.snapshot()).unwrap();
        let total = report.lines().last().unwrap();
        assert_eq!(total.split_whitespace().collect::<Vec<_>>(), ["Total", "0.0", "0", "0", "0"]);
    }

    #[test]
    fn tampered_totals_are_rejected() {
        let mut snap = table6();
        snap.totals.api_calls += 1;
        assert!(matches!(ledger_report(&snap), Err(LedgerError::Mismatch { .. })));
    }

    #[test]
    fn concurrent_recording_keeps_totals_consistent() {
        let l = CostLedger::new();
        std::thread::scope(|s| {
            for t in 0..8 {
                let l = &l;
                s.spawn(move || {
                    for i in 0..500u64 {
                        let stage = Stage::ALL[(t + i as usize) % 3];
                        if i % 5 == 0 {
                            l.record(
                                stage,
                                CallRecord {
                                    live: false,
                                    ..live(Role::AnswerGen, 0, 0, 0)
                                },
                            );
                        } else {
                            l.record(stage, live(Role::Judge, 10, i, 1));
                        }
                    }
                });
            }
        });
        let snap = l.snapshot();
        snap.verify().unwrap();
        assert_eq!(snap.totals.api_calls + snap.totals.cache_hits, 4000);
        assert_eq!(snap.totals.cache_hits, 800);
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(1_007_157), "1,007,157");
        assert_eq!(seconds(1_720_800_000), "1,720.8");
    }
}
