use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::session::{Session, StageTimings, TaskRecord};
use crate::recommend::{diversity_index, novelty_score, RecommendationMetrics};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Row names of the task-performance table, in order.
pub const REPORT_ROWS: [&str; 5] = [
    "Task Completion Time (seconds)",
    "Task Success Rate (%)",
    "System Error Rate (errors/task)",
    "System Responsiveness (seconds)",
    "Mesh File Size (MB)",
];

const BYTES_PER_MB: f64 = 1_000_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl StageSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Self {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    /// `None` when no task contributed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    pub sessions: usize,
    pub tasks: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub cache_hits: usize,
    pub cache_hit_rate: Option<f64>,
    pub generator_invocations: u64,
    pub errors: u64,
    pub error_rate_per_task: Option<f64>,
    /// Per-stage durations over the tasks that ran the stage.
    pub stages: BTreeMap<String, StageSummary>,
    pub time_to_object_cache_hit: Option<StageSummary>,
    pub time_to_object_generated: Option<StageSummary>,
    /// Generator output before simplification.
    pub raw_mesh_mb: Option<StageSummary>,
    pub served_mesh_mb: Option<StageSummary>,
    pub recommendation: Option<RecommendationMetrics>,
    pub rows: Vec<ReportRow>,
}

fn collect(tasks: &[&TaskRecord], f: impl Fn(&TaskRecord) -> Option<f64>) -> Vec<f64> {
    tasks.iter().filter_map(|t| f(t)).collect()
}

fn mean(v: &[f64]) -> Option<f64> {
    StageSummary::of(v).map(|s| s.mean)
}

/// Aggregates every finished task of `sessions`.
pub fn report_metrics(sessions: &[Session]) -> PipelineReport {
    let tasks: Vec<&TaskRecord> = sessions.iter().flat_map(|s| &s.tasks).collect();
    let n = tasks.len();
    let succeeded: Vec<&TaskRecord> = tasks.iter().copied().filter(|t| t.success).collect();
    let cache_hits = tasks.iter().filter(|t| t.cache_hit).count();
    let errors: u64 = tasks.iter().map(|t| t.errors as u64).sum();
    let ratio = |x: f64| (n > 0).then(|| x / n as f64);

    let mut stages = BTreeMap::new();
    for stage in StageTimings::STAGES {
        if let Some(s) = StageSummary::of(&collect(&tasks, |t| t.timings.get(stage))) {
            stages.insert(stage.to_string(), s);
        }
    }

    let hit_tasks: Vec<&TaskRecord> = succeeded.iter().copied().filter(|t| t.cache_hit).collect();
    let gen_tasks: Vec<&TaskRecord> = succeeded.iter().copied().filter(|t| !t.cache_hit).collect();
    let served_mb = collect(&succeeded, |t| t.served_mesh_bytes.map(|b| b as f64 / BYTES_PER_MB));
    let completion = collect(&succeeded, |t| t.timings.task_completion);
    let responsiveness = collect(&succeeded, |t| t.timings.system_time);

    let values = [
        mean(&completion),
        ratio(succeeded.len() as f64 * 100.0),
        ratio(errors as f64),
        mean(&responsiveness),
        mean(&served_mb),
    ];
    let rows = REPORT_ROWS
        .iter()
        .zip(values)
        .map(|(name, value)| ReportRow {
            name: name.to_string(),
            value,
        })
        .collect();

    PipelineReport {
        schema_version: REPORT_SCHEMA_VERSION,
        sessions: sessions.len(),
        tasks: n,
        succeeded: succeeded.len(),
        failed: n - succeeded.len(),
        cache_hits,
        cache_hit_rate: ratio(cache_hits as f64),
        generator_invocations: tasks.iter().map(|t| t.generator_calls as u64).sum(),
        errors,
        error_rate_per_task: ratio(errors as f64),
        stages,
        time_to_object_cache_hit: StageSummary::of(&collect(&hit_tasks, |t| t.timings.time_to_object)),
        time_to_object_generated: StageSummary::of(&collect(&gen_tasks, |t| t.timings.time_to_object)),
        raw_mesh_mb: StageSummary::of(&collect(&tasks, |t| t.raw_mesh_bytes.map(|b| b as f64 / BYTES_PER_MB))),
        served_mesh_mb: StageSummary::of(&served_mb),
        recommendation: recommendation_metrics(sessions, &tasks),
        rows,
    }
}

/// Diversity over every recommended label; novelty of each round against
/// the earlier rounds of its own session (the first round counts as fully
/// novel); duplicate rate pooled over tasks.
fn recommendation_metrics(sessions: &[Session], tasks: &[&TaskRecord]) -> Option<RecommendationMetrics> {
    let labels: Vec<&str> = sessions.iter().flat_map(|s| s.history.iter().flatten().map(String::as_str)).collect();
    let diversity = diversity_index(&labels).ok()?;
    let mut novelty = Vec::new();
    let mut rounds = 0;
    for s in sessions {
        for (i, round) in s.history.iter().enumerate() {
            rounds += 1;
            if !round.is_empty() {
                novelty.push(novelty_score(&s.history[..i], round));
            }
        }
    }
    let seen: u64 = tasks.iter().map(|t| t.suggestions_seen as u64).sum();
    let dropped: u64 = tasks.iter().map(|t| t.duplicates_dropped as u64).sum();
    Some(RecommendationMetrics {
        diversity_index: diversity,
        novelty_score: mean(&novelty).unwrap_or(0.0),
        duplicate_rate: if seen == 0 { 0.0 } else { dropped as f64 / seen as f64 },
        rounds,
        suggestions: seen as usize,
        duplicates: dropped as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(success: bool, cache_hit: bool, tto: f64) -> TaskRecord {
        TaskRecord {
            success,
            cache_hit,
            generator_calls: u32::from(!cache_hit),
            errors: u32::from(!success),
            timings: StageTimings {
                time_to_object: Some(tto),
                task_completion: Some(tto + 1.0),
                system_time: Some(tto + 0.5),
                ..StageTimings::default()
            },
            raw_mesh_bytes: (!cache_hit).then_some(2_500_000),
            served_mesh_bytes: Some(160_000),
            suggestions_seen: 5,
            duplicates_dropped: 0,
        }
    }

    #[test]
    fn empty_report_has_rows_without_values() {
        let r = report_metrics(&[]);
        assert_eq!(r.tasks, 0);
        assert_eq!(r.cache_hit_rate, None);
        assert_eq!(r.rows.len(), 5);
        assert!(r.rows.iter().all(|row| row.value.is_none()));
        assert!(r.recommendation.is_none());
        let names: Vec<_> = r.rows.iter().map(|row| row.name.as_str()).collect();
        assert_eq!(names, REPORT_ROWS);
    }

    #[test]
    fn ten_sessions_four_hits() {
        let sessions: Vec<Session> = (0..10)
            .map(|i| {
                let mut s = Session::new("en");
                s.tasks.push(task(true, i < 4, if i < 4 { 0.02 } else { 0.3 }));
                s
            })
            .collect();
        let r = report_metrics(&sessions);
        assert_eq!(r.cache_hit_rate, Some(0.4));
        assert_eq!(r.generator_invocations, 6);
        assert_eq!(r.rows[1].value, Some(100.0));
        assert_eq!(r.rows[2].value, Some(0.0));
        assert!((r.rows[4].value.unwrap() - 0.16).abs() < 1e-12);
        assert!((r.time_to_object_cache_hit.unwrap().mean - 0.02).abs() < 1e-12);
        assert_eq!(r.stages["time_to_object"].count, 10);
    }

    #[test]
    fn failures_count_against_success_and_errors() {
        let mut s = Session::new("en");
        s.tasks.push(task(true, false, 0.3));
        s.tasks.push(task(false, false, 0.0));
        let r = report_metrics(&[s]);
        assert_eq!(r.rows[1].value, Some(50.0));
        assert_eq!(r.rows[2].value, Some(0.5));
        assert_eq!(r.failed, 1);
    }

    #[test]
    fn median_of_even_count() {
        let s = StageSummary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert_eq!((s.min, s.max), (1.0, 4.0));
    }

    #[test]
    fn recommendation_block() {
        let mut s = Session::new("en");
        s.history = vec![vec!["a".into(), "b".into()], vec!["b".into(), "c".into()]];
        s.tasks.push(task(true, false, 0.1));
        let r = report_metrics(&[s]);
        let m = r.recommendation.unwrap();
        assert_eq!(m.rounds, 2);
        assert_eq!(m.novelty_score, 0.75);
        let want = diversity_index(&["a", "b", "b", "c"]).unwrap();
        assert_eq!(m.diversity_index, want);
    }
}
