use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::VideoVerdict;
use crate::model::ClaimAssessment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Claim,
    Url,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    /// Allowed moves: queued→running, running→done, running→failed.
    pub fn can_move_to(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done) | (JobState::Running, JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationJob {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub input_ref: String,
    pub results: Vec<ClaimAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Set for finished video jobs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video_verdict: Option<VideoVerdict>,
}

#[derive(Debug, Error, PartialEq)]
pub enum JobError {
    #[error("unknown job {0:?}")]
    NotFound(String),
    #[error("job {id}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition { id: String, from: JobState, to: JobState },
}

/// In-memory job registry enforcing the state machine.
#[derive(Debug, Default)]
pub struct JobStore {
    jobs: Mutex<HashMap<String, VerificationJob>>,
}

impl JobStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, kind: JobKind, input_ref: impl Into<String>) -> VerificationJob {
        let job = VerificationJob {
            job_id: format!("job-{:016x}", rand::random::<u64>()),
            kind,
            state: JobState::Queued,
            input_ref: input_ref.into(),
            results: Vec::new(),
            error: None,
            video_verdict: None,
        };
        self.jobs.lock().unwrap().insert(job.job_id.clone(), job.clone());
        job
    }

    pub fn get(&self, id: &str) -> Option<VerificationJob> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.jobs.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn transition(
        &self,
        id: &str,
        to: JobState,
        update: impl FnOnce(&mut VerificationJob),
    ) -> Result<(), JobError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = jobs.get_mut(id).ok_or_else(|| JobError::NotFound(id.to_string()))?;
        if !job.state.can_move_to(to) {
            return Err(JobError::IllegalTransition { id: id.to_string(), from: job.state, to });
        }
        job.state = to;
        update(job);
        Ok(())
    }

    pub fn start(&self, id: &str) -> Result<(), JobError> {
        self.transition(id, JobState::Running, |_| {})
    }

    pub fn finish(
        &self,
        id: &str,
        results: Vec<ClaimAssessment>,
        video_verdict: Option<VideoVerdict>,
    ) -> Result<(), JobError> {
        self.transition(id, JobState::Done, |j| {
            j.results = results;
            j.video_verdict = video_verdict;
        })
    }

    pub fn fail(&self, id: &str, error: impl Into<String>) -> Result<(), JobError> {
        let error = error.into();
        self.transition(id, JobState::Failed, |j| j.error = Some(error))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle() {
        let s = JobStore::new();
        let j = s.create(JobKind::Url, "http://x");
        assert_eq!(j.state, JobState::Queued);
        assert!(matches!(s.finish(&j.job_id, vec![], None), Err(JobError::IllegalTransition { .. })));
        s.start(&j.job_id).unwrap();
        s.fail(&j.job_id, "boom").unwrap();
        let got = s.get(&j.job_id).unwrap();
        assert_eq!(got.state, JobState::Failed);
        assert_eq!(got.error.as_deref(), Some("boom"));
        assert!(s.start(&j.job_id).is_err());
        assert_eq!(s.start("nope"), Err(JobError::NotFound("nope".into())));
    }

    #[test]
    fn transition_table() {
        use JobState::*;
        let all = [Queued, Running, Done, Failed];
        let allowed: Vec<_> =
            all.iter().flat_map(|&a| all.iter().map(move |&b| (a, b))).filter(|&(a, b)| a.can_move_to(b)).collect();
        assert_eq!(allowed, vec![(Queued, Running), (Running, Done), (Running, Failed)]);
    }
}
