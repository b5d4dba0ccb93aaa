mod common;

use cfbd::engine::EventBody;
use cfbd::{CohortOutcome, DesignConfig, Dose, DoseGrid1, DoseGrid2, Error, Grid, StopReason, TrialState};
use common::TestRng;
use proptest::prelude::*;

fn one_agent_trial(cfg: DesignConfig) -> TrialState {
    let grid = Grid::One(DoseGrid1::default_prior(6, cfg.theta0, cfg.delta0).unwrap());
    TrialState::start(cfg, grid).unwrap()
}

fn two_agent_trial(cfg: DesignConfig) -> TrialState {
    let grid = Grid::Two(DoseGrid2::default_prior(3, 4, cfg.theta0).unwrap());
    TrialState::start(cfg, grid).unwrap()
}

/// Drives a trial to completion with DLTs drawn from `toxicity`.
fn run_to_end(mut state: TrialState, rng: &mut TestRng, toxicity: f64) -> TrialState {
    while !state.is_stopped() {
        let n = state.next_cohort_size();
        let t = (0..n).filter(|_| rng.unit() < toxicity).count() as u32;
        state.report_cohort(CohortOutcome::new(state.current, n, t).unwrap()).unwrap();
    }
    state
}

#[test]
fn every_trial_terminates_within_n_max() {
    let mut rng = TestRng::new(31);
    for k in 0..300 {
        let cfg = DesignConfig {
            cohort_size: 1 + (k % 4),
            ..DesignConfig::one_agent().with_calibration(k % 2 == 0)
        };
        let p = rng.range(0.0, 1.0);
        let state = run_to_end(one_agent_trial(cfg.clone()), &mut rng, p);
        assert!(state.n_total <= cfg.n_max);
        // each cohort adds at least one patient, so the trial ends in time
        assert!(state.cohorts.len() as u32 <= cfg.n_max);
        assert!(state.finalize().is_ok());
    }
}

#[test]
fn replay_reproduces_state() {
    let mut rng = TestRng::new(32);
    for k in 0..40 {
        let cfg = if k % 2 == 0 {
            DesignConfig::one_agent().with_calibration(k % 4 == 0)
        } else {
            DesignConfig::two_agent().with_calibration(k % 4 == 1)
        };
        let start = if k % 2 == 0 { one_agent_trial(cfg) } else { two_agent_trial(cfg) };
        let p = rng.range(0.05, 0.6);
        let done = run_to_end(start, &mut rng, p);
        let again = TrialState::replay(done.config.clone(), done.initial_grid.clone(), &done.events).unwrap();
        assert_eq!(again, done);
        let text = serde_json::to_string(&done).unwrap();
        assert_eq!(serde_json::from_str::<TrialState>(&text).unwrap(), done);
    }
}

#[test]
fn tampered_log_is_rejected() {
    let mut rng = TestRng::new(33);
    let done = run_to_end(one_agent_trial(DesignConfig::one_agent()), &mut rng, 0.3);
    let mut events = done.events.clone();
    let last = events.iter().rposition(|e| matches!(e.body, EventBody::Recommended { .. })).unwrap();
    events[last].body = EventBody::Recommended {
        dose: Some(Dose::Single(5)),
    };
    assert!(TrialState::replay(done.config.clone(), done.initial_grid.clone(), &events).is_err());
}

#[test]
fn protocol_errors() {
    let mut s = one_agent_trial(DesignConfig::one_agent());
    assert!(matches!(
        s.report_cohort(CohortOutcome::new(2, 1, 0).unwrap()),
        Err(Error::Protocol(_))
    ));
    let mut s3 = one_agent_trial(DesignConfig {
        cohort_size: 3,
        ..DesignConfig::one_agent()
    });
    assert!(matches!(
        s3.report_cohort(CohortOutcome::new(0, 2, 0).unwrap()),
        Err(Error::Protocol(_))
    ));
    // a failed report leaves the state untouched
    let before = s.clone();
    let _ = s.report_cohort(CohortOutcome::new(1, 1, 0).unwrap());
    assert_eq!(s, before);
    assert!(s.finalize().is_err());
}

#[test]
fn all_toxic_trial_recommends_nothing() {
    let mut s = one_agent_trial(DesignConfig::one_agent());
    while !s.is_stopped() {
        let n = s.next_cohort_size();
        s.report_cohort(CohortOutcome::new(s.current, n, n).unwrap()).unwrap();
    }
    assert_eq!(s.stop.reason(), StopReason::AllToxic);
    assert_eq!(s.n_total, s.config.n_min);
    assert_eq!(s.finalize().unwrap(), None);
    assert!(matches!(
        s.report_cohort(CohortOutcome::new(s.current, 1, 0).unwrap()),
        Err(Error::State(_))
    ));
}

#[test]
fn tallies_count_actual_patients() {
    let mut rng = TestRng::new(34);
    let done = run_to_end(two_agent_trial(DesignConfig::two_agent()), &mut rng, 0.15);
    let treated: u32 = done.dose_tallies().iter().map(|(_, t)| t.n).sum();
    assert_eq!(treated, done.n_total);
    for (dose, tally) in done.dose_tallies() {
        let from_cohorts: u32 = done.cohorts.iter().filter(|c| c.dose == dose).map(|c| c.n).sum();
        assert_eq!(tally.n, from_cohorts);
    }
}

proptest! {
    #[test]
    fn calibrated_grid_has_equal_ess_after_every_cohort(
        outcomes in prop::collection::vec(any::<u8>(), 1..24),
    ) {
        let mut s = one_agent_trial(DesignConfig::one_agent().with_calibration(true));
        for o in outcomes {
            if s.is_stopped() {
                break;
            }
            let n = s.next_cohort_size();
            let t = u32::from(o) % (n + 1);
            s.report_cohort(CohortOutcome::new(s.current, n, t).unwrap()).unwrap();
            let ess = s.grid.ess();
            prop_assert!(ess.iter().all(|e| (e - ess[0]).abs() <= 1e-12));
        }
    }
}
