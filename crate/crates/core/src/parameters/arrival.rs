use chrono::DateTime;
use log::warn;

use super::ParameterError;
use crate::event_log::{EventLog, Timestamp};

fn day(t: Timestamp) -> i64 {
    t.div_euclid(86_400)
}

/// Positive differences between consecutive case start times within each
/// UTC calendar day. The first case of a day contributes no sample. When no
/// day holds two cases, consecutive differences across days are used.
pub fn inter_arrival_series(log: &EventLog) -> Result<Vec<f64>, ParameterError> {
    if log.len() < 2 {
        return Err(ParameterError::TooFewTraces(log.len()));
    }
    let starts: Vec<Timestamp> = log.traces().iter().map(|t| t.start()).collect();
    let within: Vec<f64> = starts
        .windows(2)
        .filter(|w| day(w[0]) == day(w[1]) && w[1] > w[0])
        .map(|w| (w[1] - w[0]) as f64)
        .collect();
    if !within.is_empty() {
        return Ok(within);
    }
    warn!(
        "no two cases start on the same day between {} and {}; using cross-day inter-arrival times",
        DateTime::from_timestamp(starts[0], 0).map_or_else(|| starts[0].to_string(), |d| d.to_rfc3339()),
        DateTime::from_timestamp(starts[starts.len() - 1], 0)
            .map_or_else(|| starts[starts.len() - 1].to_string(), |d| d.to_rfc3339()),
    );
    let across: Vec<f64> = starts
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64)
        .filter(|d| *d > 0.0)
        .collect();
    if across.is_empty() {
        // every case starts at the same instant
        return Ok(vec![0.0; starts.len() - 1]);
    }
    Ok(across)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{parse_timestamp, Event};
    use crate::parameters::distribution::{fit_distribution, Pdf};
    use rand::SeedableRng;
    use rand_distr::Distribution as _;

    fn log_starting_at(starts: &[Timestamp]) -> EventLog {
        let events: Vec<Event> = starts
            .iter()
            .enumerate()
            .map(|(i, s)| Event::new(i.to_string(), "a", "r", *s, *s + 1).unwrap())
            .collect();
        EventLog::from_events(events).unwrap()
    }

    #[test]
    fn same_day_differences() {
        let base = parse_timestamp("2019-05-01 00:00:00").unwrap();
        let log = log_starting_at(&[base, base + 16 * 60, base + 2 * 3600 + 23 * 60]);
        assert_eq!(inter_arrival_series(&log).unwrap(), vec![960.0, 7620.0]);
    }

    #[test]
    fn first_case_of_each_day_is_skipped() {
        let d1 = parse_timestamp("2019-05-01 09:00:00").unwrap();
        let d2 = parse_timestamp("2019-05-02 09:00:00").unwrap();
        let log = log_starting_at(&[d1, d1 + 100, d2, d2 + 50]);
        assert_eq!(inter_arrival_series(&log).unwrap(), vec![100.0, 50.0]);
    }

    #[test]
    fn cross_day_fallback() {
        let d1 = parse_timestamp("2019-05-01 09:00:00").unwrap();
        let log = log_starting_at(&[d1, d1 + 86_400]);
        assert_eq!(inter_arrival_series(&log).unwrap(), vec![86_400.0]);
    }

    #[test]
    fn needs_two_traces() {
        assert!(matches!(
            inter_arrival_series(&log_starting_at(&[0])),
            Err(ParameterError::TooFewTraces(1))
        ));
    }

    #[test]
    fn poisson_arrivals_fit_their_rate() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let exp = rand_distr::Exp::new(1.0 / 100.0).unwrap();
        let mut t = parse_timestamp("2020-01-06 00:00:00").unwrap() as f64;
        let end = t + 86_000.0;
        let mut starts = Vec::new();
        while t < end {
            starts.push(t.round() as i64);
            t += exp.sample(&mut rng);
        }
        starts.dedup();
        let series = inter_arrival_series(&log_starting_at(&starts)).unwrap();
        let fit = fit_distribution(&series).unwrap();
        assert!((fit.mean() - 100.0).abs() < 10.0, "{fit:?}");
        assert!(
            matches!(fit.pdf, Pdf::Exponential { .. } | Pdf::Gamma { .. }),
            "{fit:?}"
        );
    }
}
