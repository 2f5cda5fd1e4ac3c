//! Resource pools from correlated activity profiles, and weekly timetables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ParameterError;
use crate::event_log::{EventLog, Timestamp, AUTO_RESOURCE};

const HOURS_PER_WEEK: usize = 168;

fn hour_of_week(t: Timestamp) -> usize {
    let days = t.div_euclid(86_400);
    // 1970-01-01 was a Thursday; weekday 0 is Monday
    let weekday = (days + 3).rem_euclid(7) as usize;
    let hour = (t.rem_euclid(86_400) / 3600) as usize;
    weekday * 24 + hour
}

/// Weekly availability at hour granularity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timetable {
    hours: [bool; HOURS_PER_WEEK],
}

impl Default for Timetable {
    fn default() -> Self {
        Self::always()
    }
}

impl Timetable {
    pub fn always() -> Self {
        Self {
            hours: [true; HOURS_PER_WEEK],
        }
    }

    /// Same daily window on the given weekdays (0 = Monday).
    pub fn weekly(days: &[u8], start_hour: u8, end_hour: u8) -> Self {
        let mut hours = [false; HOURS_PER_WEEK];
        for &d in days {
            for h in start_hour..end_hour.min(24) {
                hours[d as usize * 24 + h as usize] = true;
            }
        }
        Self { hours }
    }

    pub fn is_always(&self) -> bool {
        self.hours.iter().all(|h| *h)
    }

    pub fn is_available(&self, t: Timestamp) -> bool {
        self.hours[hour_of_week(t)]
    }

    /// Earliest instant at or after `t` inside a window; `None` if the timetable is empty.
    pub fn next_available(&self, t: Timestamp) -> Option<Timestamp> {
        if self.is_available(t) {
            return Some(t);
        }
        let mut slot = (t.div_euclid(3600) + 1) * 3600;
        for _ in 0..HOURS_PER_WEEK {
            if self.is_available(slot) {
                return Some(slot);
            }
            slot += 3600;
        }
        None
    }

    /// Instant at which `work` seconds of effort started at `start` complete,
    /// counting only available time.
    pub fn finish(&self, start: Timestamp, work: i64) -> Option<Timestamp> {
        if self.is_always() {
            return Some(start + work);
        }
        let mut t = start;
        let mut remaining = work;
        while remaining > 0 {
            t = self.next_available(t)?;
            let boundary = (t.div_euclid(3600) + 1) * 3600;
            let chunk = remaining.min(boundary - t);
            t += chunk;
            remaining -= chunk;
        }
        Some(t)
    }

    /// Windows as `(weekday, start_hour, end_hour)` with `end_hour` exclusive.
    pub fn windows(&self) -> Vec<(u8, u8, u8)> {
        let mut out = Vec::new();
        for day in 0..7u8 {
            let mut h = 0u8;
            while h < 24 {
                if self.hours[day as usize * 24 + h as usize] {
                    let s = h;
                    while h < 24 && self.hours[day as usize * 24 + h as usize] {
                        h += 1;
                    }
                    out.push((day, s, h));
                } else {
                    h += 1;
                }
            }
        }
        out
    }

    pub fn from_windows(windows: &[(u8, u8, u8)]) -> Result<Self, ParameterError> {
        let mut hours = [false; HOURS_PER_WEEK];
        for &(d, s, e) in windows {
            if d > 6 || s >= e || e > 24 {
                return Err(ParameterError::InvalidWindow(d, s, e));
            }
            for h in s..e {
                hours[d as usize * 24 + h as usize] = true;
            }
        }
        Ok(Self { hours })
    }

    /// Smallest set of hours-of-week (most used first) that covers at least
    /// `coverage` of the observed busy hours.
    pub fn from_coverage(intervals: impl IntoIterator<Item = (Timestamp, Timestamp)>, coverage: f64) -> Self {
        let mut counts = [0u64; HOURS_PER_WEEK];
        for (start, end) in intervals {
            let mut slot = start.div_euclid(3600) * 3600;
            let mut steps = 0;
            loop {
                counts[hour_of_week(slot)] += 1;
                slot += 3600;
                steps += 1;
                if slot >= end || steps >= HOURS_PER_WEEK {
                    break;
                }
            }
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Self::always();
        }
        let mut order: Vec<usize> = (0..HOURS_PER_WEEK).collect();
        order.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
        let mut hours = [false; HOURS_PER_WEEK];
        let mut covered = 0u64;
        for h in order {
            if covered as f64 >= coverage * total as f64 || counts[h] == 0 {
                break;
            }
            hours[h] = true;
            covered += counts[h];
        }
        Self { hours }
    }
}

impl Serialize for Timetable {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.windows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Timetable {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let windows = Vec::<(u8, u8, u8)>::deserialize(d)?;
        Self::from_windows(&windows).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourcePool {
    pub id: String,
    pub members: BTreeSet<String>,
    pub timetable: Timetable,
}

impl ResourcePool {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn is_auto(&self) -> bool {
        self.id == AUTO_RESOURCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TimetableMode {
    /// Every pool works around the clock.
    #[default]
    Always,
    /// Hours-of-week covering this fraction of the pool's busy hours.
    Coverage(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolDiscovery {
    pub pools: Vec<ResourcePool>,
    /// Activity label to pool id.
    pub activity_pool: BTreeMap<String, String>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    match (saa == 0.0, sbb == 0.0) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => sab / (saa * sbb).sqrt(),
    }
}

pub fn discover_resource_pools(
    log: &EventLog,
    similarity_threshold: f64,
    timetables: TimetableMode,
) -> Result<PoolDiscovery, ParameterError> {
    if !(0.0..=1.0).contains(&similarity_threshold) {
        return Err(ParameterError::Threshold(similarity_threshold));
    }
    let activities: Vec<String> = log.activities().into_iter().map(str::to_string).collect();
    let act_index: BTreeMap<&str, usize> = activities.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let mut profiles: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut has_auto = false;
    for e in log.events() {
        if e.is_auto() {
            has_auto = true;
            continue;
        }
        profiles
            .entry(e.resource.as_str())
            .or_insert_with(|| vec![0.0; activities.len()])[act_index[e.activity.as_str()]] += 1.0;
    }
    let resources: Vec<&str> = profiles.keys().copied().collect();
    let n = resources.len();

    let mut component = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for seed in 0..n {
        if component[seed] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([seed]);
        component[seed] = id;
        while let Some(r) = queue.pop_front() {
            members.push(r);
            for other in 0..n {
                if component[other] == usize::MAX
                    && pearson(&profiles[resources[r]], &profiles[resources[other]]) >= similarity_threshold
                {
                    component[other] = id;
                    queue.push_back(other);
                }
            }
        }
        groups.push(members);
    }

    let mut pools: Vec<ResourcePool> = groups
        .iter()
        .enumerate()
        .map(|(i, members)| ResourcePool {
            id: format!("pool_{}", i + 1),
            members: members.iter().map(|&r| resources[r].to_string()).collect(),
            timetable: Timetable::always(),
        })
        .collect();
    if has_auto {
        pools.push(ResourcePool {
            id: AUTO_RESOURCE.to_string(),
            members: BTreeSet::from([AUTO_RESOURCE.to_string()]),
            timetable: Timetable::always(),
        });
    }
    if pools.is_empty() {
        return Err(ParameterError::NoResources);
    }
    let pool_of = |resource: &str| -> usize {
        if resource == AUTO_RESOURCE {
            pools.len() - 1
        } else {
            component[resources.binary_search(&resource).expect("profiled resource")]
        }
    };

    let mut per_activity: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for e in log.events() {
        per_activity
            .entry(e.activity.as_str())
            .or_insert_with(|| vec![0; pools.len()])[pool_of(&e.resource)] += 1;
    }
    let activity_pool = per_activity
        .into_iter()
        .map(|(a, counts)| {
            // first maximum wins
            let best = counts
                .iter()
                .enumerate()
                .fold(0, |b, (i, c)| if *c > counts[b] { i } else { b });
            (a.to_string(), pools[best].id.clone())
        })
        .collect();

    if let TimetableMode::Coverage(q) = timetables {
        let mut intervals: Vec<Vec<(Timestamp, Timestamp)>> = vec![Vec::new(); pools.len()];
        for e in log.events() {
            intervals[pool_of(&e.resource)].push((e.start, e.end));
        }
        for (pool, iv) in pools.iter_mut().zip(intervals) {
            if !pool.is_auto() {
                pool.timetable = Timetable::from_coverage(iv, q);
            }
        }
    }
    Ok(PoolDiscovery { pools, activity_pool })
}
