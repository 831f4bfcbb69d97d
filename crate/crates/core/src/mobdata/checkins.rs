use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::{DataError, LatLon, Trajectory, VisitRecord};

/// Records plus the dense-id mapping built while reading them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedCheckins {
    pub records: Vec<VisitRecord>,
    /// `original_ids[dense]` is the identifier as it appeared in the input.
    pub original_ids: Vec<String>,
    /// Coordinates of each dense id, taken from its first record.
    pub locations: Vec<LatLon>,
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    // Zone-less timestamps are read as UTC.
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

/// Reads `user<d>location<d>lat<d>lon<d>timestamp` lines.
///
/// Location identifiers are re-indexed densely in order of first
/// appearance. Blank lines are skipped.
pub fn parse_checkins<R: BufRead>(reader: R, delimiter: char) -> Result<ParsedCheckins, DataError> {
    let mut out = ParsedCheckins::default();
    let mut dense: HashMap<String, usize> = HashMap::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if fields.len() != 5 {
            return Err(DataError::Malformed {
                line: line_no,
                field: "record",
                reason: format!("expected 5 fields, found {}", fields.len()),
            });
        }
        let malformed = |field: &'static str, reason: &str| DataError::Malformed {
            line: line_no,
            field,
            reason: reason.to_string(),
        };
        if fields[0].is_empty() {
            return Err(malformed("user", "empty"));
        }
        if fields[1].is_empty() {
            return Err(malformed("location", "empty"));
        }
        let lat: f64 = fields[2]
            .parse()
            .map_err(|_| malformed("lat", fields[2]))?;
        let lon: f64 = fields[3]
            .parse()
            .map_err(|_| malformed("lon", fields[3]))?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(DataError::OutOfRange {
                line: line_no,
                field: "lat",
                value: lat,
            });
        }
        if !(lon > -180.0 && lon <= 180.0) {
            return Err(DataError::OutOfRange {
                line: line_no,
                field: "lon",
                value: lon,
            });
        }
        let timestamp =
            parse_timestamp(fields[4]).ok_or_else(|| malformed("timestamp", fields[4]))?;
        if timestamp < 0 {
            return Err(DataError::OutOfRange {
                line: line_no,
                field: "timestamp",
                value: timestamp as f64,
            });
        }

        let next = dense.len();
        let location = *dense.entry(fields[1].to_string()).or_insert_with(|| {
            out.original_ids.push(fields[1].to_string());
            out.locations.push(LatLon::new(lat, lon));
            next
        });
        out.records.push(VisitRecord {
            user: fields[0].to_string(),
            location,
            lat,
            lon,
            timestamp,
        });
    }
    Ok(out)
}

/// Output of [`discretize`]: one entry per user-day, aligned by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Discretized {
    pub trajectories: Vec<Trajectory>,
    /// Number of raw records that fell on each user-day.
    pub raw_counts: Vec<usize>,
    /// Raw `(location, slot)` observations of each user-day, before fill-in.
    pub raw_visits: Vec<Vec<(usize, usize)>>,
}

/// Groups records by `(user, local day)` and lays each group on a grid of
/// `slots` equal time-of-day bins.
///
/// Within a bin the latest record wins. Empty bins take the previous bin's
/// location; bins before the first observation take the first observed one.
/// `utc_offset_secs` fixes the single time zone used to derive local days
/// and hours.
pub fn discretize(
    records: &[VisitRecord],
    slots: usize,
    utc_offset_secs: i64,
) -> Result<Discretized, DataError> {
    if slots == 0 || 24 % slots != 0 {
        return Err(DataError::BadSlotCount(slots));
    }
    let hours_per_slot = 24 / slots as i64;

    // (user, day) -> records in (timestamp, stream order)
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<(i64, usize, usize)>> = BTreeMap::new();
    for (order, r) in records.iter().enumerate() {
        let local = r.timestamp + utc_offset_secs;
        let day = DateTime::from_timestamp(local.div_euclid(86_400) * 86_400, 0)
            .expect("timestamp in chrono range")
            .date_naive();
        let hour = local.rem_euclid(86_400) / 3600;
        let slot = (hour / hours_per_slot) as usize;
        groups
            .entry((r.user.as_str(), day))
            .or_default()
            .push((r.timestamp, order, slot));
    }

    let mut out = Discretized::default();
    for ((user, day), mut visits) in groups {
        visits.sort_unstable_by_key(|&(ts, order, _)| (ts, order));
        let mut grid: Vec<Option<usize>> = vec![None; slots];
        let mut raw = Vec::with_capacity(visits.len());
        for &(_, order, slot) in &visits {
            let loc = records[order].location;
            grid[slot] = Some(loc);
            raw.push((loc, slot));
        }
        let first = grid.iter().flatten().copied().next().expect("non-empty group");
        let mut current = first;
        let filled = grid
            .into_iter()
            .map(|cell| {
                if let Some(loc) = cell {
                    current = loc;
                }
                current
            })
            .collect();
        out.trajectories.push(Trajectory::new(user, day, filled));
        out.raw_counts.push(visits.len());
        out.raw_visits.push(raw);
    }
    Ok(out)
}

/// Keeps user-days with at least `min_daily` raw records.
///
/// The default of 9 keeps days with more than eight records.
pub fn filter_min_visits(
    trajectories: Vec<Trajectory>,
    raw_counts: &[usize],
    min_daily: usize,
) -> Vec<Trajectory> {
    trajectories
        .into_iter()
        .zip(raw_counts)
        .filter(|(_, &c)| c >= min_daily)
        .map(|(t, _)| t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ParsedCheckins, DataError> {
        parse_checkins(text.as_bytes(), ',')
    }

    fn rec(user: &str, location: usize, ts: &str) -> VisitRecord {
        VisitRecord {
            user: user.into(),
            location,
            lat: 0.0,
            lon: 0.0,
            timestamp: parse_timestamp(ts).unwrap(),
        }
    }

    #[test]
    fn parses_documented_record() {
        let p = parse("u1,loc9,40.7,-74.0,2012-04-03T12:05:00Z\n").unwrap();
        assert_eq!(p.records.len(), 1);
        let r = &p.records[0];
        assert_eq!(r.user, "u1");
        assert_eq!(r.location, 0);
        assert_eq!(r.lat, 40.7);
        assert_eq!(r.lon, -74.0);
        assert_eq!(r.timestamp, 1_333_454_700);
        assert_eq!(p.original_ids, vec!["loc9".to_string()]);
    }

    #[test]
    fn reindexes_in_order_of_first_appearance() {
        let p = parse(
            "u1,b,1,1,2012-04-03T12:05:00Z\nu1,a,2,2,2012-04-03T13:05:00Z\nu2,b,1,1,2012-04-03T14:00:00Z\n",
        )
        .unwrap();
        let ids: Vec<_> = p.records.iter().map(|r| r.location).collect();
        assert_eq!(ids, vec![0, 1, 0]);
        assert_eq!(p.original_ids, vec!["b", "a"]);
        assert_eq!(p.locations[1], LatLon::new(2.0, 2.0));
    }

    #[test]
    fn rejects_out_of_range_latitude() {
        let err = parse("u1,loc9,95.0,-74.0,2012-04-03T12:05:00Z").unwrap_err();
        assert!(matches!(err, DataError::OutOfRange { line: 1, field: "lat", .. }));
        let err = parse("u1,loc9,10.0,-180.0,2012-04-03T12:05:00Z").unwrap_err();
        assert!(matches!(err, DataError::OutOfRange { field: "lon", .. }));
    }

    #[test]
    fn malformed_line_names_line_and_field() {
        let err = parse("u1,a,1,1,2012-04-03T12:05:00Z\nu1,a,x,1,2012-04-03T12:05:00Z").unwrap_err();
        match err {
            DataError::Malformed { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "lat");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse("u1,a,1,1,yesterday").unwrap_err();
        assert!(matches!(err, DataError::Malformed { field: "timestamp", .. }));
        let err = parse("u1,a,1,1").unwrap_err();
        assert!(matches!(err, DataError::Malformed { field: "record", .. }));
    }

    #[test]
    fn empty_stream_is_empty() {
        assert!(parse("").unwrap().records.is_empty());
    }

    #[test]
    fn custom_delimiter() {
        let p = parse_checkins("u1\tx\t1.5\t2.5\t2012-04-03 01:00:00".as_bytes(), '\t').unwrap();
        assert_eq!(p.records[0].lat, 1.5);
    }

    #[test]
    fn last_record_wins_and_gaps_forward_fill() {
        let recs = vec![
            rec("u", 0, "2012-04-03T09:10:00Z"),
            rec("u", 1, "2012-04-03T09:50:00Z"),
            rec("u", 2, "2012-04-03T11:00:00Z"),
        ];
        let d = discretize(&recs, 24, 0).unwrap();
        assert_eq!(d.trajectories.len(), 1);
        let s = &d.trajectories[0].slots;
        assert_eq!(s[9], 1);
        assert_eq!(s[10], 1);
        assert_eq!(s[11], 2);
        // leading hours back-filled from the first observed slot
        assert!(s[..9].iter().all(|&l| l == 1));
        assert!(s[12..].iter().all(|&l| l == 2));
        assert_eq!(d.raw_counts, vec![3]);
    }

    #[test]
    fn lone_midnight_record_fills_the_day() {
        let d = discretize(&[rec("u", 4, "2012-04-03T00:00:00Z")], 24, 0).unwrap();
        assert_eq!(d.trajectories[0].slots, vec![4; 24]);
    }

    #[test]
    fn records_on_two_days_give_two_trajectories() {
        let recs = vec![
            rec("u", 0, "2012-04-03T23:10:00Z"),
            rec("u", 1, "2012-04-04T01:00:00Z"),
        ];
        let d = discretize(&recs, 24, 0).unwrap();
        assert_eq!(d.trajectories.len(), 2);
        // a +2h zone moves the first record to the next local day
        let d = discretize(&recs, 24, 7200).unwrap();
        assert_eq!(d.trajectories.len(), 1);
        assert_eq!(d.trajectories[0].slots[1], 0);
        assert_eq!(d.trajectories[0].slots[3], 1);
    }

    #[test]
    fn coarse_slots() {
        let d = discretize(&[rec("u", 3, "2012-04-03T13:00:00Z")], 4, 0).unwrap();
        assert_eq!(d.trajectories[0].slots.len(), 4);
        assert!(discretize(&[], 5, 0).is_err());
    }

    #[test]
    fn min_visit_threshold_is_inclusive_of_nine() {
        let day = NaiveDate::from_ymd_opt(2012, 4, 3).unwrap();
        let ts: Vec<_> = (0..3).map(|i| Trajectory::new(format!("{i}"), day, vec![0; 24])).collect();
        let kept = filter_min_visits(ts, &[9, 8, 24], 9);
        let users: Vec<_> = kept.iter().map(|t| t.user.as_str()).collect();
        assert_eq!(users, vec!["0", "2"]);
    }
}
