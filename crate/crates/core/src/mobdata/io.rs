//! Text formats for trajectories, id maps and location tables.
//!
//! Trajectory file: one line per trajectory,
//! `user,YYYY-MM-DD,loc_0 loc_1 ... loc_{T-1}` with dense ids.
//!
//! Id map: `original_id,dense_id` per line, ordered by dense id.
//!
//! Location table: `dense_id,lat,lon` per line, ordered by dense id, with
//! coordinates printed in shortest round-trip form.

use std::io::{BufRead, Write};

use chrono::NaiveDate;

use super::{DataError, LatLon, Trajectory};

fn malformed(line: usize, field: &'static str, reason: impl Into<String>) -> DataError {
    DataError::Malformed {
        line,
        field,
        reason: reason.into(),
    }
}

fn check_writable(id: &str) -> Result<(), DataError> {
    if id.is_empty() || id.contains([',', '\n', '\r']) {
        return Err(DataError::UnwritableId(id.to_string()));
    }
    Ok(())
}

pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Trajectory]) -> Result<(), DataError> {
    for t in trajectories {
        check_writable(&t.user)?;
        write!(w, "{},{},", t.user, t.day.format("%Y-%m-%d"))?;
        for (i, loc) in t.slots.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ")?;
            }
            write!(w, "{loc}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>, DataError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let mut parts = line.splitn(3, ',');
        let user = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| malformed(n, "user", "missing"))?;
        let day = parts.next().ok_or_else(|| malformed(n, "day", "missing"))?;
        let day = NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|e| malformed(n, "day", e.to_string()))?;
        let slots = parts.next().ok_or_else(|| malformed(n, "slots", "missing"))?;
        let slots = slots
            .split(' ')
            .map(|s| s.parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(n, "slots", e.to_string()))?;
        out.push(Trajectory::new(user, day, slots));
    }
    Ok(out)
}

pub fn write_id_map<W: Write>(mut w: W, original_ids: &[String]) -> Result<(), DataError> {
    for (dense, original) in original_ids.iter().enumerate() {
        check_writable(original)?;
        writeln!(w, "{original},{dense}")?;
    }
    Ok(())
}

/// Returns original ids indexed by dense id.
pub fn read_id_map<R: BufRead>(r: R) -> Result<Vec<String>, DataError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (orig, dense) = line
            .rsplit_once(',')
            .ok_or_else(|| malformed(i + 1, "record", "expected original_id,dense_id"))?;
        let dense: usize = dense.parse().map_err(|_| malformed(i + 1, "dense_id", dense))?;
        if dense != out.len() {
            return Err(malformed(i + 1, "dense_id", "ids must be consecutive from 0"));
        }
        out.push(orig.to_string());
    }
    Ok(out)
}

pub fn write_locations<W: Write>(mut w: W, locations: &[LatLon]) -> Result<(), DataError> {
    for (i, l) in locations.iter().enumerate() {
        writeln!(w, "{i},{:?},{:?}", l.lat, l.lon)?;
    }
    Ok(())
}

pub fn read_locations<R: BufRead>(r: R) -> Result<Vec<LatLon>, DataError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(malformed(n, "record", "expected dense_id,lat,lon"));
        }
        let id: usize = f[0].parse().map_err(|_| malformed(n, "dense_id", f[0]))?;
        if id != out.len() {
            return Err(malformed(n, "dense_id", "ids must be consecutive from 0"));
        }
        let lat: f64 = f[1].parse().map_err(|_| malformed(n, "lat", f[1]))?;
        let lon: f64 = f[2].parse().map_err(|_| malformed(n, "lon", f[2]))?;
        out.push(LatLon::new(lat, lon));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trajectory_line_format_is_exact() {
        let day = NaiveDate::from_ymd_opt(2012, 4, 3).unwrap();
        let t = Trajectory::new("u1", day, (0..24).collect());
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &[t.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "u1,2012-04-03,0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 16 17 18 19 20 21 22 23\n"
        );
        assert_eq!(read_trajectories(buf.as_slice()).unwrap(), vec![t]);
    }

    #[test]
    fn refuses_ids_with_delimiters() {
        let day = NaiveDate::from_ymd_opt(2012, 4, 3).unwrap();
        let t = Trajectory::new("a,b", day, vec![0]);
        assert!(write_trajectories(Vec::new(), &[t]).is_err());
        assert!(write_id_map(Vec::new(), &["x,y".to_string()]).is_err());
    }

    #[test]
    fn id_map_round_trip() {
        let ids = vec!["4b1f".to_string(), "loc 9".to_string()];
        let mut buf = Vec::new();
        write_id_map(&mut buf, &ids).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "4b1f,0\nloc 9,1\n");
        assert_eq!(read_id_map(buf.as_slice()).unwrap(), ids);
    }

    proptest! {
        #[test]
        fn location_table_round_trips_bit_exactly(
            coords in proptest::collection::vec((-90.0f64..=90.0, -179.999f64..=180.0), 0..20)
        ) {
            let locs: Vec<LatLon> = coords.iter().map(|&(a, b)| LatLon::new(a, b)).collect();
            let mut buf = Vec::new();
            write_locations(&mut buf, &locs).unwrap();
            let back = read_locations(buf.as_slice()).unwrap();
            prop_assert_eq!(back.len(), locs.len());
            for (x, y) in back.iter().zip(&locs) {
                prop_assert_eq!(x.lat.to_bits(), y.lat.to_bits());
                prop_assert_eq!(x.lon.to_bits(), y.lon.to_bits());
            }
        }
    }
}
