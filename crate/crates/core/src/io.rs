//! Flat-file formats.
//!
//! * frame: `stratum_id,station_id,nominal_list[,urban][,state][,tz_offset][,sampled]`
//! * returns: `stratum_id,station_id[,nominal_list],<one column per voting option>`;
//!   an empty vote cell is missing data, distinct from `0`.
//! * arrival log: `timestamp,stratum_id,station_id,<vote columns>` with
//!   ISO-8601 timestamps.
//!
//! All files carry a header row and are UTF-8.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, NaiveDateTime};

use crate::catalog::ElectionCatalog;
use crate::error::{Error, Result};
use crate::sampleframe::{Frame, StationMeta, StationReturn};

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn required(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    column(headers, name).ok_or_else(|| Error::Input(format!("missing column {name}")))
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| Error::Input(format!("line {}: bad {what} {raw:?}", line(rec))))
}

fn line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "urban" | "yes" => Some(true),
        "0" | "false" | "rural" | "no" => Some(false),
        _ => None,
    }
}

pub fn read_frame<R: Read>(reader: R, max_nominal_list: u32) -> Result<Frame> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let stratum = required(&headers, "stratum_id")?;
    let station = required(&headers, "station_id")?;
    let list = required(&headers, "nominal_list")?;
    let urban = column(&headers, "urban");
    let state = column(&headers, "state");
    let tz = column(&headers, "tz_offset");
    let sampled = column(&headers, "sampled");
    let mut stations = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut meta = StationMeta::new(
            parse(&rec, stratum, "stratum_id")?,
            parse(&rec, station, "station_id")?,
            parse(&rec, list, "nominal_list")?,
        );
        if let Some(i) = urban {
            meta.urban = parse_bool(rec.get(i).unwrap_or(""))
                .ok_or_else(|| Error::Input(format!("line {}: bad urban flag", line(&rec))))?;
        }
        if let Some(i) = state {
            meta.state = rec.get(i).unwrap_or("").trim().to_string();
        }
        if let Some(i) = tz {
            meta.tz_offset = parse(&rec, i, "tz_offset")?;
        }
        if let Some(i) = sampled {
            meta.sampled = parse_bool(rec.get(i).unwrap_or(""))
                .ok_or_else(|| Error::Input(format!("line {}: bad sampled flag", line(&rec))))?;
        }
        stations.push(meta);
    }
    Frame::new(stations, max_nominal_list)
}

pub fn write_frame<W: Write>(writer: W, frame: &Frame) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["stratum_id", "station_id", "nominal_list", "urban", "state", "tz_offset", "sampled"])?;
    for s in &frame.stations {
        w.write_record([
            s.stratum.to_string(),
            s.station.to_string(),
            s.nominal_list.to_string(),
            u8::from(s.urban).to_string(),
            s.state.clone(),
            s.tz_offset.to_string(),
            u8::from(s.sampled).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Vote columns of a header, in catalog option order.
fn option_columns(headers: &csv::StringRecord, catalog: &ElectionCatalog) -> Result<Vec<usize>> {
    let known = ["timestamp", "stratum_id", "station_id", "nominal_list"];
    for h in headers.iter() {
        if !known.contains(&h.trim()) && catalog.option_index(h.trim()).is_none() {
            return Err(Error::Input(format!("column {h} is not a voting option")));
        }
    }
    catalog.options.iter().map(|o| required(headers, &o.id)).collect()
}

fn parse_votes(rec: &csv::StringRecord, cols: &[usize]) -> Result<Vec<Option<u64>>> {
    cols.iter()
        .map(|&i| {
            let raw = rec.get(i).unwrap_or("").trim();
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                Ok(None)
            } else {
                raw.parse()
                    .map(Some)
                    .map_err(|_| Error::Input(format!("line {}: bad vote count {raw:?}", line(rec))))
            }
        })
        .collect()
}

fn nominal_list_for(
    rec: &csv::StringRecord,
    col: Option<usize>,
    frame: Option<&Frame>,
    key: (u32, u32),
) -> Result<u32> {
    if let Some(i) = col {
        return parse(rec, i, "nominal_list");
    }
    frame
        .and_then(|f| f.station(key))
        .map(|s| s.nominal_list)
        .ok_or_else(|| Error::Input(format!("station {key:?}: no nominal list in file or frame")))
}

/// Reads a returns file. The nominal list comes from the file when it has a
/// `nominal_list` column, else from the frame.
pub fn read_returns<R: Read>(reader: R, catalog: &ElectionCatalog, frame: Option<&Frame>) -> Result<Vec<StationReturn>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let stratum = required(&headers, "stratum_id")?;
    let station = required(&headers, "station_id")?;
    let list = column(&headers, "nominal_list");
    let cols = option_columns(&headers, catalog)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key = (parse(&rec, stratum, "stratum_id")?, parse(&rec, station, "station_id")?);
        if let Some(f) = frame {
            if f.station(key).is_none() {
                return Err(Error::Input(format!("station {key:?} is not in the frame")));
            }
        }
        out.push(StationReturn {
            stratum: key.0,
            station: key.1,
            nominal_list: nominal_list_for(&rec, list, frame, key)?,
            votes: parse_votes(&rec, &cols)?,
        });
    }
    Ok(out)
}

pub fn write_returns<'a, W: Write>(
    writer: W,
    catalog: &ElectionCatalog,
    returns: impl IntoIterator<Item = &'a StationReturn>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["stratum_id".to_string(), "station_id".into(), "nominal_list".into()];
    header.extend(catalog.options.iter().map(|o| o.id.clone()));
    w.write_record(&header)?;
    for r in returns {
        let mut row = vec![r.stratum.to_string(), r.station.to_string(), r.nominal_list.to_string()];
        row.extend(r.votes.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Frame reconstructed from a population returns file (every station
/// installed, none planned).
pub fn frame_from_returns(returns: &[StationReturn], max_nominal_list: u32) -> Result<Frame> {
    Frame::new(
        returns
            .iter()
            .map(|r| StationMeta::new(r.stratum, r.station, r.nominal_list))
            .collect(),
        max_nominal_list,
    )
}

pub fn parse_timestamp(raw: &str) -> Result<DateTime<FixedOffset>> {
    let raw = raw.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t);
    }
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S"))
        .map(|t| t.and_utc().fixed_offset())
        .map_err(|_| Error::Input(format!("bad timestamp {raw:?}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrivalEvent {
    pub timestamp: DateTime<FixedOffset>,
    pub ret: StationReturn,
}

pub fn read_arrivals<R: Read>(reader: R, catalog: &ElectionCatalog, frame: &Frame) -> Result<Vec<ArrivalEvent>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts = required(&headers, "timestamp")?;
    let stratum = required(&headers, "stratum_id")?;
    let station = required(&headers, "station_id")?;
    let list = column(&headers, "nominal_list");
    let cols = option_columns(&headers, catalog)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let key = (parse(&rec, stratum, "stratum_id")?, parse(&rec, station, "station_id")?);
        let nominal_list = match frame.station(key) {
            Some(s) => s.nominal_list,
            None => nominal_list_for(&rec, list, None, key).unwrap_or(1),
        };
        out.push(ArrivalEvent {
            timestamp: parse_timestamp(rec.get(ts).unwrap_or(""))?,
            ret: StationReturn {
                stratum: key.0,
                station: key.1,
                nominal_list,
                votes: parse_votes(&rec, &cols)?,
            },
        });
    }
    Ok(out)
}

pub fn write_arrivals<W: Write>(writer: W, catalog: &ElectionCatalog, events: &[ArrivalEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_string(), "stratum_id".into(), "station_id".into()];
    header.extend(catalog.options.iter().map(|o| o.id.clone()));
    w.write_record(&header)?;
    for e in events {
        let mut row = vec![e.timestamp.to_rfc3339(), e.ret.stratum.to_string(), e.ret.station.to_string()];
        row.extend(e.ret.votes.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn open(path: impl AsRef<Path>) -> Result<std::fs::File> {
    let path = path.as_ref();
    std::fs::File::open(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}
