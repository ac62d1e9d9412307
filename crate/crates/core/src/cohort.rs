//! Triplet cohort data model and CSV ingestion.
//!
//! A triplet is one case sample plus its two matched controls; every sample
//! carries a CA125 level and a vector of peak intensities. Triplets know
//! their time to diagnosis (months) and the measurement date of the case
//! sample, which drive chronological ordering and time-window selection.
//!
//! CSV schema (header required, UTF-8, comma-separated): one row per
//! sample, three contiguous rows per `triplet_id`:
//!
//! ```text
//! triplet_id,patient_id,is_case,ca125,time_to_diagnosis_months,measurement_date,peak_001,...,peak_NNN
//! ```
//!
//! `is_case` is 0/1, `ca125` is a positive decimal, peaks are non-negative
//! decimals, `measurement_date` is ISO-8601. The triplet's time to
//! diagnosis and date are taken from its case row.

use std::collections::BTreeMap;
use std::path::Path;

pub use crate::date::Date;
use crate::error::{Error, Result};

/// One serum sample: an opaque patient id, the CA125 level, the peak
/// intensity vector and the case/control flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    patient_id: String,
    ca125: f64,
    peaks: Vec<f64>,
    is_case: bool,
}

impl Sample {
    pub fn new(patient_id: String, ca125: f64, peaks: Vec<f64>, is_case: bool) -> Result<Self> {
        if !ca125.is_finite() || ca125 <= 0.0 {
            return Err(Error::data(format!(
                "patient {patient_id}: CA125 must be positive, got {ca125}"
            )));
        }
        for (i, &p) in peaks.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::data(format!(
                    "patient {patient_id}: peak {} must be a non-negative number, got {p}",
                    i + 1
                )));
            }
        }
        Ok(Sample {
            patient_id,
            ca125,
            peaks,
            is_case,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn ca125(&self) -> f64 {
        self.ca125
    }

    /// Intensity of the 1-based peak `p`, if present.
    pub fn peak(&self, p: u16) -> Option<f64> {
        self.peaks.get(p as usize - 1).copied()
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }

    pub fn is_case(&self) -> bool {
        self.is_case
    }
}

/// One case sample with its two matched controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    id: String,
    samples: [Sample; 3],
    case_position: usize,
    time_to_diagnosis: f64,
    measurement_date: Date,
}

impl Triplet {
    pub fn new(
        id: String,
        samples: [Sample; 3],
        time_to_diagnosis: f64,
        measurement_date: Date,
    ) -> Result<Self> {
        let cases: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.is_case.then_some(i))
            .collect();
        if cases.len() != 1 {
            return Err(Error::data(format!(
                "triplet {id}: expected exactly 1 case among 3 samples, found {}",
                cases.len()
            )));
        }
        if samples[1].peaks.len() != samples[0].peaks.len()
            || samples[2].peaks.len() != samples[0].peaks.len()
        {
            return Err(Error::data(format!(
                "triplet {id}: samples disagree on the number of peaks"
            )));
        }
        if !time_to_diagnosis.is_finite() || time_to_diagnosis < 0.0 {
            return Err(Error::data(format!(
                "triplet {id}: time to diagnosis must be >= 0, got {time_to_diagnosis}"
            )));
        }
        Ok(Triplet {
            id,
            case_position: cases[0],
            samples,
            time_to_diagnosis,
            measurement_date,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[Sample; 3] {
        &self.samples
    }

    /// 0-based position of the case sample.
    pub fn case_position(&self) -> usize {
        self.case_position
    }

    pub fn case_sample(&self) -> &Sample {
        &self.samples[self.case_position]
    }

    pub fn time_to_diagnosis(&self) -> f64 {
        self.time_to_diagnosis
    }

    pub fn measurement_date(&self) -> Date {
        self.measurement_date
    }

    pub fn num_peaks(&self) -> usize {
        self.samples[0].peaks.len()
    }

    /// Copy of this triplet with the case label moved to `position`;
    /// features are untouched.
    pub fn with_case_position(&self, position: usize) -> Result<Triplet> {
        if position >= 3 {
            return Err(Error::input(format!(
                "case position must be 0..3, got {position}"
            )));
        }
        let mut samples = self.samples.clone();
        for (i, sample) in samples.iter_mut().enumerate() {
            sample.is_case = i == position;
        }
        Ok(Triplet {
            id: self.id.clone(),
            samples,
            case_position: position,
            time_to_diagnosis: self.time_to_diagnosis,
            measurement_date: self.measurement_date,
        })
    }
}

/// A collection of triplets with a shared peak count.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    triplets: Vec<Triplet>,
    n_peaks: usize,
}

impl Cohort {
    pub fn new(triplets: Vec<Triplet>) -> Result<Self> {
        let n_peaks = match triplets.first() {
            Some(t) => t.num_peaks(),
            None => return Err(Error::data("cohort must contain at least one triplet")),
        };
        for t in &triplets {
            if t.num_peaks() != n_peaks {
                return Err(Error::data(format!(
                    "triplet {}: has {} peaks, cohort has {n_peaks}",
                    t.id(),
                    t.num_peaks()
                )));
            }
        }
        Ok(Cohort { triplets, n_peaks })
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn n_peaks(&self) -> usize {
        self.n_peaks
    }

    /// Triplets in ascending order of the case sample's measurement date,
    /// ties broken by triplet id.
    pub fn order_chronological(&self) -> Vec<&Triplet> {
        let mut ordered: Vec<&Triplet> = self.triplets.iter().collect();
        ordered.sort_by(|a, b| {
            a.measurement_date
                .cmp(&b.measurement_date)
                .then_with(|| a.id.cmp(&b.id))
        });
        ordered
    }

    /// Select the window `S_{t,theta}`: triplets whose time to diagnosis
    /// lies in `[t, t+theta)` (or `[t, t+theta]` when `closed_right`),
    /// keeping only the latest-dated triplet of each case patient. May be
    /// empty; callers decide how to treat empty windows.
    pub fn select_window(&self, t: f64, theta: f64, closed_right: bool) -> Vec<Triplet> {
        let in_window = |tau: f64| {
            if closed_right {
                tau >= t && tau <= t + theta
            } else {
                tau >= t && tau < t + theta
            }
        };
        // Latest per case patient: max by (measurement_date, id).
        let mut latest: BTreeMap<&str, &Triplet> = BTreeMap::new();
        for triplet in &self.triplets {
            if !in_window(triplet.time_to_diagnosis) {
                continue;
            }
            let key = triplet.case_sample().patient_id();
            let replace = match latest.get(key) {
                Some(current) => {
                    (triplet.measurement_date, triplet.id.as_str())
                        > (current.measurement_date, current.id.as_str())
                }
                None => true,
            };
            if replace {
                latest.insert(key, triplet);
            }
        }
        // Preserve the cohort's original triplet order in the output.
        let selected: Vec<*const Triplet> = latest.values().map(|t| *t as *const Triplet).collect();
        self.triplets
            .iter()
            .filter(|t| selected.contains(&(*t as *const Triplet)))
            .cloned()
            .collect()
    }

    /// Replace zero peak intensities by half the smallest strictly positive
    /// intensity of that peak across the cohort, so every logarithm
    /// downstream is defined. A peak that is zero everywhere cannot be
    /// floored and is a data error.
    pub fn floor_zero_peaks(&self) -> Result<Cohort> {
        let mut floors = vec![f64::INFINITY; self.n_peaks];
        let mut has_zero = vec![false; self.n_peaks];
        for triplet in &self.triplets {
            for sample in triplet.samples.iter() {
                for (p, &v) in sample.peaks.iter().enumerate() {
                    if v > 0.0 {
                        floors[p] = floors[p].min(v);
                    } else {
                        has_zero[p] = true;
                    }
                }
            }
        }
        for (p, (&floor, &zero)) in floors.iter().zip(&has_zero).enumerate() {
            if zero && !floor.is_finite() {
                return Err(Error::data(format!(
                    "peak {} is zero for every sample; no positive value to floor to",
                    p + 1
                )));
            }
        }
        let mut cohort = self.clone();
        for triplet in &mut cohort.triplets {
            for sample in triplet.samples.iter_mut() {
                for (p, v) in sample.peaks.iter_mut().enumerate() {
                    if *v == 0.0 {
                        *v = floors[p] / 2.0;
                    }
                }
            }
        }
        Ok(cohort)
    }
}

const FIXED_COLUMNS: [&str; 6] = [
    "triplet_id",
    "patient_id",
    "is_case",
    "ca125",
    "time_to_diagnosis_months",
    "measurement_date",
];

/// Load a cohort from the CSV schema in the module docs.
pub fn load_cohort(path: impl AsRef<Path>) -> Result<Cohort> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?
        .clone();
    let n_peaks = parse_header(&headers)?;

    struct Row {
        line: u64,
        triplet_id: String,
        patient_id: String,
        is_case: bool,
        ca125: f64,
        time_to_diagnosis: f64,
        date: Date,
        peaks: Vec<f64>,
    }

    let mut rows: Vec<Row> = Vec::new();
    for (index, record) in reader.records().enumerate() {
        let line = index as u64 + 2; // 1-based, after the header line
        let record = record.map_err(|e| Error::data(format!("line {line}: {e}")))?;
        if record.len() != FIXED_COLUMNS.len() + n_peaks {
            return Err(Error::data(format!(
                "line {line}: expected {} fields, got {}",
                FIXED_COLUMNS.len() + n_peaks,
                record.len()
            )));
        }
        let field = |i: usize| record.get(i).unwrap_or_default().trim();
        let parse_f64 = |i: usize, what: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::data(format!("line {line}: bad {what} {:?}", field(i))))
        };
        let is_case = match field(2) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::data(format!(
                    "line {line}: is_case must be 0 or 1, got {other:?}"
                )))
            }
        };
        let mut peaks = Vec::with_capacity(n_peaks);
        for p in 0..n_peaks {
            peaks.push(parse_f64(
                FIXED_COLUMNS.len() + p,
                &format!("peak_{:03}", p + 1),
            )?);
        }
        rows.push(Row {
            line,
            triplet_id: field(0).to_string(),
            patient_id: field(1).to_string(),
            is_case,
            ca125: parse_f64(3, "ca125")?,
            time_to_diagnosis: parse_f64(4, "time_to_diagnosis_months")?,
            date: Date::parse(field(5)).map_err(|e| Error::data(format!("line {line}: {e}")))?,
            peaks,
        });
    }

    // Group contiguous runs of triplet_id; each must be exactly 3 rows.
    let mut triplets = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();
    let mut i = 0;
    while i < rows.len() {
        let id = rows[i].triplet_id.clone();
        let mut j = i;
        while j < rows.len() && rows[j].triplet_id == id {
            j += 1;
        }
        if j - i != 3 {
            return Err(Error::data(format!(
                "triplet {id} (line {}): has {} rows, expected 3",
                rows[i].line,
                j - i
            )));
        }
        if !seen_ids.insert(id.clone()) {
            return Err(Error::data(format!(
                "triplet {id} (line {}): rows are not contiguous",
                rows[i].line
            )));
        }
        let group = &rows[i..j];
        let case_row = match group.iter().filter(|r| r.is_case).count() {
            1 => group.iter().find(|r| r.is_case).unwrap(),
            n => {
                return Err(Error::data(format!(
                    "triplet {id} (line {}): has {n} case rows, expected 1",
                    rows[i].line
                )))
            }
        };
        let build = || -> Result<Triplet> {
            let samples = [
                Sample::new(
                    group[0].patient_id.clone(),
                    group[0].ca125,
                    group[0].peaks.clone(),
                    group[0].is_case,
                )?,
                Sample::new(
                    group[1].patient_id.clone(),
                    group[1].ca125,
                    group[1].peaks.clone(),
                    group[1].is_case,
                )?,
                Sample::new(
                    group[2].patient_id.clone(),
                    group[2].ca125,
                    group[2].peaks.clone(),
                    group[2].is_case,
                )?,
            ];
            Triplet::new(
                id.clone(),
                samples,
                case_row.time_to_diagnosis,
                case_row.date,
            )
        };
        triplets.push(
            build()
                .map_err(|e| Error::data(format!("triplet {id} (line {}): {e}", rows[i].line)))?,
        );
        i = j;
    }

    Cohort::new(triplets)
}

fn parse_header(headers: &csv::StringRecord) -> Result<usize> {
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        match headers.get(i) {
            Some(got) if got == *expected => {}
            got => {
                return Err(Error::data(format!(
                    "header column {} must be {expected:?}, got {:?}",
                    i + 1,
                    got.unwrap_or("<missing>")
                )))
            }
        }
    }
    let n_peaks = headers.len() - FIXED_COLUMNS.len();
    if n_peaks == 0 {
        return Err(Error::data("header has no peak_NNN columns"));
    }
    for p in 0..n_peaks {
        let expected = format!("peak_{:03}", p + 1);
        let got = headers.get(FIXED_COLUMNS.len() + p).unwrap_or_default();
        if got != expected {
            return Err(Error::data(format!(
                "header column {} must be {expected:?}, got {got:?}",
                FIXED_COLUMNS.len() + p + 1
            )));
        }
    }
    Ok(n_peaks)
}

/// Write a cohort in the CSV schema in the module docs. The triplet-level
/// time to diagnosis and date are written on all three rows; floats are
/// written in shortest round-trip form, so `load_cohort` restores them
/// exactly.
pub fn write_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for p in 1..=cohort.n_peaks {
        header.push(format!("peak_{p:03}"));
    }
    writer.write_record(&header)?;
    for triplet in &cohort.triplets {
        for sample in triplet.samples.iter() {
            let mut record: Vec<String> = vec![
                triplet.id.clone(),
                sample.patient_id.clone(),
                if sample.is_case { "1" } else { "0" }.to_string(),
                format!("{}", sample.ca125),
                format!("{}", triplet.time_to_diagnosis),
                triplet.measurement_date.to_string(),
            ];
            for &p in &sample.peaks {
                record.push(format!("{p}"));
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}
