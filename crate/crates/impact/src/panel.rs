use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::ImpactError;

/// One analyst reply to a report, as logged by the monitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub post_id: String,
    pub region: String,
    pub sent_at: DateTime<Utc>,
    pub template_id: String,
    pub operator: String,
}

/// One gun-violence event from the partner's event database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub date: NaiveDate,
    pub region: String,
    pub victims: u64,
    /// Population of the affected city, in persons.
    pub population: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, ImpactError> {
        if start > end {
            return Err(ImpactError::EmptyWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> {
        let end = self.end;
        self.start.iter_days().take_while(move |d| *d <= end)
    }

    pub fn len(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub window: DateWindow,
    pub intervention_start: NaiveDate,
    pub treatment_region: String,
    pub control_region: String,
}

/// One (day, region) row of the regression panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub date: NaiveDate,
    pub region: String,
    pub replies: u64,
    pub intervention: u8,
    pub treatment: u8,
    pub number_cases: u64,
    pub number_victims: u64,
    pub avg_population: f64,
    /// True when no event with a population was recorded that day and the
    /// value was carried over from another day.
    pub population_imputed: bool,
}

fn same_region(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Builds the zero-filled daily panel for the treatment and control
/// regions. Rows are ordered by date, treatment first.
pub fn build_panel(
    interactions: &[InteractionRecord],
    events: &[EventRecord],
    spec: &PanelSpec,
) -> Result<Vec<PanelObservation>, ImpactError> {
    if same_region(&spec.treatment_region, &spec.control_region) {
        return Err(ImpactError::SameRegion);
    }
    for region in [&spec.treatment_region, &spec.control_region] {
        let known = interactions.iter().any(|i| same_region(&i.region, region))
            || events.iter().any(|e| same_region(&e.region, region));
        if !known {
            return Err(ImpactError::UnknownRegion(region.clone()));
        }
    }

    let mut rows = Vec::with_capacity(spec.window.len() * 2);
    let mut per_region: Vec<Vec<PanelObservation>> = Vec::new();
    for (region, treated) in [(&spec.treatment_region, 1u8), (&spec.control_region, 0u8)] {
        let mut replies: BTreeMap<NaiveDate, u64> = BTreeMap::new();
        for i in interactions.iter().filter(|i| same_region(&i.region, region)) {
            *replies.entry(i.sent_at.date_naive()).or_default() += 1;
        }
        // (cases, victims, population sum, population count)
        let mut daily: BTreeMap<NaiveDate, (u64, u64, f64, usize)> = BTreeMap::new();
        for e in events.iter().filter(|e| same_region(&e.region, region)) {
            let d = daily.entry(e.date).or_default();
            d.0 += 1;
            d.1 += e.victims;
            if let Some(p) = e.population {
                d.2 += p;
                d.3 += 1;
            }
        }
        let mut out: Vec<PanelObservation> = spec
            .window
            .days()
            .map(|date| {
                let (cases, victims, pop_sum, pop_n) = daily.get(&date).copied().unwrap_or_default();
                let observed = pop_n > 0;
                PanelObservation {
                    date,
                    region: region.clone(),
                    replies: replies.get(&date).copied().unwrap_or(0),
                    intervention: u8::from(date >= spec.intervention_start),
                    treatment: treated,
                    number_cases: cases,
                    number_victims: victims,
                    avg_population: if observed { pop_sum / pop_n as f64 } else { f64::NAN },
                    population_imputed: !observed,
                }
            })
            .collect();
        impute_population(&mut out, &daily, spec.window.start);
        per_region.push(out);
    }
    let control = per_region.pop().unwrap();
    let treatment = per_region.pop().unwrap();
    for (t, c) in treatment.into_iter().zip(control) {
        rows.push(t);
        rows.push(c);
    }
    Ok(rows)
}

/// Carries the last observed population forward. Days before the first
/// observation in the window take the latest value seen before the window,
/// then the first value inside it; a region with no population data at all
/// gets 0.
fn impute_population(rows: &mut [PanelObservation], daily: &BTreeMap<NaiveDate, (u64, u64, f64, usize)>, start: NaiveDate) {
    let before = daily
        .range(..start)
        .rev()
        .find(|(_, d)| d.3 > 0)
        .map(|(_, d)| d.2 / d.3 as f64);
    let first_inside = rows.iter().find(|r| !r.population_imputed).map(|r| r.avg_population);
    let mut last = before.or(first_inside).unwrap_or(0.0);
    for r in rows {
        if r.population_imputed {
            r.avg_population = last;
        } else {
            last = r.avg_population;
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> ImpactError + '_ {
    move |source| ImpactError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_panel_csv(path: impl AsRef<Path>, panel: &[PanelObservation]) -> Result<(), ImpactError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in panel {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel_csv(path: impl AsRef<Path>) -> Result<Vec<PanelObservation>, ImpactError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

/// Reads `date,region,victims,population` rows; population may be blank.
pub fn read_events_csv(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, ImpactError> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}
