//! CSV tables, one file per report view.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::importance::ImportanceMatrix;
use super::report::{median_filter, Evaluation};
use crate::error::{Error, Result};
use crate::LEAD_TIMES;

type Table = csv::Writer<BufWriter<File>>;

fn create(path: &Path) -> Result<Table> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn row<I, S>(w: &mut Table, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| Error::io(path, std::io::Error::other(e)))
}

fn finish(mut w: Table, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every evaluation table into `dir`. With `smoothing_kernel`, the
/// station ranking gains median-filtered CRPS columns.
pub fn write_evaluation(dir: &Path, ev: &Evaluation, smoothing_kernel: Option<usize>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let names: Vec<&str> = ev.reports.iter().map(|r| r.model.as_str()).collect();

    for (file, pick) in [
        ("crps_by_lead.csv", 0),
        ("bias_by_lead.csv", 1),
    ] {
        let path = dir.join(file);
        let mut w = create(&path)?;
        row(&mut w, &path, std::iter::once("lead").chain(names.iter().copied()))?;
        for j in 0..LEAD_TIMES {
            let mut r = vec![j.to_string()];
            for rep in &ev.reports {
                let v = if pick == 0 { rep.crps_by_lead[j] } else { rep.bias_by_lead[j] };
                r.push(v.to_string());
            }
            row(&mut w, &path, r)?;
        }
        finish(w, &path)?;
    }

    let path = dir.join("qss_by_quantile.csv");
    let mut w = create(&path)?;
    row(&mut w, &path, ["model", "reference", "level", "ql", "qss"])?;
    for rep in &ev.reports {
        for (i, &t) in rep.levels.iter().enumerate() {
            row(
                &mut w,
                &path,
                [
                    rep.model.clone(),
                    rep.reference.clone(),
                    t.to_string(),
                    rep.ql_by_level[i].to_string(),
                    rep.qss_by_level[i].to_string(),
                ],
            )?;
        }
    }
    finish(w, &path)?;

    let path = dir.join("pit_hist.csv");
    let mut w = create(&path)?;
    row(&mut w, &path, ["bin", "lower", "upper"].into_iter().chain(names.iter().copied()))?;
    let bins = ev.reports[0].pit_counts.len();
    for b in 0..bins {
        let mut r = vec![
            b.to_string(),
            (b as f64 / bins as f64).to_string(),
            ((b + 1) as f64 / bins as f64).to_string(),
        ];
        r.extend(ev.reports.iter().map(|rep| rep.pit_counts[b].to_string()));
        row(&mut w, &path, r)?;
    }
    finish(w, &path)?;

    let path = dir.join("qss_by_band.csv");
    let mut w = create(&path)?;
    row(&mut w, &path, ["model", "reference", "band", "stations", "level", "ql", "ql_reference", "qss"])?;
    for rep in &ev.reports {
        for band in &rep.bands.bands {
            for (i, &t) in rep.levels.iter().enumerate() {
                row(
                    &mut w,
                    &path,
                    [
                        rep.model.clone(),
                        rep.reference.clone(),
                        band.band.label().to_string(),
                        band.stations.to_string(),
                        t.to_string(),
                        band.ql_model[i].to_string(),
                        band.ql_reference[i].to_string(),
                        band.qss[i].to_string(),
                    ],
                )?;
            }
        }
    }
    finish(w, &path)?;

    let rk = &ev.ranking;
    let path = dir.join("station_ranking.csv");
    let mut w = create(&path)?;
    let mut header = vec!["station".to_string()];
    header.extend(rk.models.iter().map(|m| format!("crps_{m}")));
    if smoothing_kernel.is_some() {
        header.extend(rk.models.iter().map(|m| format!("crps_{m}_smoothed")));
    }
    header.push("winner".into());
    header.push("tie".into());
    row(&mut w, &path, &header)?;
    let smoothed: Vec<Vec<f64>> = match smoothing_kernel {
        Some(k) => (0..rk.models.len())
            .map(|m| {
                let col: Vec<f64> = rk.station_crps.iter().map(|r| r[m]).collect();
                median_filter(&col, k)
            })
            .collect(),
        None => Vec::new(),
    };
    for (s, crps) in rk.station_crps.iter().enumerate() {
        let mut r = vec![s.to_string()];
        r.extend(crps.iter().map(f64::to_string));
        r.extend(smoothed.iter().map(|col| col[s].to_string()));
        let best = crps.iter().copied().fold(f64::INFINITY, f64::min);
        match rk.winner[s] {
            Some(i) => {
                r.push(rk.models[i].clone());
                r.push((crps.iter().filter(|&&c| c == best).count() > 1).to_string());
            }
            None => {
                r.push(String::new());
                r.push(String::new());
            }
        }
        row(&mut w, &path, r)?;
    }
    finish(w, &path)?;

    let path = dir.join("station_wins.csv");
    let mut w = create(&path)?;
    row(&mut w, &path, ["model", "wins", "ties_total"])?;
    for (m, wins) in rk.models.iter().zip(&rk.wins) {
        row(&mut w, &path, [m.clone(), wins.to_string(), rk.ties.to_string()])?;
    }
    finish(w, &path)?;

    let path = dir.join("summary.csv");
    let mut w = create(&path)?;
    row(
        &mut w,
        &path,
        ["model", "reference", "crps", "bias", "ql", "qss", "pit_chi2", "pit_p", "crossings", "scored", "missing"],
    )?;
    for rep in &ev.reports {
        row(
            &mut w,
            &path,
            [
                rep.model.clone(),
                rep.reference.clone(),
                rep.crps.to_string(),
                rep.bias.to_string(),
                rep.ql.to_string(),
                rep.qss.to_string(),
                rep.pit_test.statistic.to_string(),
                rep.pit_test.p_value.to_string(),
                rep.crossings.to_string(),
                rep.scored.to_string(),
                rep.missing_by_station.iter().sum::<usize>().to_string(),
            ],
        )?;
    }
    finish(w, &path)
}

/// `output_lead, baseline_loss, in_00 .. in_20, static`: each cell is the
/// mean loss increase at the output lead after permuting the input group.
pub fn write_importance(path: &Path, m: &ImportanceMatrix) -> Result<()> {
    let mut w = create(path)?;
    let mut header = vec!["output_lead".to_string(), "baseline_loss".to_string()];
    header.extend((0..LEAD_TIMES).map(|g| format!("in_{g:02}")));
    header.push("static".into());
    row(&mut w, path, &header)?;
    for (j, values) in m.values.rows().into_iter().enumerate() {
        let mut r = vec![j.to_string(), m.baseline[j].to_string()];
        r.extend(values.iter().map(f64::to_string));
        row(&mut w, path, r)?;
    }
    finish(w, path)
}
