//! Long-format delimited ingestion and export of expression data.
//!
//! Input files carry one measurement per row (individual_id, gene_id,
//! time_hours, expression, optional ict_offset_hours). Rows with missing
//! expression are dropped with a count; genes that do not share each
//! individual's time grid are excluded and reported rather than failing
//! the whole file. Floats are written with 17 significant digits so a
//! round trip reproduces values exactly.

use crate::model::LongitudinalSeries;
use crate::phase_adjust::GeneMatrix;
use serde::Deserialize;
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed delimited data: {0}")]
    Csv(#[from] csv::Error),
    #[error("no usable genes after exclusions")]
    NoUsableRows,
    #[error("inconsistent input: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Deserialize)]
struct RawRow {
    individual_id: String,
    gene_id: String,
    time_hours: f64,
    expression: Option<f64>,
    #[serde(default)]
    ict_offset_hours: Option<f64>,
}

/// Result of assembling a long-format file into a gene matrix.
#[derive(Debug, Clone)]
pub struct IngestReport {
    pub matrix: GeneMatrix,
    /// Rows dropped because the expression field was empty or not finite.
    pub dropped_missing: usize,
    /// Genes excluded during assembly, with the reason.
    pub excluded_genes: Vec<(String, String)>,
    /// Known per-individual offsets, aligned with the matrix's individual
    /// order; None where the file does not provide one.
    pub ict_offsets: Vec<Option<f64>>,
}

/// Reads a long-format expression file into a GeneMatrix.
pub fn read_expression_csv(path: &Path) -> Result<IngestReport, IngestError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut genes: Vec<String> = Vec::new();
    let mut individuals: Vec<String> = Vec::new();
    let mut cells: HashMap<(usize, usize), Vec<(f64, f64)>> = HashMap::new();
    let mut gene_index: HashMap<String, usize> = HashMap::new();
    let mut individual_index: HashMap<String, usize> = HashMap::new();
    let mut ict: Vec<Option<f64>> = Vec::new();
    let mut dropped_missing = 0usize;

    for row in reader.deserialize() {
        let row: RawRow = row?;
        if !row.time_hours.is_finite() {
            return Err(IngestError::Inconsistent(format!(
                "non-finite time for individual {} gene {}",
                row.individual_id, row.gene_id
            )));
        }
        let i = *individual_index
            .entry(row.individual_id.clone())
            .or_insert_with(|| {
                individuals.push(row.individual_id.clone());
                ict.push(None);
                individuals.len() - 1
            });
        if let Some(offset) = row.ict_offset_hours {
            match ict[i] {
                None => ict[i] = Some(offset),
                Some(existing) if (existing - offset).abs() > 1e-9 => {
                    return Err(IngestError::Inconsistent(format!(
                        "individual {} has conflicting ict offsets {} and {}",
                        row.individual_id, existing, offset
                    )));
                }
                Some(_) => {}
            }
        }
        let g = *gene_index.entry(row.gene_id.clone()).or_insert_with(|| {
            genes.push(row.gene_id.clone());
            genes.len() - 1
        });
        match row.expression {
            Some(v) if v.is_finite() => {
                cells.entry((g, i)).or_default().push((row.time_hours, v));
            }
            _ => dropped_missing += 1,
        }
    }

    // Sort each cell by time; a duplicate time makes the gene unusable.
    let mut excluded: Vec<(String, String)> = Vec::new();
    let mut usable: Vec<bool> = vec![true; genes.len()];
    for (g, gene) in genes.iter().enumerate() {
        'cells: for (i, individual) in individuals.iter().enumerate() {
            match cells.get_mut(&(g, i)) {
                Some(cell) => {
                    cell.sort_by(|a, b| a.0.total_cmp(&b.0));
                    for w in cell.windows(2) {
                        if w[0].0 == w[1].0 {
                            usable[g] = false;
                            excluded.push((
                                gene.clone(),
                                format!("duplicate time {} for individual {individual}", w[0].0),
                            ));
                            break 'cells;
                        }
                    }
                }
                None => {
                    usable[g] = false;
                    excluded.push((
                        gene.clone(),
                        format!("no usable measurements for individual {individual}"),
                    ));
                    break 'cells;
                }
            }
        }
    }

    // The first usable gene defines each individual's time grid; any gene
    // whose grids disagree with it is excluded.
    let reference = match usable.iter().position(|&u| u) {
        Some(g) => g,
        None => return Err(IngestError::NoUsableRows),
    };
    let ref_grids: Vec<Vec<f64>> = (0..individuals.len())
        .map(|i| cells[&(reference, i)].iter().map(|&(t, _)| t).collect())
        .collect();
    for g in 0..genes.len() {
        if !usable[g] || g == reference {
            continue;
        }
        for i in 0..individuals.len() {
            let grid: Vec<f64> = cells[&(g, i)].iter().map(|&(t, _)| t).collect();
            if grid != ref_grids[i] {
                usable[g] = false;
                excluded.push((
                    genes[g].clone(),
                    format!("time grid for individual {} differs", individuals[i]),
                ));
                break;
            }
        }
    }

    let mut kept_ids = Vec::new();
    let mut data = Vec::new();
    for (g, gene) in genes.iter().enumerate() {
        if !usable[g] {
            continue;
        }
        let series = (0..individuals.len())
            .map(|i| {
                let cell = &cells[&(g, i)];
                LongitudinalSeries::new(
                    individuals[i].clone(),
                    cell.iter().map(|&(t, _)| t).collect(),
                    cell.iter().map(|&(_, v)| v).collect(),
                )
            })
            .collect::<Result<Vec<_>, _>>();
        match series {
            Ok(series) => {
                kept_ids.push(gene.clone());
                data.push(series);
            }
            Err(e) => excluded.push((gene.clone(), e.to_string())),
        }
    }
    if kept_ids.is_empty() {
        return Err(IngestError::NoUsableRows);
    }
    let matrix = GeneMatrix::new(kept_ids, data)
        .map_err(|e| IngestError::Inconsistent(e.to_string()))?;
    Ok(IngestReport {
        matrix,
        dropped_missing,
        excluded_genes: excluded,
        ict_offsets: ict,
    })
}

/// Writes a GeneMatrix in long format. When `ict` is given it must be
/// aligned with the matrix's individual order; a column is added and None
/// entries are left empty.
pub fn write_expression_csv(
    path: &Path,
    matrix: &GeneMatrix,
    ict: Option<&[Option<f64>]>,
) -> Result<(), IngestError> {
    if let Some(ict) = ict {
        if ict.len() != matrix.n_individuals() {
            return Err(IngestError::Inconsistent(format!(
                "{} offsets for {} individuals",
                ict.len(),
                matrix.n_individuals()
            )));
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["individual_id", "gene_id", "time_hours", "expression"];
    if ict.is_some() {
        header.push("ict_offset_hours");
    }
    writer.write_record(&header)?;
    for (g, gene) in matrix.gene_ids().iter().enumerate() {
        for (i, series) in matrix.series(g).iter().enumerate() {
            for (t, v) in series.times.iter().zip(&series.values) {
                let mut record = vec![
                    series.individual_id.clone(),
                    gene.clone(),
                    format!("{t:.16e}"),
                    format!("{v:.16e}"),
                ];
                if let Some(ict) = ict {
                    record.push(ict[i].map_or_else(String::new, |o| format!("{o:.16e}")));
                }
                writer.write_record(&record)?;
            }
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, contents: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn reads_long_format_with_missing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "individual_id,gene_id,time_hours,expression\n\
             a,g1,2,5.0\n\
             a,g1,4,5.5\n\
             b,g1,2,6.0\n\
             b,g1,4,6.5\n\
             a,g2,2,1.0\n\
             a,g2,4,\n\
             b,g2,2,1.5\n\
             b,g2,4,2.0\n",
        );
        let report = read_expression_csv(&path).unwrap();
        assert_eq!(report.dropped_missing, 1);
        assert_eq!(report.matrix.n_genes(), 1);
        assert_eq!(report.matrix.gene_ids(), ["g1".to_string()]);
        // g2 lost individual a's 4h point, so its grid no longer matches.
        assert_eq!(report.excluded_genes.len(), 1);
        assert_eq!(report.excluded_genes[0].0, "g2");
        assert_eq!(report.matrix.n_individuals(), 2);
        assert_eq!(report.matrix.series(0)[0].values, vec![5.0, 5.5]);
        assert_eq!(report.ict_offsets, vec![None, None]);
    }

    #[test]
    fn rows_out_of_order_are_sorted_by_time() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "individual_id,gene_id,time_hours,expression\n\
             a,g1,4,5.5\n\
             a,g1,2,5.0\n\
             b,g1,2,6.0\n\
             b,g1,4,6.5\n",
        );
        let report = read_expression_csv(&path).unwrap();
        assert_eq!(report.matrix.series(0)[0].times, vec![2.0, 4.0]);
        assert_eq!(report.matrix.series(0)[0].values, vec![5.0, 5.5]);
    }

    #[test]
    fn ict_column_is_per_individual() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "individual_id,gene_id,time_hours,expression,ict_offset_hours\n\
             a,g1,2,5.0,1.25\n\
             a,g1,4,5.5,1.25\n\
             b,g1,2,6.0,\n\
             b,g1,4,6.5,\n",
        );
        let report = read_expression_csv(&path).unwrap();
        assert_eq!(report.ict_offsets, vec![Some(1.25), None]);

        let conflicted = write_file(
            &dir,
            "y.csv",
            "individual_id,gene_id,time_hours,expression,ict_offset_hours\n\
             a,g1,2,5.0,1.25\n\
             a,g1,4,5.5,2.5\n",
        );
        assert!(matches!(
            read_expression_csv(&conflicted),
            Err(IngestError::Inconsistent(_))
        ));
    }

    #[test]
    fn duplicate_times_exclude_the_gene() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            &dir,
            "x.csv",
            "individual_id,gene_id,time_hours,expression\n\
             a,g1,2,5.0\n\
             a,g1,2,5.1\n\
             a,g2,2,1.0\n\
             a,g2,4,1.5\n",
        );
        let report = read_expression_csv(&path).unwrap();
        assert_eq!(report.matrix.gene_ids(), ["g2".to_string()]);
        assert_eq!(report.excluded_genes[0].0, "g1");

        let all_bad = write_file(
            &dir,
            "y.csv",
            "individual_id,gene_id,time_hours,expression\n\
             a,g1,2,5.0\n\
             a,g1,2,5.1\n",
        );
        assert!(matches!(
            read_expression_csv(&all_bad),
            Err(IngestError::NoUsableRows)
        ));
    }

    #[test]
    fn round_trip_preserves_values_and_times() {
        let series = |id: &str, scale: f64| {
            LongitudinalSeries::new(
                id,
                vec![2.0, 4.0, 6.0, 8.0],
                vec![
                    6.123456789012345 * scale,
                    5.987654321098765 * scale,
                    6.5 * scale,
                    1.0 / 3.0 * scale,
                ],
            )
            .unwrap()
        };
        let matrix = GeneMatrix::new(
            vec!["g1".into(), "g2".into()],
            vec![
                vec![series("a", 1.0), series("b", 1.1)],
                vec![series("a", 0.9), series("b", 1.3)],
            ],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.csv");
        let ict = vec![Some(0.75), None];
        write_expression_csv(&path, &matrix, Some(&ict)).unwrap();
        let report = read_expression_csv(&path).unwrap();
        assert_eq!(report.dropped_missing, 0);
        assert_eq!(report.ict_offsets, ict);
        assert_eq!(report.matrix.gene_ids(), matrix.gene_ids());
        for g in 0..2 {
            for i in 0..2 {
                assert_eq!(report.matrix.series(g)[i].times, matrix.series(g)[i].times);
                assert_eq!(
                    report.matrix.series(g)[i].values,
                    matrix.series(g)[i].values
                );
            }
        }
    }
}
