//! CSV ingestion by column role.

use std::collections::HashSet;
use std::path::Path;

use ivkp::IvDataset;
use nalgebra::{DMatrix, DVector};

use crate::config::ColumnRoles;
use crate::error::{CliError, CliResult};

pub fn ingest_csv(path: &Path, roles: &ColumnRoles) -> CliResult<IvDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, roles)
}

pub fn ingest_reader<R: std::io::Read>(reader: R, roles: &ColumnRoles) -> CliResult<IvDataset> {
    check_roles(roles)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Data(format!("cannot read header: {e}")))?.clone();
    if headers.is_empty() {
        return Err(CliError::Data("the file is empty".into()));
    }
    let index = |name: &str| -> CliResult<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("column `{name}` not found in the header")))
    };
    let y_col = index(&roles.outcome)?;
    let t_cols = roles.tested.iter().map(|c| index(c)).collect::<CliResult<Vec<_>>>()?;
    let w_cols = roles.untested.iter().map(|c| index(c)).collect::<CliResult<Vec<_>>>()?;
    let z_cols = roles.instruments.iter().map(|c| index(c)).collect::<CliResult<Vec<_>>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        // Data row r sits on line r + 2 of the file.
        let line = r + 2;
        let record = record.map_err(|e| CliError::Data(format!("line {line}: {e}")))?;
        let mut row = Vec::with_capacity(headers.len());
        for (c, cell) in record.iter().enumerate() {
            let name = headers.get(c).unwrap_or("?");
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Data(format!("line {line}, column `{name}`: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::Data(format!("line {line}, column `{name}`: value is not finite")));
            }
            row.push(v);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::Data("the file has a header but no data rows".into()));
    }
    let (k, p) = (z_cols.len(), 1 + w_cols.len());
    if n <= k * p {
        return Err(CliError::Data(format!("need more than k * (1 + m_W) = {} rows, got {n}", k * p)));
    }
    let pick = |cols: &[usize]| DMatrix::from_fn(n, cols.len(), |i, j| rows[i][cols[j]]);
    let y = DVector::from_fn(n, |i, _| rows[i][y_col]);
    IvDataset::new(y, pick(&t_cols), pick(&w_cols), pick(&z_cols)).map_err(|e| match e {
        ivkp::Error::InvalidArgument(m) => CliError::Data(m),
        other => CliError::Core(other),
    })
}

fn check_roles(roles: &ColumnRoles) -> CliResult<()> {
    if roles.tested.is_empty() || roles.untested.is_empty() || roles.instruments.is_empty() {
        return Err(CliError::Config(
            "tested, untested and instruments must each name at least one column".into(),
        ));
    }
    let mut seen = HashSet::new();
    for name in roles.all() {
        if !seen.insert(name) {
            return Err(CliError::Config(format!("column `{name}` is assigned to more than one role")));
        }
    }
    Ok(())
}
