//! CSV files for clouds, measures and result tables (RFC 4180, header row
//! first). The field is not stored: the reader gets it from the config.
//!
//! Point clouds in `F^m` use columns `c0..c{m-1}`; clouds in `Phi` use
//! `w{i}_c{j}` (weight row `i`, coordinate `j`), optionally followed by a
//! `weight` column.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::covering::PointCloud;
use crate::error::{Error, Result};
use crate::localfield::LocalField;
use crate::rep::{PhiCloud, RepSpace};

/// Writes a header and rows.
pub fn write_table<P: AsRef<Path>>(path: P, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

/// Header and rows of a CSV file.
pub fn read_table<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r.records().map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect())).collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
    Ok((header, rows))
}

pub fn write_point_cloud<F: LocalField, P: AsRef<Path>>(path: P, cloud: &PointCloud<F>) -> Result<()> {
    let f = cloud.field;
    let header: Vec<String> = (0..cloud.dim).map(|j| format!("c{j}")).collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &h, cloud.points().map(|p| p.iter().map(|&x| f.format(x)).collect()))
}

pub fn read_point_cloud<F: LocalField, P: AsRef<Path>>(path: P, f: F) -> Result<PointCloud<F>> {
    let (header, rows) = read_table(path)?;
    for (j, h) in header.iter().enumerate() {
        if *h != format!("c{j}") {
            return Err(Error::Parse(format!("unexpected column `{h}`, expected `c{j}`")));
        }
    }
    let dim = header.len();
    if dim == 0 {
        return Err(Error::Parse("no coordinate columns".into()));
    }
    let mut c = PointCloud::new(f, dim);
    let mut p = Vec::with_capacity(dim);
    for row in rows {
        p.clear();
        for v in &row {
            p.push(f.parse(v)?);
        }
        c.push(&p);
    }
    Ok(c)
}

fn phi_header(rep: RepSpace, weighted: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..rep.rows()).flat_map(|i| (0..rep.m).map(move |j| format!("w{i}_c{j}"))).collect();
    if weighted {
        h.push("weight".into());
    }
    h
}

pub fn write_phi_cloud<F: LocalField, P: AsRef<Path>>(path: P, cloud: &PhiCloud<F>, weights: Option<&[f64]>) -> Result<()> {
    let f = cloud.field();
    let header = phi_header(cloud.rep, weights.is_some());
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..cloud.len()).map(|i| {
        let mut row: Vec<String> = cloud.point(i).iter().map(|&x| f.format(x)).collect();
        if let Some(w) = weights {
            row.push(format!("{}", w[i]));
        }
        row
    });
    write_table(path, &h, rows)
}

/// Reads a `Phi` cloud; `d` and `m` come from the column names.
pub fn read_phi_cloud<F: LocalField, P: AsRef<Path>>(path: P, f: F) -> Result<(PhiCloud<F>, Option<Vec<f64>>)> {
    let (header, rows) = read_table(path)?;
    let weighted = header.last().is_some_and(|h| h == "weight");
    let coords = header.len() - weighted as usize;
    let m = header.iter().take_while(|h| h.starts_with("w0_")).count();
    if m == 0 || coords % m != 0 {
        return Err(Error::Parse("columns do not form a `w{i}_c{j}` grid".into()));
    }
    let rep = RepSpace::new(coords / m - 1, m);
    if header[..coords] != phi_header(rep, false)[..] {
        return Err(Error::Parse("columns do not form a `w{i}_c{j}` grid".into()));
    }
    let mut cloud = PhiCloud::new(f, rep);
    let mut weights = weighted.then(Vec::new);
    let mut p = Vec::with_capacity(coords);
    for row in rows {
        p.clear();
        for v in &row[..coords] {
            p.push(f.parse(v)?);
        }
        cloud.push(&p);
        if let Some(w) = weights.as_mut() {
            w.push(row[coords].trim().parse().map_err(|_| Error::Parse(format!("bad weight `{}`", row[coords])))?);
        }
    }
    Ok((cloud, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localfield::{Padic, Reals};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn phi_cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = PhiCloud::sample_uniform(Reals, RepSpace::new(2, 2), 50, &mut rng);
        let w: Vec<f64> = (0..50).map(|i| i as f64 / 5000.0).collect();
        write_phi_cloud(&path, &c, Some(&w)).unwrap();
        let (back, wb) = read_phi_cloud(&path, Reals).unwrap();
        assert_eq!(back, c);
        assert_eq!(wb.unwrap(), w);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("w0_c0,w0_c1,w1_c0,w1_c1,w2_c0,w2_c1,weight\n"));
    }

    #[test]
    fn padic_point_cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let f = Padic::new(3, 6).unwrap();
        let c = PointCloud::from_points(f, 2, vec![vec![0, 1], vec![728, 5]]);
        write_point_cloud(&path, &c).unwrap();
        assert_eq!(read_point_cloud(&path, f).unwrap(), c);
        let small = Padic::new(3, 2).unwrap();
        assert!(read_point_cloud(&path, small).is_err());
    }

    #[test]
    fn bad_headers_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        std::fs::write(&path, "w0_c0,w1_c1\n1,2\n").unwrap();
        assert!(read_phi_cloud(&path, Reals).is_err());
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(read_point_cloud(&path, Reals).is_err());
    }
}
