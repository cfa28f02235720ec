//! CSV export of embeddings and distance heatmaps.

use std::path::Path;

use super::LabelledEmbeddings;
use crate::error::{Error, Result};

fn csv_error(path: &Path, err: csv::Error) -> Error {
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Parse {
            path: path.display().to_string(),
            line: 0,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Writes `label,category_name,v0..v{D-1}`, optionally restricted to the
/// `top_k` most frequent classes.
pub fn export_embeddings(
    emb: &LabelledEmbeddings,
    path: &Path,
    top_k: Option<usize>,
) -> Result<()> {
    emb.validate()?;
    let filtered;
    let emb = match top_k {
        Some(k) => {
            filtered = emb.filter_classes(&emb.top_classes(k));
            &filtered
        }
        None => emb,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["label".to_string(), "category_name".to_string()];
    header.extend((0..emb.dim()).map(|d| format!("v{d}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (v, &l) in emb.vectors.iter().zip(&emb.labels) {
        let mut row = vec![l.to_string(), emb.category_names[l].clone()];
        row.extend(v.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn import_embeddings(path: &Path, source: &str) -> Result<LabelledEmbeddings> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = row + 2;
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            column: 0,
            message,
        };
        let label: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("label is not a non-negative integer".into()))?;
        let name = record
            .get(1)
            .ok_or_else(|| bad("missing category_name".into()))?;
        if names.len() <= label {
            names.resize(label + 1, String::new());
        }
        names[label] = name.to_string();
        let v = record
            .iter()
            .skip(2)
            .map(|s| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        vectors.push(v);
        labels.push(label);
    }
    LabelledEmbeddings::new(vectors, labels, names, source)
}

/// Distance matrix reordered by `order`, with category names on both axes.
pub fn heatmap_csv(names: &[String], dist: &[Vec<f64>], order: &[usize]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::from("category")];
    header.extend(order.iter().map(|&i| names[i].clone()));
    let to_err = |e: csv::Error| Error::Shape(e.to_string());
    w.write_record(&header).map_err(to_err)?;
    for &i in order {
        let mut row = vec![names[i].clone()];
        row.extend(order.iter().map(|&j| dist[i][j].to_string()));
        w.write_record(&row).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Shape(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_heatmap(
    path: &Path,
    names: &[String],
    dist: &[Vec<f64>],
    order: &[usize],
) -> Result<()> {
    std::fs::write(path, heatmap_csv(names, dist, order)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LabelledEmbeddings {
        let names = vec!["a".into(), "b, with comma".into(), "c".into()];
        let vectors = vec![
            vec![0.1, -2.0 / 3.0],
            vec![1e-300, 7.0],
            vec![std::f64::consts::PI, 0.0],
            vec![-0.0, 5e10],
        ];
        LabelledEmbeddings::new(vectors, vec![0, 1, 1, 2], names, "m").unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let emb = sample();
        export_embeddings(&emb, &p, None).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), emb.len() + 1);
        assert!(text.starts_with("label,category_name,v0,v1\n"));
        let back = import_embeddings(&p, "m").unwrap();
        assert_eq!(back.labels, emb.labels);
        assert_eq!(back.category_names, emb.category_names);
        for (a, b) in back.vectors.iter().zip(&emb.vectors) {
            let bits = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn top_k_filter() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        export_embeddings(&sample(), &p, Some(1)).unwrap();
        let back = import_embeddings(&p, "m").unwrap();
        assert_eq!(back.labels, vec![1, 1]);
    }

    #[test]
    fn unwritable_path_reports_it() {
        let p = Path::new("/nonexistent-dir/e.csv");
        match export_embeddings(&sample(), p, None) {
            Err(Error::Io { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn heatmap_follows_order() {
        let names: Vec<String> = vec!["x".into(), "y".into()];
        let csv = heatmap_csv(&names, &[vec![0.0, 2.5], vec![2.5, 0.0]], &[1, 0]).unwrap();
        assert_eq!(csv, "category,y,x\ny,0,2.5\nx,2.5,0\n");
    }
}
