//! Graph container: a directory holding `schema.json`, `nodes_<type>.csv`,
//! `edges_<src>__<etype>__<dst>.csv` and optionally `labels_<type>.csv`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{build_graph, EdgeTableBuilder, HeteroGraph, HeteroSchema, LabelTable, SchemaFile};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::util::{csv_bytes, write_atomic};

#[derive(Clone, Debug)]
pub struct Container {
    pub graph: HeteroGraph,
    pub labels: Option<LabelTable>,
}

/// Writes the container. Node ids are the dense per-type indices.
pub fn write_container(dir: &Path, graph: &HeteroGraph, labels: Option<&LabelTable>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = graph.schema();
    let json = serde_json::to_string_pretty(&schema.to_file())?;
    write_atomic(&dir.join("schema.json"), json.as_bytes())?;

    for (t, def) in schema.node_types().iter().enumerate() {
        let x = graph.node_features(t);
        let mut header = vec!["id".to_string()];
        header.extend((0..def.dim).map(|i| format!("f{i}")));
        let rows = (0..x.rows()).map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(x.row(i).iter().map(|v| v.to_string()));
            r
        });
        write_atomic(&dir.join(format!("nodes_{}.csv", def.name)), &csv_bytes(&header, rows)?)?;
    }

    for (si, step) in schema.meta_steps().iter().enumerate() {
        let es = graph.edge_set(si);
        let mut header = vec!["src_id".to_string(), "dst_id".to_string()];
        header.extend((0..schema.edge_dim(step.edge)).map(|i| format!("f{i}")));
        let rows = (0..es.len()).map(|e| {
            let mut r = vec![es.src()[e].to_string(), es.dst()[e].to_string()];
            r.extend(es.features().row(e).iter().map(|v| v.to_string()));
            r
        });
        write_atomic(
            &dir.join(format!("edges_{}.csv", schema.step_name(*step))),
            &csv_bytes(&header, rows)?,
        )?;
    }

    if let Some(labels) = labels {
        let name = &schema.node_types()[labels.labeled_type()].name;
        let header = vec!["id".to_string(), "label".to_string()];
        let rows = labels
            .labels()
            .iter()
            .enumerate()
            .map(|(i, y)| vec![i.to_string(), y.to_string()]);
        write_atomic(&dir.join(format!("labels_{name}.csv")), &csv_bytes(&header, rows)?)?;
    }
    Ok(())
}

pub fn read_container(dir: &Path) -> Result<Container> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "graph container directory not found"),
        ));
    }
    let schema_path = dir.join("schema.json");
    let text = fs::read_to_string(&schema_path).map_err(|e| Error::io(&schema_path, e))?;
    let schema = HeteroSchema::from_file(serde_json::from_str::<SchemaFile>(&text)?)?;

    let mut id_maps: Vec<HashMap<u64, usize>> = Vec::new();
    let mut node_tables = Vec::new();
    for def in schema.node_types() {
        let table = format!("nodes_{}", def.name);
        let path = dir.join(format!("{table}.csv"));
        let mut rdr = open_csv(&path)?;
        let mut ids = HashMap::new();
        let mut data = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != def.dim + 1 {
                return Err(table_err(&table, row, format!("{} fields, expected {}", rec.len(), def.dim + 1)));
            }
            let id = parse_id(&table, row, &rec[0])?;
            if ids.insert(id, row).is_some() {
                return Err(table_err(&table, row, format!("duplicate id {id}")));
            }
            for f in rec.iter().skip(1) {
                data.push(parse_f64(&table, row, f)?);
            }
        }
        node_tables.push(Tensor::from_vec(ids.len(), def.dim, data)?);
        id_maps.push(ids);
    }

    let mut edge_tables = Vec::new();
    for step in schema.meta_steps() {
        let table = format!("edges_{}", schema.step_name(*step));
        let path = dir.join(format!("{table}.csv"));
        let c = schema.edge_dim(step.edge);
        let mut b = EdgeTableBuilder::new(*step, c);
        if path.exists() {
            let mut rdr = open_csv(&path)?;
            let mut feats = vec![0.0; c];
            for (row, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.len() != c + 2 {
                    return Err(table_err(&table, row, format!("{} fields, expected {}", rec.len(), c + 2)));
                }
                let s = lookup(&id_maps[step.source], &table, row, parse_id(&table, row, &rec[0])?)?;
                let d = lookup(&id_maps[step.target], &table, row, parse_id(&table, row, &rec[1])?)?;
                for (j, f) in rec.iter().skip(2).enumerate() {
                    feats[j] = parse_f64(&table, row, f)?;
                }
                b.push(s, d, &feats);
            }
        }
        edge_tables.push(b.finish());
    }

    let mut labels = None;
    for (t, def) in schema.node_types().iter().enumerate() {
        let table = format!("labels_{}", def.name);
        let path = dir.join(format!("{table}.csv"));
        if !path.exists() {
            continue;
        }
        let mut rdr = open_csv(&path)?;
        let mut y = vec![0u8; id_maps[t].len()];
        let mut seen = vec![false; id_maps[t].len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(table_err(&table, row, "expected `id,label`".into()));
            }
            let i = lookup(&id_maps[t], &table, row, parse_id(&table, row, &rec[0])?)?;
            y[i] = match rec[1].trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(table_err(&table, row, format!("label `{other}` is not 0 or 1"))),
            };
            seen[i] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(table_err(&table, missing, "node has no label".into()));
        }
        labels = Some(LabelTable::new(t, y)?);
        break;
    }

    let graph = build_graph(schema, node_tables, edge_tables)?;
    Ok(Container { graph, labels })
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

fn table_err(table: &str, row: usize, msg: String) -> Error {
    Error::Table {
        table: table.to_string(),
        row,
        msg,
    }
}

fn parse_id(table: &str, row: usize, s: &str) -> Result<u64> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| table_err(table, row, format!("id `{s}` is not a nonnegative integer")))
}

fn parse_f64(table: &str, row: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| table_err(table, row, format!("value `{s}` is not a number")))
}

fn lookup(map: &HashMap<u64, usize>, table: &str, row: usize, id: u64) -> Result<usize> {
    map.get(&id)
        .copied()
        .ok_or_else(|| table_err(table, row, format!("unknown node id {id}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{INDIVIDUAL, ORGANIZATION, TXN};

    #[test]
    fn round_trip() {
        let s = HeteroSchema::aml();
        let step = s.step_by_names(INDIVIDUAL, TXN, ORGANIZATION).unwrap();
        let mut b = EdgeTableBuilder::new(step, 2);
        b.push(1, 0, &[2.0, 0.1 + 0.2]);
        let nodes = vec![
            Tensor::filled(2, 11, 1.0 / 3.0),
            Tensor::filled(1, 8, -2.5),
            Tensor::zeros(0, 2),
        ];
        let g = build_graph(s, nodes, vec![b.finish()]).unwrap();
        let labels = LabelTable::new(0, vec![0, 1]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_container(dir.path(), &g, Some(&labels)).unwrap();
        let back = read_container(dir.path()).unwrap();
        assert_eq!(back.graph, g);
        assert_eq!(back.labels, Some(labels));
    }

    #[test]
    fn missing_directory_is_an_error() {
        assert!(read_container(Path::new("/nonexistent/graph")).is_err());
    }
}
