//! File formats: graphs as JSON, datasets as CSV, models as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Cpdag, Dag, UndirectedGraph};
use crate::sem::{Dataset, WeightedDag};

pub const DIRECTED: &str = "->";
pub const UNDIRECTED: &str = "--";

/// `{"d": 3, "edges": [[0, 1, "->"], [1, 2, "--"]]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub d: usize,
    pub edges: Vec<(usize, usize, String)>,
}

impl GraphJson {
    pub fn from_cpdag(g: &Cpdag) -> Self {
        let mut edges: Vec<(usize, usize, String)> = g
            .directed_edges()
            .into_iter()
            .map(|(a, b)| (a, b, DIRECTED.to_string()))
            .chain(
                g.undirected_edges()
                    .into_iter()
                    .map(|(a, b)| (a, b, UNDIRECTED.to_string())),
            )
            .collect();
        edges.sort();
        GraphJson {
            d: g.num_vars(),
            edges,
        }
    }

    pub fn from_dag(g: &Dag) -> Self {
        GraphJson::from_cpdag(&Cpdag::from_dag(g))
    }

    pub fn from_undirected(g: &UndirectedGraph) -> Self {
        GraphJson::from_cpdag(&Cpdag::from_undirected(g))
    }

    fn check(&self, a: usize, b: usize) -> Result<()> {
        if a >= self.d || b >= self.d {
            return Err(Error::IndexOutOfRange {
                index: a.max(b),
                num_vars: self.d,
            });
        }
        if a == b {
            return Err(Error::Parse(format!("self-loop on {a}")));
        }
        Ok(())
    }

    pub fn to_cpdag(&self) -> Result<Cpdag> {
        let mut g = Cpdag::new(self.d);
        for (a, b, mark) in &self.edges {
            self.check(*a, *b)?;
            if g.adjacent(*a, *b) {
                return Err(Error::Parse(format!("pair ({a}, {b}) listed twice")));
            }
            match mark.as_str() {
                DIRECTED => g.set_directed(*a, *b),
                UNDIRECTED => g.set_undirected(*a, *b),
                other => return Err(Error::Parse(format!("unknown edge mark {other:?}"))),
            }
        }
        Ok(g)
    }

    /// Every edge must be directed.
    pub fn to_dag(&self) -> Result<Dag> {
        let mut edges = Vec::with_capacity(self.edges.len());
        for (a, b, mark) in &self.edges {
            self.check(*a, *b)?;
            if mark != DIRECTED {
                return Err(Error::Parse(format!("edge ({a}, {b}) is not directed")));
            }
            edges.push((*a, *b));
        }
        Dag::from_edges(self.d, &edges)
    }

    /// Marks are ignored.
    pub fn to_undirected(&self) -> Result<UndirectedGraph> {
        let mut g = UndirectedGraph::new(self.d);
        for (a, b, _) in &self.edges {
            self.check(*a, *b)?;
            g.add_edge(*a, *b);
        }
        Ok(g)
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a graph file, or the `cpdag` field of a search result.
pub fn read_graph(path: &Path) -> Result<GraphJson> {
    let mut v: serde_json::Value = read_json(path)?;
    if let Some(inner) = v.get_mut("cpdag") {
        v = inner.take();
    }
    Ok(serde_json::from_value(v)?)
}

pub fn write_dataset<W: Write>(data: &Dataset, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((1..=data.d()).map(|i| format!("X{i}")))?;
    let v = data.values();
    for r in 0..data.n() {
        out.write_record((0..data.d()).map(|c| v[(r, c)].to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// CSV with a header row; columns are taken in file order.
pub fn read_dataset<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(r);
    let d = rdr.headers()?.len();
    let mut values = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {d}",
                n + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: not a number: {field:?}", n + 1)))?;
            values.push(x);
        }
        n += 1;
    }
    Dataset::new(DMatrix::from_row_slice(n, d, &values))
}

pub fn write_dataset_file(path: &Path, data: &Dataset) -> Result<()> {
    write_dataset(data, BufWriter::new(File::create(path)?))
}

pub fn read_dataset_file(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}

/// `{"B": [[...]], "noise_vars": [...]}`, `B[j][i]` the weight of `j -> i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub noise_vars: Vec<f64>,
}

impl ModelJson {
    pub fn from_model(m: &WeightedDag) -> Self {
        let w = m.weights();
        ModelJson {
            b: (0..w.nrows())
                .map(|r| (0..w.ncols()).map(|c| w[(r, c)]).collect())
                .collect(),
            noise_vars: m.noise_vars().to_vec(),
        }
    }

    pub fn to_model(&self) -> Result<WeightedDag> {
        let d = self.b.len();
        if self.b.iter().any(|row| row.len() != d) {
            return Err(Error::Parse("B must be square".into()));
        }
        let flat: Vec<f64> = self.b.iter().flatten().copied().collect();
        WeightedDag::from_weights(DMatrix::from_row_slice(d, d, &flat), self.noise_vars.clone())
    }
}
