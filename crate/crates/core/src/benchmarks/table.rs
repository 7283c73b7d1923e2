use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::acquisition::Objective;
use crate::domain::spec::{DomainSpec, VariableSpec};
use crate::domain::{MixedDomain, Value};
use crate::error::{check_dim, Error, Result};
use crate::rng::seeded;

const DEFAULT_OBJECTIVE_COLUMN: &str = "y";

/// Nearest-neighbour lookup into a table of evaluated configurations.
///
/// Rows live in the internal representation: continuous values scaled to
/// `[0,1]` by the domain bounds, then the binary slots as `0.0`/`1.0`. The
/// metric of the Euclidean-nearest row is returned, the earliest row winning ties.
#[derive(Debug, Clone)]
pub struct TableSurrogate {
    domain: MixedDomain,
    dim: usize,
    rows: Vec<f64>,
    metrics: Vec<f64>,
}

impl TableSurrogate {
    pub fn new(
        domain: MixedDomain,
        points: Vec<(Vec<bool>, Vec<f64>)>,
        metrics: Vec<f64>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Schema("table has no rows".into()));
        }
        check_dim("table metrics", points.len(), metrics.len())?;
        let dim = domain.d_cont() + domain.d_disc();
        let mut rows = Vec::with_capacity(points.len() * dim);
        for (xd, xc) in &points {
            check_dim("table binary slots", domain.d_disc(), xd.len())?;
            check_dim("table continuous inputs", domain.d_cont(), xc.len())?;
            rows.extend_from_slice(xc);
            rows.extend(xd.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        }
        Ok(Self {
            domain,
            dim,
            rows,
            metrics,
        })
    }

    pub fn domain(&self) -> &MixedDomain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn metrics(&self) -> &[f64] {
        &self.metrics
    }

    /// Index of the nearest row.
    pub fn nearest(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<usize> {
        check_dim("binary slots", self.domain.d_disc(), x_disc.len())?;
        check_dim("continuous inputs", self.domain.d_cont(), x_cont.len())?;
        let q: Vec<f64> = x_cont
            .iter()
            .copied()
            .chain(x_disc.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect();
        let mut best = (0, f64::INFINITY);
        for (i, row) in self.rows.chunks_exact(self.dim).enumerate() {
            let d: f64 = row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    pub fn lookup(&self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        Ok(self.metrics[self.nearest(x_disc, x_cont)?])
    }
}

impl Objective for TableSurrogate {
    fn evaluate(&mut self, x_disc: &[bool], x_cont: &[f64]) -> Result<f64> {
        self.lookup(x_disc, x_cont)
    }
}

fn parse_value(spec: &VariableSpec, cell: &str) -> Result<Value> {
    let cell = cell.trim();
    let bad = |what: &str| {
        Error::Schema(format!(
            "column {}: cannot parse {cell:?} as {what}",
            spec.name()
        ))
    };
    match spec {
        VariableSpec::Binary { .. } => match cell {
            "1" | "true" | "True" | "TRUE" => Ok(Value::Bool(true)),
            "0" | "false" | "False" | "FALSE" => Ok(Value::Bool(false)),
            _ => Err(bad("a binary flag")),
        },
        VariableSpec::Integer { .. } => cell
            .parse::<i64>()
            .or_else(|_| match cell.parse::<f64>() {
                Ok(v) if v.fract() == 0.0 && v.abs() < 9e15 => Ok(v as i64),
                _ => Err(bad("an integer")),
            })
            .map(Value::Int),
        VariableSpec::Categorical { levels, .. } => levels
            .iter()
            .position(|l| l == cell)
            .or_else(|| cell.parse::<usize>().ok().filter(|&i| i < levels.len()))
            .map(Value::Level)
            .ok_or_else(|| bad("a level")),
        VariableSpec::Continuous { .. } => cell
            .parse::<f64>()
            .map(Value::Real)
            .map_err(|_| bad("a number")),
    }
}

/// Parse a CSV with a header row naming every domain variable plus the
/// objective column (`objective_column` in the spec, `y` by default).
pub fn table_from_reader<R: Read>(reader: R, spec: &DomainSpec) -> Result<TableSurrogate> {
    let domain = spec.build()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let columns: Vec<usize> = spec
        .variables
        .iter()
        .map(|v| find(v.name()))
        .collect::<Result<_>>()?;
    let target_name = spec
        .objective_column
        .as_deref()
        .unwrap_or(DEFAULT_OBJECTIVE_COLUMN);
    let target = find(target_name)?;
    let mut points = Vec::new();
    let mut metrics = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let values: Vec<Value> = spec
            .variables
            .iter()
            .zip(&columns)
            .map(|(v, &c)| parse_value(v, row.get(c).unwrap_or("")))
            .collect::<Result<_>>()?;
        let point = domain
            .encode(&values)
            .map_err(|e| Error::Schema(format!("row {}: {e}", line + 1)))?;
        let y: f64 = row
            .get(target)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("row {}: bad objective value", line + 1)))?;
        if !y.is_finite() {
            return Err(Error::Schema(format!(
                "row {}: non-finite objective value",
                line + 1
            )));
        }
        points.push(point);
        metrics.push(y);
    }
    TableSurrogate::new(domain, points, metrics)
}

pub fn load_table_surrogate(
    csv_path: impl AsRef<Path>,
    spec: &DomainSpec,
) -> Result<TableSurrogate> {
    table_from_reader(std::fs::File::open(csv_path)?, spec)
}

/// Ten parameters shaped like the gradient-boosting search space: a two-level
/// booster choice, two integer ranges and seven bounded reals.
pub fn xgboost_domain_spec() -> DomainSpec {
    let cont = |name: &str, lo: f64, hi: f64| VariableSpec::Continuous {
        name: name.into(),
        lo,
        hi,
    };
    DomainSpec {
        objective_column: Some("error".into()),
        variables: vec![
            VariableSpec::Categorical {
                name: "booster".into(),
                levels: vec!["gbtree".into(), "gblinear".into()],
            },
            VariableSpec::Integer {
                name: "nrounds".into(),
                lo: 3,
                hi: 5000,
            },
            cont("alpha", 0.000985, 1009.209690),
            cont("lambda", 0.000978, 999.020893),
            cont("colsample_bylevel", 0.046776, 0.998424),
            cont("colsample_bytree", 0.062528, 0.999640),
            cont("eta", 0.000979, 0.995686),
            VariableSpec::Integer {
                name: "max_depth".into(),
                lo: 1,
                hi: 15,
            },
            cont("min_child_weight", 1.012169, 127.041806),
            cont("subsample", 0.100215, 0.999830),
        ],
        constraints: Default::default(),
    }
}

/// Generate a CSV table of `n_rows` uniformly drawn configurations of `spec`.
///
/// Each parameter contributes a bowl over its position in its range (reals and
/// integers alike) or a random offset per level (categorical and binary).
/// Contributions are weighted by importances halving over a random ordering
/// of the parameters, so a few parameters dominate. Small uniform noise is
/// added and the metric is min-max rescaled to `[0, 1]`.
pub fn synthetic_table_csv(spec: &DomainSpec, n_rows: usize, seed: u64) -> Result<String> {
    let domain = spec.build()?;
    let mut rng = seeded(seed);
    let n_vars = spec.variables.len();
    let centre: Vec<f64> = (0..n_vars).map(|_| rng.random_range(0.2..0.8)).collect();
    let mut order: Vec<usize> = (0..n_vars).collect();
    order.shuffle(&mut rng);
    let mut importance = vec![0.0; n_vars];
    for (rank, &i) in order.iter().enumerate() {
        importance[i] = 0.5f64.powi(rank as i32);
    }
    let level_offsets: Vec<Vec<f64>> = spec
        .variables
        .iter()
        .map(|v| {
            let levels = match v {
                VariableSpec::Binary { .. } => 2,
                VariableSpec::Categorical { levels, .. } => levels.len(),
                _ => 0,
            };
            (0..levels).map(|_| rng.random_range(0.0..0.3)).collect()
        })
        .collect();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let target = spec
        .objective_column
        .as_deref()
        .unwrap_or(DEFAULT_OBJECTIVE_COLUMN);
    let mut header: Vec<&str> = spec.variables.iter().map(|v| v.name()).collect();
    header.push(target);
    wtr.write_record(&header)?;
    let mut rows = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let (xd, xc) = domain.sample_feasible(&mut rng, 100_000)?;
        let values = domain.decode(&xd, &xc)?;
        let mut raw = 0.0;
        for (i, (v, s)) in values.iter().zip(&spec.variables).enumerate() {
            raw += importance[i]
                * match (v, s) {
                    (Value::Real(r), VariableSpec::Continuous { lo, hi, .. }) => {
                        ((r - lo) / (hi - lo) - centre[i]).powi(2)
                    }
                    (Value::Int(k), VariableSpec::Integer { lo, hi, .. }) => {
                        let u = if hi > lo {
                            (k - lo) as f64 / (hi - lo) as f64
                        } else {
                            0.0
                        };
                        (u - centre[i]).powi(2)
                    }
                    (Value::Bool(b), _) => level_offsets[i][*b as usize],
                    (Value::Level(l), _) => level_offsets[i][*l],
                    _ => 0.0,
                };
        }
        raw += rng.random_range(-0.01..0.01);
        rows.push((values, raw));
    }
    let lo = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { hi - lo } else { 1.0 };
    for (values, raw) in rows {
        let mut cells: Vec<String> = values
            .iter()
            .zip(&spec.variables)
            .map(|(v, s)| match (v, s) {
                (Value::Bool(b), _) => (*b as u8).to_string(),
                (Value::Int(i), _) => i.to_string(),
                (Value::Level(l), VariableSpec::Categorical { levels, .. }) => levels[*l].clone(),
                (Value::Level(l), _) => l.to_string(),
                (Value::Real(r), _) => r.to_string(),
            })
            .collect();
        cells.push(((raw - lo) / width).to_string());
        wtr.write_record(&cells)?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    String::from_utf8(bytes).map_err(|e| Error::Schema(e.to_string()))
}
