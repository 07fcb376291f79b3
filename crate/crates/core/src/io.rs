//! File formats: JSON model specs, CSV datasets, CSV posterior draws with a
//! JSON sidecar, and CSV query/sweep tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! binary64 value reloads bit-identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{CovariateKind, CovariateSchema, Dataset, ModelSpec, NodeSpec, ParameterVector};
use crate::predictive::{QueryResult, SweepPoint};
use crate::sampler::{ChainDraws, PosteriorSample, SamplerConfig};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecDoc {
    covariates: CovariateSchema,
    nodes: Vec<NodeSpec>,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        message: format!("column {}: {e}", e.column()),
    }
}

/// Strict parse (unknown keys rejected) followed by network validation.
pub fn parse_spec(text: &str) -> Result<ModelSpec> {
    let doc: SpecDoc = serde_json::from_str(text).map_err(json_error)?;
    ModelSpec::new(doc.covariates, doc.nodes)
}

/// Canonical pretty-printed JSON with a trailing newline.
pub fn serialize_spec(model: &ModelSpec) -> String {
    let doc = SpecDoc {
        covariates: model.covariates().clone(),
        nodes: model.nodes().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("spec serializes");
    s.push('\n');
    s
}

/// SHA-256 of the canonical spec serialization, hex encoded.
pub fn fingerprint(model: &ModelSpec) -> String {
    hex::encode(Sha256::digest(serialize_spec(model).as_bytes()))
}

pub fn read_spec_file(path: &Path) -> Result<ModelSpec> {
    parse_spec(&fs::read_to_string(path)?)
}

pub fn write_spec_file(model: &ModelSpec, path: &Path) -> Result<()> {
    fs::write(path, serialize_spec(model))?;
    Ok(())
}

/// Parameters as a JSON object `name -> value`.
pub fn parse_theta(text: &str, model: &ModelSpec) -> Result<ParameterVector> {
    let named: BTreeMap<String, f64> = serde_json::from_str(text).map_err(json_error)?;
    ParameterVector::from_named(model, &named)
}

pub fn serialize_theta(model: &ModelSpec, params: &ParameterVector) -> String {
    let mut s = serde_json::to_string_pretty(&params.to_named(model)).expect("theta serializes");
    s.push('\n');
    s
}

fn is_missing(field: &str) -> bool {
    field.is_empty() || field == "NA" || field == "NaN"
}

fn parse_number(field: &str, line: usize, column: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(Error::Parse {
            line,
            message: format!("invalid number `{field}` in column `{column}`"),
        }),
    }
}

/// Reads a dataset with columns matched by name; extra columns are ignored.
/// Empty, `NA` and `NaN` cells are missing values. Row indices in errors are
/// 0-based data rows.
pub fn read_dataset(csv_text: &str, model: &ModelSpec) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| -> Result<usize> {
        let mut hits = headers.iter().enumerate().filter(|(_, h)| *h == name);
        let first = hits.next().ok_or_else(|| Error::MissingColumn(name.to_string()))?;
        if hits.next().is_some() {
            return Err(Error::Parse {
                line: 1,
                message: format!("column `{name}` appears twice"),
            });
        }
        Ok(first.0)
    };
    let cov_names: Vec<&str> = model.covariates().entries.iter().map(|c| c.name.as_str()).collect();
    let node_names: Vec<&str> = model.nodes().iter().map(|n| n.name.as_str()).collect();
    let cov_cols = cov_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let node_cols = node_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;

    let mut cov_rows = Vec::new();
    let mut node_rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(row + 2),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(row + 2);
        let read = |cols: &[usize], names: &[&str]| -> Result<Vec<f64>> {
            cols.iter()
                .zip(names)
                .map(|(&c, name)| {
                    let field = record.get(c).unwrap_or("");
                    if is_missing(field) {
                        Err(Error::MissingValue {
                            row,
                            column: name.to_string(),
                        })
                    } else {
                        parse_number(field, line, name)
                    }
                })
                .collect()
        };
        cov_rows.push(read(&cov_cols, &cov_names)?);
        node_rows.push(read(&node_cols, &node_names)?);
    }
    Dataset::from_rows(model, &cov_rows, &node_rows)
}

fn push_number(out: &mut String, x: f64, binary: bool) {
    if binary {
        out.push_str(if x == 1.0 { "1" } else { "0" });
    } else {
        write!(out, "{x:?}").expect("write to string");
    }
}

/// Covariate columns then node columns, declaration order.
pub fn write_dataset(data: &Dataset, model: &ModelSpec) -> Result<String> {
    data.check_conforms(model)?;
    let mut out = String::new();
    let names: Vec<&str> = data
        .covariate_names()
        .iter()
        .chain(data.node_names())
        .map(String::as_str)
        .collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..data.n_rows() {
        let mut first = true;
        for (c, &x) in data.covariate_row(r).iter().enumerate() {
            if !first {
                out.push(',');
            }
            first = false;
            push_number(&mut out, x, model.covariates().entries[c].kind == CovariateKind::Binary);
        }
        for (v, &x) in data.node_row(r).iter().enumerate() {
            if !first {
                out.push(',');
            }
            first = false;
            push_number(&mut out, x, model.node(v).is_discrete());
        }
        out.push('\n');
    }
    Ok(out)
}

/// Locations of the draws CSV and its JSON sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosteriorPaths {
    pub draws: PathBuf,
    pub meta: PathBuf,
}

impl PosteriorPaths {
    /// `post.csv` pairs with `post.meta.json`.
    pub fn from_draws(path: &Path) -> Self {
        PosteriorPaths {
            draws: path.to_path_buf(),
            meta: path.with_extension("meta.json"),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PosteriorMeta {
    parameters: Vec<String>,
    config: SamplerConfig,
    seed: u64,
    fingerprint: String,
    draws_per_chain: Vec<usize>,
    acceptance_rates: Vec<Vec<Option<f64>>>,
}

pub fn posterior_csv(sample: &PosteriorSample) -> String {
    let mut out = String::from("chain,iteration");
    for name in &sample.parameter_names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (c, chain) in sample.chains.iter().enumerate() {
        for (k, it) in chain.iterations.iter().enumerate() {
            write!(out, "{c},{it}").expect("write to string");
            for x in sample.draw(c, k) {
                write!(out, ",{x:?}").expect("write to string");
            }
            out.push('\n');
        }
    }
    out
}

pub fn posterior_meta_json(sample: &PosteriorSample) -> String {
    let meta = PosteriorMeta {
        parameters: sample.parameter_names.clone(),
        config: sample.config.clone(),
        seed: sample.config.seed,
        fingerprint: sample.fingerprint.clone(),
        draws_per_chain: sample.chains.iter().map(|c| c.iterations.len()).collect(),
        acceptance_rates: sample
            .chains
            .iter()
            .map(|c| {
                c.acceptance
                    .iter()
                    .map(|&a| if a.is_finite() { Some(a) } else { None })
                    .collect()
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&meta).expect("meta serializes");
    s.push('\n');
    s
}

pub fn write_posterior(sample: &PosteriorSample, paths: &PosteriorPaths) -> Result<()> {
    fs::write(&paths.draws, posterior_csv(sample))?;
    fs::write(&paths.meta, posterior_meta_json(sample))?;
    Ok(())
}

/// Parses draws and sidecar without checking them against a model.
pub fn parse_posterior(csv_text: &str, meta_text: &str) -> Result<PosteriorSample> {
    let meta: PosteriorMeta = serde_json::from_str(meta_text).map_err(json_error)?;
    let n_params = meta.parameters.len();
    if meta.acceptance_rates.len() != meta.draws_per_chain.len() {
        return Err(Error::Parse {
            line: 0,
            message: "sidecar chain counts disagree".into(),
        });
    }

    let n_lines = csv_text.lines().count();
    if !csv_text.is_empty() && !csv_text.ends_with('\n') {
        return Err(Error::Parse {
            line: n_lines,
            message: "truncated file: last line is incomplete".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let expected: Vec<&str> = ["chain", "iteration"]
        .into_iter()
        .chain(meta.parameters.iter().map(String::as_str))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse {
            line: 1,
            message: "header does not match the sidecar parameter list".into(),
        });
    }

    let mut chains: Vec<ChainDraws> = meta
        .acceptance_rates
        .iter()
        .map(|acc| ChainDraws {
            iterations: Vec::new(),
            values: Vec::new(),
            acceptance: acc.iter().map(|a| a.unwrap_or(f64::NAN)).collect(),
        })
        .collect();
    for record in records {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != n_params + 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", n_params + 2, record.len()),
            });
        }
        let chain: usize = record[0].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid chain index `{}`", &record[0]),
        })?;
        let iteration: usize = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid iteration `{}`", &record[1]),
        })?;
        let target = chains.get_mut(chain).ok_or_else(|| Error::Parse {
            line,
            message: format!("chain {chain} not declared in sidecar"),
        })?;
        target.iterations.push(iteration);
        for (k, field) in record.iter().skip(2).enumerate() {
            target.values.push(parse_number(field, line, &meta.parameters[k])?);
        }
    }
    for (c, (chain, &expected)) in chains.iter().zip(&meta.draws_per_chain).enumerate() {
        if chain.iterations.len() != expected {
            return Err(Error::Parse {
                line: n_lines + 1,
                message: format!(
                    "chain {c} has {} draws, sidecar declares {expected} (truncated file?)",
                    chain.iterations.len()
                ),
            });
        }
    }
    let mut config = meta.config;
    config.seed = meta.seed;
    Ok(PosteriorSample {
        parameter_names: meta.parameters,
        chains,
        config,
        fingerprint: meta.fingerprint,
    })
}

pub fn read_posterior_unchecked(paths: &PosteriorPaths) -> Result<PosteriorSample> {
    parse_posterior(&fs::read_to_string(&paths.draws)?, &fs::read_to_string(&paths.meta)?)
}

/// Reads a posterior and verifies it was fitted to `model`.
pub fn read_posterior(paths: &PosteriorPaths, model: &ModelSpec) -> Result<PosteriorSample> {
    let sample = read_posterior_unchecked(paths)?;
    sample.check_model(model)?;
    if sample.parameter_names != model.parameter_names() {
        return Err(Error::SchemaMismatch(
            "posterior parameters differ from the model".into(),
        ));
    }
    Ok(sample)
}

fn state_suffix(result: &QueryResult, state: usize) -> String {
    result
        .targets
        .iter()
        .zip(&result.states[state])
        .map(|(t, s)| format!("_{t}{s}"))
        .collect()
}

/// One row per joint target state.
pub fn query_csv(result: &QueryResult) -> String {
    let mut out = result.targets.join(",");
    out.push_str(",probability,std_error,draws_used,latent_draws_per_state,averaging\n");
    for (s, state) in result.states.iter().enumerate() {
        for x in state {
            write!(out, "{x},").expect("write to string");
        }
        writeln!(
            out,
            "{:?},{:?},{},{},{}",
            result.probabilities[s],
            result.std_errors[s],
            result.draws_used,
            result.latent_draws_per_state,
            result.averaging.label()
        )
        .expect("write to string");
    }
    out
}

/// One row per grid point: coordinates, probabilities `p_<state>`, standard
/// errors `se_<state>`, draws used and the averaging label.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let Some(first) = points.first() else {
        return String::new();
    };
    let mut cols: Vec<String> = first.coordinates.iter().map(|(n, _)| n.clone()).collect();
    let n_states = first.result.states.len();
    cols.extend((0..n_states).map(|s| format!("p{}", state_suffix(&first.result, s))));
    cols.extend((0..n_states).map(|s| format!("se{}", state_suffix(&first.result, s))));
    cols.push("draws_used".into());
    cols.push("averaging".into());
    let mut out = cols.join(",");
    out.push('\n');
    for p in points {
        let mut fields: Vec<String> = p.coordinates.iter().map(|(_, x)| format!("{x:?}")).collect();
        fields.extend(p.result.probabilities.iter().map(|x| format!("{x:?}")));
        fields.extend(p.result.std_errors.iter().map(|x| format!("{x:?}")));
        fields.push(p.result.draws_used.to_string());
        fields.push(p.result.averaging.label().to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{bertha_preset, reference_theta, synth_dataset};
    use crate::model::{Covariate, NormalPrior, UniformPrior};
    use crate::sampler::{fit, SamplerConfig};
    use proptest::prelude::*;

    #[test]
    fn preset_roundtrips() {
        let m = bertha_preset();
        let text = serialize_spec(&m);
        let back = parse_spec(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serialize_spec(&back), text);
    }

    #[test]
    fn shipped_preset_file_is_canonical() {
        let shipped = include_str!("../presets/bertha.json");
        assert_eq!(shipped, serialize_spec(&bertha_preset()));
        let theta = include_str!("../presets/bertha_theta.json");
        let m = bertha_preset();
        assert_eq!(parse_theta(theta, &m).unwrap(), reference_theta(&m).unwrap());
    }

    #[test]
    fn spec_errors() {
        let m = bertha_preset();
        let text = serialize_spec(&m).replacen("\"SRT\"\n      ]", "\"XYZ\"\n      ]", 1);
        let err = parse_spec(&text).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("XYZ"), "{err}");

        let text = serialize_spec(&m).replacen("\"hi\": 30.0", "\"hi\": 0.0", 1);
        assert!(parse_spec(&text).unwrap_err().is_validation());

        let text = serialize_spec(&m).replacen("\"mean\": 0.0", "\"mean\": 0.0, \"sd\": 1.0", 1);
        assert!(matches!(parse_spec(&text), Err(Error::Parse { .. })));

        match parse_spec("{\n  \"covariates\": [\n  oops") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn tiny_model() -> ModelSpec {
        let covs = CovariateSchema::new(vec![Covariate::binary("Sex"), Covariate::continuous("Age")]);
        let nodes = vec![
            NodeSpec::bernoulli("AF", &["Sex"], &[], NormalPrior::new(0.0, 25.0)),
            NodeSpec::gaussian(
                "MNB",
                &["Age"],
                &["AF"],
                NormalPrior::new(0.0, 25.0),
                UniformPrior::new(0.0, 30.0),
            ),
        ];
        ModelSpec::new(covs, nodes).unwrap()
    }

    #[test]
    fn dataset_reading() {
        let m = tiny_model();
        let empty = read_dataset("Sex,Age,AF,MNB\n", &m).unwrap();
        assert_eq!(empty.n_rows(), 0);

        let a = read_dataset("Sex,Age,AF,MNB\n1,30.5,0,14.2\n0,41,1,16\n", &m).unwrap();
        let b = read_dataset("MNB,id,AF,Age,Sex\n14.2,p1,0,30.5,1\n16,p2,1,41,0\n", &m).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.node_row(1), &[1.0, 16.0]);

        match read_dataset("Sex,Age,AF,MNB\n1,30,0,14\n0,41,2,16\n", &m) {
            Err(Error::NonBinaryValue { row, column, .. }) => assert_eq!((row, column.as_str()), (1, "AF")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_dataset("Sex,Age,MNB\n", &m), Err(Error::MissingColumn(c)) if c == "AF"));
        assert!(matches!(
            read_dataset("Sex,Age,AF,MNB\n1,,0,14\n", &m),
            Err(Error::MissingValue { row: 0, .. })
        ));
        assert!(matches!(
            read_dataset("Sex,Age,AF,MNB\n1,NA,0,14\n", &m),
            Err(Error::MissingValue { .. })
        ));
        assert!(matches!(
            read_dataset("Sex,Age,AF,MNB\n1,\"30,5\",0,14\n", &m),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn dataset_write_read() {
        let m = bertha_preset();
        let data = synth_dataset(&m, &reference_theta(&m).unwrap(), 50, 2).unwrap();
        let text = write_dataset(&data, &m).unwrap();
        assert_eq!(read_dataset(&text, &m).unwrap(), data);
    }

    fn small_posterior() -> (ModelSpec, PosteriorSample) {
        let m = tiny_model();
        let data = read_dataset(
            "Sex,Age,AF,MNB\n1,30.5,0,14.2\n0,41,1,16\n1,25,1,13.5\n0,50,0,17.1\n",
            &m,
        )
        .unwrap();
        let config = SamplerConfig {
            chains: 2,
            iterations: 200,
            warmup: 100,
            seed: 3,
            ..Default::default()
        };
        let s = fit(&m, &data, &config).unwrap();
        (m, s)
    }

    #[test]
    fn posterior_roundtrip_is_bit_exact() {
        let (m, s) = small_posterior();
        let dir = tempfile::tempdir().unwrap();
        let paths = PosteriorPaths::from_draws(&dir.path().join("post.csv"));
        assert_eq!(paths.meta, dir.path().join("post.meta.json"));
        write_posterior(&s, &paths).unwrap();
        let back = read_posterior(&paths, &m).unwrap();
        assert_eq!(back.chains.len(), s.chains.len());
        for (a, b) in back.chains.iter().zip(&s.chains) {
            assert_eq!(a.iterations, b.iterations);
            let abits: Vec<u64> = a.values.iter().map(|x| x.to_bits()).collect();
            let bbits: Vec<u64> = b.values.iter().map(|x| x.to_bits()).collect();
            assert_eq!(abits, bbits);
        }
        assert_eq!(back, s);

        assert!(matches!(
            read_posterior(&paths, &bertha_preset()),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn truncated_posterior_reports_line() {
        let (_, s) = small_posterior();
        let csv = posterior_csv(&s);
        let meta = posterior_meta_json(&s);
        let cut = &csv[..csv.len() - 7];
        match parse_posterior(cut, &meta) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, csv.lines().count()),
            other => panic!("unexpected {other:?}"),
        }
        let lines: Vec<&str> = csv.lines().collect();
        let dropped = lines[..lines.len() - 3].join("\n") + "\n";
        assert!(matches!(parse_posterior(&dropped, &meta), Err(Error::Parse { .. })));
        let short_row = lines[..3].join("\n") + "\n0,1,2.0\n";
        match parse_posterior(&short_row, &meta) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn number_format_roundtrips(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let s = format!("{x:?}");
            prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }
}
