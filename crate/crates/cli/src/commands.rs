use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dtsurv::encode::{
    apply_filters, encode_record, encode_table, fit_encoder, AddressBackend, CachedAddressResolver, EncoderMap,
    EncoderSpec, FilterRuleSet, GeoChain, HttpGeocoder, RawTable, StaticFipsTable,
};
use dtsurv::evaluate::evaluate_models;
use dtsurv::io::{load_dataset, load_expanded, save_dataset, ExpandedCsvSink};
use dtsurv::learners::{load_model, save_model, train as fit, HazardModel, ModelConfig};
use dtsurv::prognosis::{prognose, PrognosisOptions};
use dtsurv::survival::BandOptions;
use dtsurv::synthgen::{generate, SyntheticSpec};
use dtsurv::transform::{expand_streaming, patient_split, SplitOptions};
use dtsurv::Dataset;
use dtsurv_service::{ServiceConfig, ServiceError};

use crate::{Cli, EvaluateArgs, PredictArgs, ServeArgs, SynthArgs, TrainArgs, TransformArgs};

pub struct CliError {
    pub validation: bool,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { validation: true, message: message.into() }
    }
}

impl From<dtsurv::Error> for CliError {
    fn from(e: dtsurv::Error) -> Self {
        CliError { validation: e.is_validation(), message: e.to_string() }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        let validation = match &e {
            ServiceError::Config(_) | ServiceError::Model { .. } => true,
            ServiceError::Core(c) => c.is_validation(),
            ServiceError::Io(_) => false,
        };
        CliError { validation, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { validation: false, message: e.to_string() }
    }
}

type Result<T = ()> = std::result::Result<T, CliError>;

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError { validation: false, message: format!("{}: {e}", path.display()) }
}

/// County table first, then the address cache, then the remote geocoder
/// when `GEO_API_KEY` is set.
fn geo_resolver(cache: Option<&Path>) -> Result<GeoChain> {
    let backend = HttpGeocoder::from_env().ok().map(|g| Box::new(g) as Box<dyn AddressBackend>);
    let mut addresses = CachedAddressResolver::new(backend);
    if let Some(p) = cache {
        addresses = addresses.with_cache_file(p)?;
    }
    Ok(GeoChain::new().push(StaticFipsTable::bundled()).push(addresses))
}

fn shape(label: &str, rows: usize, cols: usize) {
    println!("{label}: ({rows}, {cols})");
}

pub fn transform(cli: &Cli, a: &TransformArgs) -> Result {
    let dataset = match &a.encoder {
        Some(spec_path) => {
            let mut table = RawTable::from_path(&a.input)?;
            shape("raw", table.len(), table.headers().len());
            if let Some(f) = &a.filter {
                table = apply_filters(&table, &FilterRuleSet::from_path(f)?)?;
                shape("filtered", table.len(), table.headers().len());
            }
            if table.is_empty() {
                return Err(CliError::usage("cohort is empty after filtering"));
            }
            let map = fit_encoder(&table, &EncoderSpec::from_path(spec_path)?)?;
            let encoded = encode_table(&map, &table, &geo_resolver(a.geo_cache.as_deref())?)?;
            for s in &encoded.skipped {
                log::warn!("row {} skipped: {}", s.row, s.reason);
            }
            if let Some(p) = &a.encoder_out {
                map.save(p)?;
            }
            encoded.dataset
        }
        None => {
            if a.filter.is_some() {
                return Err(CliError::usage("--filter applies to raw tables and needs --encoder"));
            }
            load_dataset(&a.input)?
        }
    };
    if dataset.is_empty() {
        return Err(CliError::usage("cohort is empty after encoding"));
    }
    let n_cols = dataset.schema().len() + 3;
    shape("encoded", dataset.len(), n_cols);
    if let Some(p) = &a.encoded_out {
        save_dataset(&dataset, p)?;
    }
    let train = match a.test_fraction {
        Some(f) => {
            let opts = SplitOptions { test_fraction: f, seed: cli.seed.unwrap_or(0), ..SplitOptions::default() };
            let split = patient_split(&dataset, opts)?;
            let out = a.test_out.as_ref().expect("clap requires --test-out");
            save_dataset(&split.test, out)?;
            shape("test", split.test.len(), n_cols);
            split.train
        }
        None => dataset,
    };
    let file = File::create(&a.expanded_out).map_err(io_at(&a.expanded_out))?;
    let mut sink = ExpandedCsvSink::new(BufWriter::new(file), train.schema())?;
    let rows = expand_streaming(&train, &mut sink, a.chunk_size)?;
    sink.finish()?;
    shape("expanded", rows, n_cols);
    Ok(())
}

pub fn train(cli: &Cli, a: &TrainArgs) -> Result {
    let e = load_expanded(&a.input)?;
    shape("expanded", e.len(), e.schema().len() + 2);
    let mut config = match (&a.kind, &a.preset) {
        (Some(k), _) => ModelConfig::for_kind(k)?,
        (None, Some(p)) => ModelConfig::preset(p)?,
        (None, None) => return Err(CliError::usage("pass --kind or --preset")),
    };
    if let Some(p) = a.params.as_ref().or(cli.config.as_ref()) {
        config.apply_overrides_file(p)?;
    }
    if let Some(s) = cli.seed {
        config.set_seed(s);
    }
    if cli.threads.is_some() {
        config.set_threads(cli.threads);
    }
    let (mut model, log) = fit(&e, &config)?;
    if let Some(p) = &a.encoder {
        model = model.with_encoder(EncoderMap::load(p)?)?;
    }
    if let Some(last) = log.epochs.last() {
        println!("final train loss after {} epochs: {:.6}", last.epoch, last.train_loss);
    }
    if let Some(p) = &a.log_out {
        let mut out = String::from("epoch,train_loss,validation_loss\n");
        for s in &log.epochs {
            let v = s.validation_loss.map_or_else(String::new, |v| v.to_string());
            out.push_str(&format!("{},{},{v}\n", s.epoch, s.train_loss));
        }
        std::fs::write(p, out).map_err(io_at(p))?;
    }
    save_model(&model, &a.out)?;
    println!("{} model written to {}", model.kind(), a.out.display());
    Ok(())
}

fn model_name(path: &Path, taken: &mut HashMap<String, usize>) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    let n = taken.entry(stem.clone()).or_insert(0);
    *n += 1;
    if *n == 1 {
        stem
    } else {
        format!("{stem}_{n}")
    }
}

pub fn evaluate(a: &EvaluateArgs) -> Result {
    let test = load_dataset(&a.test)?;
    let mut taken = HashMap::new();
    let models: Vec<(String, HazardModel)> = a
        .models
        .iter()
        .map(|p| Ok((model_name(p, &mut taken), load_model(p).map_err(|e| e.with_path(p))?)))
        .collect::<std::result::Result<_, dtsurv::Error>>()?;
    let refs: Vec<(String, &HazardModel)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let report = evaluate_models(&refs, &test, &a.horizons)?;
    let csv = report.to_csv();
    match &a.out {
        Some(p) => {
            std::fs::write(p, &csv).map_err(io_at(p))?;
            print!("{csv}");
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn read_patient(a: &PredictArgs) -> Result<BTreeMap<String, String>> {
    if let Some(p) = &a.patient {
        let text = std::fs::read_to_string(p).map_err(io_at(p))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
        let obj = v
            .as_object()
            .ok_or_else(|| CliError::usage(format!("{}: expected a JSON object", p.display())))?;
        return obj
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                serde_json::Value::Number(_) | serde_json::Value::Bool(_) => Ok((k.clone(), v.to_string())),
                _ => Err(CliError::usage(format!("field `{k}` must be a string or number"))),
            })
            .collect();
    }
    let p = a.row.as_ref().expect("clap requires --patient or --row");
    let table = RawTable::from_path(p)?;
    if a.row_index == 0 || a.row_index > table.len() {
        return Err(CliError::usage(format!("{} has no data row {}", p.display(), a.row_index)));
    }
    let values = &table.rows()[a.row_index - 1];
    Ok(table.headers().iter().cloned().zip(values.iter().cloned()).collect())
}

pub fn predict(cli: &Cli, a: &PredictArgs) -> Result {
    let m = load_model(&a.model).map_err(|e| e.with_path(&a.model))?;
    let raw = read_patient(a)?;
    let x = match m.encoder() {
        Some(enc) => encode_record(enc, &raw, &geo_resolver(a.geo_cache.as_deref())?)?,
        None => m
            .covariate_schema()
            .names()
            .iter()
            .map(|n| {
                let v = raw.get(n).ok_or_else(|| CliError::usage(format!("missing field `{n}`")))?;
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::usage(format!("field `{n}`: `{v}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?,
    };
    let opts = PrognosisOptions {
        horizons: a.horizons.clone(),
        bands: a.bands.then(|| BandOptions {
            n_resamples: a.n_resamples,
            seed: cli.seed.unwrap_or(0),
            ..BandOptions::default()
        }),
    };
    let p = prognose(&m, &x, &opts)?;
    if let Some(out) = &a.curve_out {
        std::fs::write(out, p.curve()?.to_csv()).map_err(io_at(out))?;
    }
    for (h, s) in &p.horizon_probs {
        println!("S({h}) = {s:.6}");
    }
    Ok(())
}

pub fn synth(cli: &Cli, a: &SynthArgs) -> Result {
    let mut spec = SyntheticSpec::from_path(&a.spec)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(n) = a.patients {
        spec.n_patients = n;
    }
    let d: Dataset = generate(&spec)?;
    save_dataset(&d, &a.out)?;
    shape("synthetic", d.len(), d.schema().len() + 3);
    Ok(())
}

pub fn serve(cli: &Cli, a: &ServeArgs) -> Result {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let mut config = ServiceConfig::load(cli.config.as_deref())?;
    if let Some(b) = a.bind {
        config.bind = b;
    }
    if let Some(d) = &a.model_dir {
        config.model_dir = d.clone();
    }
    if let Some(d) = &a.static_dir {
        config.static_dir = Some(PathBuf::from(d));
    }
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(dtsurv_service::serve(config))?;
    Ok(())
}
