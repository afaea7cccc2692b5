use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kernel_sysid::checks::{reports_to_toml, run_suite, write_reports_csv};
use kernel_sysid::estimator::{select_lambda, EstimateRecord};
use kernel_sysid::{
    make_dataset, make_input, Dataset, KernelDescriptor, KernelSpec, NoiseSpec, Signal, TimeDomain,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, GridSpec};
use crate::{CliError, Common, DomainArg, FamilyArg};

/// Effective configuration plus where relative paths resolve and where outputs go.
struct Run {
    cfg: ExperimentConfig,
    base: PathBuf,
    out: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

/// Hyperparameters of a kernel spec as loose optional fields.
#[derive(Default)]
struct KernelFields {
    family: Option<FamilyArg>,
    domain: Option<TimeDomain>,
    beta: Option<f64>,
    decay: Option<f64>,
    rho: Option<f64>,
    value: Option<f64>,
    table: Option<PathBuf>,
}

impl KernelFields {
    fn from_spec(spec: &KernelSpec) -> Self {
        let mut f = KernelFields::default();
        match spec {
            KernelSpec::Tc { domain, beta } => {
                f.family = Some(FamilyArg::Tc);
                f.domain = Some(*domain);
                f.beta = Some(*beta);
            }
            KernelSpec::Ss { domain, beta } => {
                f.family = Some(FamilyArg::Ss);
                f.domain = Some(*domain);
                f.beta = Some(*beta);
            }
            KernelSpec::Dc { domain, decay, rho } => {
                f.family = Some(FamilyArg::Dc);
                f.domain = Some(*domain);
                f.decay = Some(*decay);
                f.rho = Some(*rho);
            }
            KernelSpec::Constant { domain, value } => {
                f.family = Some(FamilyArg::Constant);
                f.domain = Some(*domain);
                f.value = Some(*value);
            }
            KernelSpec::Tabulated { domain, table } => {
                f.family = Some(FamilyArg::Tabulated);
                f.domain = Some(*domain);
                f.table = Some(table.clone());
            }
        }
        f
    }

    fn to_spec(&self) -> Result<KernelSpec, CliError> {
        let domain = self.domain.unwrap_or(TimeDomain::Discrete);
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| CliError::Config(format!("kernel needs --{name}")))
        };
        let unused = |flags: &[(&str, bool)]| -> Result<(), CliError> {
            match flags.iter().find(|f| f.1) {
                Some((name, _)) => Err(CliError::Config(format!(
                    "--{name} does not apply to this kernel family"
                ))),
                None => Ok(()),
            }
        };
        let (b, d, r, v, t) = (
            self.beta.is_some(),
            self.decay.is_some(),
            self.rho.is_some(),
            self.value.is_some(),
            self.table.is_some(),
        );
        Ok(match self.family {
            None => {
                return Err(CliError::Config(
                    "no kernel given (config [kernel] block or --kernel)".into(),
                ))
            }
            Some(FamilyArg::Tc) => {
                unused(&[("decay", d), ("rho", r), ("value", v), ("table", t)])?;
                KernelSpec::Tc {
                    domain,
                    beta: need(self.beta, "beta")?,
                }
            }
            Some(FamilyArg::Ss) => {
                unused(&[("decay", d), ("rho", r), ("value", v), ("table", t)])?;
                KernelSpec::Ss {
                    domain,
                    beta: need(self.beta, "beta")?,
                }
            }
            Some(FamilyArg::Dc) => {
                unused(&[("beta", b), ("value", v), ("table", t)])?;
                KernelSpec::Dc {
                    domain,
                    decay: need(self.decay, "decay")?,
                    rho: need(self.rho, "rho")?,
                }
            }
            Some(FamilyArg::Constant) => {
                unused(&[("beta", b), ("decay", d), ("rho", r), ("table", t)])?;
                KernelSpec::Constant {
                    domain,
                    value: need(self.value, "value")?,
                }
            }
            Some(FamilyArg::Tabulated) => {
                unused(&[("beta", b), ("decay", d), ("rho", r), ("value", v)])?;
                KernelSpec::Tabulated {
                    domain,
                    table: self
                        .table
                        .clone()
                        .ok_or_else(|| CliError::Config("kernel needs --table".into()))?,
                }
            }
        })
    }
}

/// Precedence: flags > config file > defaults.
fn resolve(common: &Common) -> Result<Run, CliError> {
    let (mut cfg, base) = match &common.config {
        Some(path) => {
            let (cfg, _) = ExperimentConfig::load(path)?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (cfg, base)
        }
        None => (ExperimentConfig::default(), PathBuf::new()),
    };
    let out = match (&common.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("out"),
    };
    // the manifest must not depend on where outputs were written
    cfg.out = None;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.verify.seed = seed;
    }
    if let Some(l) = &common.lambda {
        cfg.estimate.lambda = Some(l.clone());
    }
    let flags_given = common.kernel.is_some()
        || common.domain.is_some()
        || common.beta.is_some()
        || common.decay.is_some()
        || common.rho.is_some()
        || common.value.is_some()
        || common.table.is_some();
    if flags_given {
        let mut f = match (&cfg.kernel, common.kernel) {
            (Some(spec), None) => KernelFields::from_spec(spec),
            (Some(spec), Some(fam)) => {
                let prev = KernelFields::from_spec(spec);
                if prev.family == Some(fam) {
                    prev
                } else {
                    KernelFields {
                        domain: prev.domain,
                        ..Default::default()
                    }
                }
            }
            (None, _) => KernelFields::default(),
        };
        if let Some(fam) = common.kernel {
            f.family = Some(fam);
        }
        if let Some(d) = common.domain {
            f.domain = Some(match d {
                DomainArg::Discrete => TimeDomain::Discrete,
                DomainArg::Continuous => TimeDomain::Continuous,
            });
        }
        f.beta = common.beta.or(f.beta);
        f.decay = common.decay.or(f.decay);
        f.rho = common.rho.or(f.rho);
        f.value = common.value.or(f.value);
        f.table = common.table.clone().or(f.table);
        cfg.kernel = Some(f.to_spec()?);
    }
    Ok(Run { cfg, base, out })
}

impl Run {
    fn kernel(&self) -> Result<KernelDescriptor, CliError> {
        let spec = self.cfg.kernel.as_ref().ok_or_else(|| {
            CliError::Config("no kernel given (config [kernel] block or --kernel)".into())
        })?;
        Ok(spec.build(&self.base)?)
    }

    fn table_path(&self) -> Option<&Path> {
        match &self.cfg.kernel {
            Some(KernelSpec::Tabulated { table, .. }) => Some(table.as_path()),
            _ => None,
        }
    }

    /// Generated or file-backed input, with the hash of any file read.
    fn input(&self, inputs: &mut BTreeMap<String, String>) -> Result<Option<Signal>, CliError> {
        let Some(block) = &self.cfg.input else {
            return Ok(None);
        };
        match (&block.kind, &block.file) {
            (Some(kind), None) => Ok(Some(make_input(*kind, &block.params(), self.cfg.seed)?)),
            (None, Some(file)) => {
                let path = self.base.join(file);
                let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
                inputs.insert(file.display().to_string(), sha256_hex(&bytes));
                Ok(Some(
                    Signal::read_csv(bytes.as_slice()).map_err(|e| io_err(&path, e))?,
                ))
            }
            _ => Err(CliError::Config(
                "[input] needs exactly one of `kind` or `file`".into(),
            )),
        }
    }

    fn write(&self, name: &str, bytes: &[u8], written: &mut Vec<String>) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| io_err(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        written.push(name.to_string());
        Ok(())
    }

    fn manifest(
        &self,
        command: &str,
        tolerances: BTreeMap<String, f64>,
        inputs: BTreeMap<String, String>,
        outputs: &[String],
        written: &mut Vec<String>,
    ) -> Result<(), CliError> {
        let config_text = toml::to_string(&self.cfg)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        let manifest = Manifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed: self.cfg.seed,
            noise_seed: self.cfg.noise_seed(),
            check_seed: self.cfg.verify.seed,
            outputs: outputs.to_vec(),
            tolerances,
            input_sha256: inputs,
            config: self.cfg.clone(),
        };
        let text = toml::to_string(&manifest)
            .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
        self.write(
            &format!("{command}_manifest.toml"),
            text.as_bytes(),
            written,
        )
    }

    fn grid(
        &self,
        spec: Option<&GridSpec>,
        domain: TimeDomain,
        times: &[f64],
    ) -> Result<Vec<f64>, CliError> {
        if let Some(g) = spec {
            return g.points("estimate.grid");
        }
        let t_max = times.iter().fold(0.0_f64, |m, t| m.max(*t));
        Ok(match domain {
            TimeDomain::Discrete => (0..=t_max as i64).map(|t| t as f64).collect(),
            TimeDomain::Continuous => (0..=100).map(|i| t_max * i as f64 / 100.0).collect(),
        })
    }
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    tool_version: String,
    config_sha256: String,
    seed: u64,
    noise_seed: u64,
    check_seed: u64,
    outputs: Vec<String>,
    tolerances: BTreeMap<String, f64>,
    input_sha256: BTreeMap<String, String>,
    config: ExperimentConfig,
}

fn csv_bytes(
    f: impl FnOnce(&mut Vec<u8>) -> kernel_sysid::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

pub fn simulate(common: &Common) -> Result<(), CliError> {
    let run = resolve(common)?;
    let sys = run
        .cfg
        .system
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [system] block".into()))?
        .build()?;
    let mut inputs = BTreeMap::new();
    let u = run
        .input(&mut inputs)?
        .ok_or_else(|| CliError::Config("simulate needs an [input] block".into()))?;
    let times = run
        .cfg
        .samples
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [samples] block".into()))?
        .points("samples")?;
    let noise = NoiseSpec::new(run.cfg.noise.sigma, run.cfg.noise_seed())?;
    let data = make_dataset(&sys, &u, &times, &noise)?;
    let grid = run.grid(run.cfg.estimate.grid.as_ref(), sys.domain(), &times)?;

    let mut written = Vec::new();
    run.write("input.csv", &csv_bytes(|b| u.write_csv(b))?, &mut written)?;
    run.write(
        "dataset.csv",
        &csv_bytes(|b| data.write_csv(b))?,
        &mut written,
    )?;
    let mut truth = String::from("t,g\n");
    for &t in &grid {
        truth.push_str(&format!(
            "{},{}\n",
            kernel_sysid::numeric::fmt_f64(t),
            kernel_sysid::numeric::fmt_f64(sys.true_response(t)?)
        ));
    }
    run.write("true_impulse.csv", truth.as_bytes(), &mut written)?;
    let outputs = written.clone();
    run.manifest("simulate", BTreeMap::new(), inputs, &outputs, &mut written)?;
    for f in &written {
        println!("wrote {}", run.out.join(f).display());
    }
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics {
    lambda: f64,
    samples: usize,
    residual_inf: f64,
    condition_number: f64,
    jitter: f64,
    min_eigenvalue_o: f64,
    trace_o: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    search: Option<Search>,
}

#[derive(Serialize)]
struct Search {
    holdout_stride: usize,
    candidates: Vec<f64>,
    holdout_mse: Vec<f64>,
}

pub fn identify(common: &Common) -> Result<(), CliError> {
    let run = resolve(common)?;
    let kernel = run.kernel()?;
    let est_cfg = &run.cfg.estimate;
    let lambdas = est_cfg
        .lambda
        .as_ref()
        .ok_or_else(|| {
            CliError::Config("identify needs lambda ([estimate] lambda or --lambda)".into())
        })?
        .values()?;
    let mut inputs = BTreeMap::new();
    let locate = |given: &Option<PathBuf>, default: &str| match given {
        Some(p) => (run.base.join(p), p.display().to_string()),
        None => (run.out.join(default), default.to_string()),
    };
    let (input_path, input_label) = locate(&est_cfg.input_file, "input.csv");
    let (data_path, data_label) = locate(&est_cfg.dataset, "dataset.csv");
    let input_bytes = fs::read(&input_path).map_err(|e| io_err(&input_path, e))?;
    let data_bytes = fs::read(&data_path).map_err(|e| io_err(&data_path, e))?;
    inputs.insert(input_label, sha256_hex(&input_bytes));
    inputs.insert(data_label, sha256_hex(&data_bytes));
    let u = Signal::read_csv(input_bytes.as_slice()).map_err(|e| io_err(&input_path, e))?;
    let data = Dataset::read_csv(data_bytes.as_slice(), u).map_err(|e| io_err(&data_path, e))?;

    let (est, search) = select_lambda(
        &kernel,
        &data,
        &lambdas,
        est_cfg.tail_tol,
        est_cfg.holdout_stride,
    )?;
    let grid = run.grid(est_cfg.grid.as_ref(), kernel.domain(), data.sample_times())?;

    let record: EstimateRecord = est.to_record(run.table_path())?;
    let record_text = toml::to_string(&record)
        .map_err(|e| CliError::Config(format!("cannot serialize estimate: {e}")))?;
    let d = &est.diagnostics;
    let diagnostics = Diagnostics {
        lambda: est.lambda,
        samples: data.len(),
        residual_inf: d.residual_inf,
        condition_number: d.condition_number,
        jitter: d.jitter,
        min_eigenvalue_o: d.min_eigenvalue_o,
        trace_o: d.trace_o,
        search: search.map(|s| Search {
            holdout_stride: est_cfg.holdout_stride,
            candidates: s.candidates,
            holdout_mse: s.scores,
        }),
    };
    let diag_text = toml::to_string(&diagnostics)
        .map_err(|e| CliError::Config(format!("cannot serialize diagnostics: {e}")))?;

    let mut written = Vec::new();
    run.write("estimate.toml", record_text.as_bytes(), &mut written)?;
    run.write(
        "impulse.csv",
        &csv_bytes(|b| est.write_impulse_csv(&grid, b))?,
        &mut written,
    )?;
    run.write("fit_diagnostics.toml", diag_text.as_bytes(), &mut written)?;
    let outputs = written.clone();
    let tolerances = BTreeMap::from([
        ("tail_tol".to_string(), est_cfg.tail_tol),
        ("solve_residual_rel".to_string(), 1e-8),
    ]);
    run.manifest("identify", tolerances, inputs, &outputs, &mut written)?;
    println!(
        "lambda = {}, residual = {:e}, condition number = {:e}",
        est.lambda, d.residual_inf, d.condition_number
    );
    for f in &written {
        println!("wrote {}", run.out.join(f).display());
    }
    Ok(())
}

pub fn verify(common: &Common) -> Result<(), CliError> {
    let run = resolve(common)?;
    let kernel = run.kernel()?;
    let mut inputs = BTreeMap::new();
    let u = run.input(&mut inputs)?;
    let reports = run_suite(&kernel, &run.cfg.verify, u.as_ref())?;

    let mut written = Vec::new();
    run.write(
        "checks.csv",
        &csv_bytes(|b| write_reports_csv(&reports, b))?,
        &mut written,
    )?;
    run.write(
        "checks.toml",
        reports_to_toml(&reports)?.as_bytes(),
        &mut written,
    )?;
    let outputs = written.clone();
    let v = &run.cfg.verify;
    let tolerances = BTreeMap::from([
        ("tail_tol".to_string(), v.tail_tol),
        ("probe_tol".to_string(), v.probe_tol),
        ("gap_tol".to_string(), v.gap_tol),
    ]);
    run.manifest("verify", tolerances, inputs, &outputs, &mut written)?;
    for r in &reports {
        println!(
            "{:<24} {}  worst margin {:e}",
            r.name,
            r.verdict,
            r.worst_margin()
        );
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}

pub fn kernels() {
    println!("family     domains               hyperparameters");
    println!(
        "tc         discrete, continuous  --beta (discrete: 0 < beta < 1; continuous: beta > 0)"
    );
    println!("dc         discrete              --decay (0 < decay < 1), --rho (-1 <= rho <= 1)");
    println!("ss         discrete, continuous  --beta (> 0)");
    println!(
        "constant   discrete, continuous  --value (>= 0; not integrable, for divergence tests)"
    );
    println!("tabulated  discrete, continuous  --table (CSV with header s,t,value)");
}
