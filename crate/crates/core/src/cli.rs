//! Command-line front end.
//!
//! Settings are resolved in this order, later sources winning: built-in
//! defaults, the `--config` file, `--set KEY=VALUE` overrides, then the
//! dedicated `--test`, `--noise` and `--seed` flags. Config files hold one
//! `key = value` per line; `#` starts a comment.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::carleman::{min_ratio, trace_free_suite, CarlemanParams};
use crate::collision::StateField;
use crate::error::{Error, Result};
use crate::forward::{add_noise, extract_boundary_data, solve_forward, BoundaryData, ForwardConfig, InitialProfile};
use crate::io::{format_key_values, write_atomic, write_csv};
use crate::kernels::{Drift, Kernel};
use crate::picard::{metrics, phi_of_n, InverseConfig, IterateHistory, Metrics, ReconstructionResult, Reconstructor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "coagrecon", version, about = "Carleman-Picard reconstruction of initial size densities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Test profile, 1 to 4.
    #[arg(long, global = true)]
    pub test: Option<u8>,
    /// Multiplicative noise level delta.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// File of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the forward problem and write (noisy) boundary data.
    GenerateData,
    /// Reconstruct the initial density from a boundary-data CSV.
    Reconstruct {
        /// Boundary data; defaults to `<out>/boundary_data.csv`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Forward solve, noise, reconstruction and metrics in one go.
    RunTest {
        /// Same as `--test`.
        test_id: Option<u8>,
    },
    /// Truncation error phi(N) of the phiL expansion over a range of N.
    SweepN,
    /// Minimum Carleman ratio over the trace-free test suite.
    ProbeCarleman,
}

/// Every tunable value, after defaults and overrides are merged.
#[derive(Debug, Clone)]
pub struct Settings {
    pub test: u8,
    pub noise: f64,
    pub seed: u64,
    pub r: f64,
    pub nv: usize,
    pub t_final: f64,
    pub nt: usize,
    pub drift: f64,
    pub coag: String,
    pub frag: String,
    pub inverse: InverseConfig,
    pub n_min: usize,
    pub n_max: usize,
    pub suite_size: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            test: 1,
            noise: 0.0,
            seed: 0,
            r: 10.0,
            nv: 241,
            t_final: 0.5,
            nt: 301,
            drift: 1.0,
            coag: "sum".into(),
            frag: "sum".into(),
            inverse: InverseConfig::default(),
            n_min: 15,
            n_max: 45,
            suite_size: 20,
        }
    }
}

pub const SETTING_KEYS: &[&str] = &[
    "test", "noise", "seed", "r", "nv", "t_final", "nt", "drift", "coag", "frag", "n", "lambda", "beta", "eps",
    "k_max", "v0", "l", "nv_rec", "ext", "m_bound", "n_min", "n_max", "suite_size",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse `{value}` for `{key}`")))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let inv = &mut self.inverse;
        match key.trim() {
            "test" => self.test = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "r" => self.r = parse(key, v)?,
            "nv" => self.nv = parse(key, v)?,
            "t_final" => self.t_final = parse(key, v)?,
            "nt" => self.nt = parse(key, v)?,
            "drift" => self.drift = parse(key, v)?,
            "coag" => self.coag = v.to_string(),
            "frag" => self.frag = v.to_string(),
            "n" => inv.n = parse(key, v)?,
            "lambda" => inv.lambda = parse(key, v)?,
            "beta" => inv.beta = parse(key, v)?,
            "eps" => inv.eps = parse(key, v)?,
            "k_max" => inv.k_max = parse(key, v)?,
            "v0" => inv.v0 = parse(key, v)?,
            "l" => inv.l = parse(key, v)?,
            "nv_rec" => inv.nv_rec = parse(key, v)?,
            "ext" => inv.ext = parse(key, v)?,
            "m_bound" => inv.m_bound = Some(parse(key, v)?),
            "n_min" => self.n_min = parse(key, v)?,
            "n_max" => self.n_max = parse(key, v)?,
            "suite_size" => self.suite_size = parse(key, v)?,
            other => {
                return Err(Error::invalid(format!(
                    "unknown setting `{other}`; known keys: {}",
                    SETTING_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("config line {}: expected `key = value`", no + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::invalid(format!("config line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        self.set(k, v)
    }

    pub fn resolve(common: &CommonArgs) -> Result<Self> {
        let mut s = Settings::default();
        if let Some(path) = &common.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
            s.apply_config_text(&text)?;
        }
        for kv in &common.set {
            s.apply_override(kv)?;
        }
        if let Some(t) = common.test {
            s.test = t;
        }
        if let Some(d) = common.noise {
            s.noise = d;
        }
        if let Some(seed) = common.seed {
            s.seed = seed;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.test) {
            return Err(Error::invalid(format!("test must be 1..4, got {}", self.test)));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::invalid(format!("noise must be nonnegative, got {}", self.noise)));
        }
        self.forward_config()?.validate()?;
        self.inverse_config()?.validate()
    }

    pub fn profile(&self) -> Result<InitialProfile> {
        InitialProfile::from_selector(&self.test.to_string())
    }

    pub fn forward_config(&self) -> Result<ForwardConfig> {
        let mut cfg = ForwardConfig::new(self.profile()?);
        cfg.r = self.r;
        cfg.nv = self.nv;
        cfg.t_final = self.t_final;
        cfg.nt = self.nt;
        cfg.drift = Drift::constant(self.drift);
        cfg.coag = Kernel::by_label(&self.coag)?;
        cfg.frag = Kernel::by_label(&self.frag)?;
        Ok(cfg)
    }

    pub fn inverse_config(&self) -> Result<InverseConfig> {
        let mut cfg = self.inverse.clone();
        cfg.drift = Drift::constant(self.drift);
        cfg.coag = Kernel::by_label(&self.coag)?;
        cfg.frag = Kernel::by_label(&self.frag)?;
        Ok(cfg)
    }

    fn n_range(&self) -> Result<Vec<usize>> {
        if self.n_min > self.n_max {
            return Err(Error::invalid(format!("empty N range {}..{}", self.n_min, self.n_max)));
        }
        Ok((self.n_min..=self.n_max).collect())
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        _ if e.is_config_error() => EXIT_CONFIG,
        Error::NumericalFailure { .. } | Error::RankDeficient { .. } => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs one command and returns its human-readable summary.
pub fn execute(cli: &Cli) -> Result<String> {
    let mut common = cli.common.clone();
    if let Command::RunTest { test_id: Some(t) } = &cli.command {
        common.test = Some(*t);
    }
    let s = Settings::resolve(&common)?;
    let out = &common.out;
    match &cli.command {
        Command::GenerateData => generate_data(&s, out),
        Command::Reconstruct { data } => {
            let path = data.clone().unwrap_or_else(|| out.join("boundary_data.csv"));
            let bd = BoundaryData::read_csv(&path).map_err(|e| match e {
                Error::Io(io) => Error::invalid(format!("cannot read boundary data {}: {io}", path.display())),
                other => other,
            })?;
            reconstruct(&s, bd, out)
        }
        Command::RunTest { .. } => {
            let bd = noisy_data(&s)?;
            bd.write_csv(&out.join("boundary_data.csv"))?;
            reconstruct(&s, bd, out)
        }
        Command::SweepN => sweep_n(&s, out),
        Command::ProbeCarleman => probe_carleman(&s, out),
    }
}

fn clean_data(s: &Settings) -> Result<(BoundaryData, StateField)> {
    let sol = solve_forward(&s.forward_config()?)?;
    let bd = extract_boundary_data(&sol, s.inverse.l)?;
    Ok((bd, sol.field))
}

fn noisy_data(s: &Settings) -> Result<BoundaryData> {
    add_noise(&clean_data(s)?.0, s.noise, s.seed)
}

fn generate_data(s: &Settings, out: &Path) -> Result<String> {
    let bd = noisy_data(s)?;
    let path = out.join("boundary_data.csv");
    bd.write_csv(&path)?;
    info!("wrote {}", path.display());
    Ok(format!(
        "test {} noise {} seed {}: boundary data at {} time nodes written to {}",
        s.test,
        s.noise,
        s.seed,
        bd.tgrid.len(),
        path.display()
    ))
}

fn reconstruct(s: &Settings, bd: BoundaryData, out: &Path) -> Result<String> {
    let (_, true_field) = clean_data(s)?;
    if &bd.tgrid != true_field.tgrid() {
        return Err(Error::invalid(format!(
            "boundary data has {} time nodes on [0, {}], settings give {} on [0, {}]",
            bd.tgrid.len(),
            bd.tgrid.t_final(),
            true_field.tgrid().len(),
            true_field.tgrid().t_final()
        )));
    }
    let rec = Reconstructor::new(s.inverse_config()?, &bd.tgrid)?;
    let (history, result) = rec.run(&bd)?;
    let truth = true_field.resample(rec.grid())?;
    let m = metrics(&result, &s.profile()?, Some(&truth))?;
    write_reconstruction_artifacts(s, out, &history, &result, &m, &truth)
}

fn write_reconstruction_artifacts(
    s: &Settings,
    out: &Path,
    history: &IterateHistory,
    result: &ReconstructionResult,
    m: &Metrics,
    truth: &StateField,
) -> Result<String> {
    let grid = result.modes.grid();
    let f0_true = s.profile()?.sample(grid.nodes());
    write_csv(
        &out.join("reconstruction.csv"),
        &["v", "f0_true", "f0_rec"],
        &[grid.nodes(), &f0_true, &result.f0_rec],
    )?;

    let ks: Vec<f64> = (1..=history.consec_errors.len()).map(|k| k as f64).collect();
    write_csv(&out.join("convergence.csv"), &["k", "consec_error"], &[&ks, &history.consec_errors])?;

    let pe = m.pointwise_err.as_ref().expect("metrics were computed with the true field");
    let (nv, nt) = (grid.len(), truth.tgrid().len());
    let mut cols = vec![Vec::with_capacity(nv * nt); 5];
    for i in 0..nv {
        for n in 0..nt {
            cols[0].push(grid.nodes()[i]);
            cols[1].push(truth.tgrid().nodes()[n]);
            cols[2].push(truth.at(i, n));
            cols[3].push(result.f_rec.at(i, n));
            cols[4].push(pe.at(i, n));
        }
    }
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_csv(&out.join("field.csv"), &["v", "t", "f_true", "f_rec", "pointwise_err"], &refs)?;

    let rho = history.empirical_rho();
    let kv = [
        ("rel_l2", m.rel_l2.to_string()),
        ("rel_linf", m.rel_linf.to_string()),
        ("empirical_rho", rho.to_string()),
        ("decays_from_2", history.decays_from(2).to_string()),
        ("test", s.test.to_string()),
        ("noise", s.noise.to_string()),
        ("seed", s.seed.to_string()),
        ("n", s.inverse.n.to_string()),
        ("k_max", s.inverse.k_max.to_string()),
    ];
    write_atomic(&out.join("metrics.txt"), &format_key_values(&kv))?;

    let mut summary = format!(
        "test {} (noise {}, seed {}): rel L2 {:.4}, rel Linf {:.4}, empirical rho {:.3}\nconsecutive errors:",
        s.test, s.noise, s.seed, m.rel_l2, m.rel_linf, rho
    );
    for (k, e) in history.consec_errors.iter().enumerate() {
        summary.push_str(&format!("\n  k={} {e:.3e}", k + 1));
    }
    write_atomic(&out.join("summary.txt"), &format!("{summary}\n"))?;
    Ok(summary)
}

fn sweep_n(s: &Settings, out: &Path) -> Result<String> {
    let ns = s.n_range()?;
    let (bd, _) = clean_data(s)?;
    let phi = phi_of_n(&bd, &ns)?;
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    write_csv(&out.join("sweep.csv"), &["N", "phi"], &[&nf, &phi])?;
    let (best, val) = ns
        .iter()
        .zip(&phi)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("range is nonempty");
    Ok(format!(
        "test {}: phi(N) for N in {}..={}; smallest {val:.3e} at N = {best}",
        s.test, s.n_min, s.n_max
    ))
}

fn probe_carleman(s: &Settings, out: &Path) -> Result<String> {
    if s.suite_size == 0 {
        return Err(Error::invalid("suite_size must be positive"));
    }
    let suite = trace_free_suite(s.inverse.l, s.suite_size, s.seed);
    let lambdas: Vec<f64> = [1.0, 2.0, 4.0].iter().map(|k| k * s.inverse.lambda).collect();
    let mut ratios = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let params = CarlemanParams::new(lambda, s.inverse.beta, s.inverse.v0)?;
        ratios.push(min_ratio(&params, s.inverse.l, &suite)?);
    }
    write_csv(&out.join("carleman_probe.csv"), &["lambda", "min_ratio"], &[&lambdas, &ratios])?;
    let mut summary = format!("Carleman ratio over {} trace-free functions:", s.suite_size);
    for (l, r) in lambdas.iter().zip(&ratios) {
        summary.push_str(&format!("\n  lambda {l}: min ratio {r:.3e}"));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_grammar() {
        let mut s = Settings::default();
        s.apply_config_text("# header\n\nn = 15  # fewer modes\neps=1e-5\ncoag = constant: 2\n")
            .unwrap();
        assert_eq!(s.inverse.n, 15);
        assert_eq!(s.inverse.eps, 1e-5);
        assert_eq!(s.coag, "constant: 2");
        assert!(s.apply_config_text("bogus = 1").is_err());
        assert!(s.apply_config_text("n 15").is_err());
        assert!(s.apply_config_text("n = fifteen").is_err());
    }

    #[test]
    fn flags_win_over_overrides() {
        let common = CommonArgs {
            test: Some(3),
            noise: Some(0.1),
            set: vec!["test=2".into(), "seed=9".into()],
            ..CommonArgs::default()
        };
        let s = Settings::resolve(&common).unwrap();
        assert_eq!((s.test, s.noise, s.seed), (3, 0.1, 9));
    }

    #[test]
    fn invalid_settings_rejected() {
        for set in ["test=5", "noise=-0.1", "nv_rec=3", "lambda=0", "coag=quadratic", "n_min=30"] {
            let mut common = CommonArgs::default();
            common.set.push(set.into());
            if set == "n_min=30" {
                common.set.push("n_max=20".into());
                let s = Settings::resolve(&common).unwrap();
                assert!(s.n_range().is_err());
                continue;
            }
            let err = Settings::resolve(&common).unwrap_err();
            assert!(err.is_config_error(), "{set}: {err}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_CONFIG);
        let e = Error::NumericalFailure {
            module: "picard",
            step: 2,
            reason: "x".into(),
        };
        assert_eq!(exit_code(&e), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::RankDeficient { rank: 1, cols: 2 }), EXIT_NUMERICAL);
    }
}
