use std::fs;
use std::path::{Path, PathBuf};

use koopgram::balance::{balance, truncate, BalanceOptions};
use koopgram::demo::{run_demo, DemoSetup, DemoThresholds};
use koopgram::dictionary::{
    Dictionary, DictionarySpec, InputDictionary, InputDictionaryKind, InputDictionarySpec,
};
use koopgram::dynsys::{DiscreteSystem, OscillatorParams, DEFAULT_DIVERGENCE_CAP};
use koopgram::edmd::{build_snapshots, fit_koopman, fit_koopman_with_input};
use koopgram::exec::Exec;
use koopgram::gramians::{controllability_gramian, observability_gramian, project};
use koopgram::io::{
    read_json, read_trajectory_csv, to_json_string, write_json, write_trajectory_csv, BalancedFile,
    GramianFile, InputConfig, ModelFile, ReducedFile, SystemConfig,
};
use koopgram::Error;
use log::info;

use crate::args::{
    BalanceArgs, Cli, Command, DemoArgs, FitArgs, GramianArgs, InputArg, KindArg, ProjectArg,
    ReduceArgs, SimulateArgs, SystemArg,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unusable input files; exit code 2.
    Usage(String),
    /// A pipeline failure; exit code 1.
    Compute(Error),
    /// The demo ran but some checks failed; exit code 1.
    ChecksFailed(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            // Unreadable or malformed inputs are the caller's to fix.
            Error::Format { .. } | Error::Io { .. } => CliError::Usage(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_file(p: &Path) -> CliResult {
    if p.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file", p.display())))
    }
}

fn require_out(p: &Path) -> CliResult {
    match p.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(usage(format!(
            "{}: output directory does not exist",
            p.display()
        ))),
        _ if p.is_dir() => Err(usage(format!(
            "{}: output path is a directory",
            p.display()
        ))),
        _ => Ok(()),
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::default()
    };
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a, cli.seed, exec),
        Command::Gramians(a) => gramians(a, cli.seed),
        Command::Balance(a) => balance_cmd(a, cli.seed),
        Command::Reduce(a) => reduce(a, cli.seed),
        Command::Demo(a) => demo(a, cli.seed, exec),
    }
}

fn simulate(a: &SimulateArgs) -> CliResult {
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    require_out(&a.out)?;
    let mut cfg: SystemConfig = match (&a.config, a.system) {
        (Some(path), _) => read_json(path)?,
        (None, Some(sys)) => SystemConfig {
            system: match sys {
                SystemArg::Example1 => koopgram::dynsys::SystemKind::Example1,
                SystemArg::Example3 => koopgram::dynsys::SystemKind::Example3,
            },
            params: serde_json::to_value(OscillatorParams::default()).expect("params serialize"),
            x0: vec![0.3, 0.3],
            horizon: 25,
            input: InputConfig::Zero,
        },
        (None, None) => return Err(usage("one of --system or --config is required")),
    };
    if let Some(x0) = &a.x0 {
        cfg.x0 = x0.clone();
    }
    if let Some(t) = a.horizon {
        cfg.horizon = t as usize;
    }
    match a.input {
        Some(InputArg::Zero) => cfg.input = InputConfig::Zero,
        Some(InputArg::SinRamp) => cfg.input = InputConfig::SinRamp { mu: a.mu },
        None => {}
    }
    let sys: DiscreteSystem = cfg.build_system().map_err(|e| usage(e.to_string()))?;
    if cfg.x0.len() != sys.state_dim() {
        return Err(usage(format!(
            "--x0 has {} entries but the system has {} states",
            cfg.x0.len(),
            sys.state_dim()
        )));
    }
    let x0 = cfg.initial_state();
    let tr = sys.simulate(
        &x0,
        &cfg.input.to_signal(),
        cfg.horizon,
        DEFAULT_DIVERGENCE_CAP,
    )?;
    write_trajectory_csv(&a.out, &tr)?;
    info!("wrote {} rows to {}", tr.horizon() + 1, a.out.display());
    Ok(())
}

fn load_dictionary(arg: &str, state_dim: usize) -> CliResult<Dictionary> {
    let spec = match arg {
        "example1" => DictionarySpec::Example1 {
            params: OscillatorParams::default(),
        },
        "identity" => DictionarySpec::Identity { n: state_dim },
        path => {
            let p = PathBuf::from(path);
            require_file(&p)?;
            read_json(&p)?
        }
    };
    Ok(Dictionary::from_spec(&spec)?)
}

fn load_input_dictionary(arg: &str, input_dim: usize) -> CliResult<InputDictionary> {
    let spec = match arg {
        "identity" => InputDictionarySpec {
            kind: InputDictionaryKind::Identity,
            m: input_dim,
        },
        "sin" => InputDictionarySpec {
            kind: InputDictionaryKind::SinAugmented,
            m: input_dim,
        },
        path => {
            let p = PathBuf::from(path);
            require_file(&p)?;
            read_json(&p)?
        }
    };
    Ok(InputDictionary::from_spec(&spec)?)
}

fn fit(a: &FitArgs, seed: u64, exec: Exec) -> CliResult {
    for t in &a.traj {
        require_file(t)?;
    }
    require_out(&a.out)?;
    if !(a.zeta >= 0.0 && a.zeta.is_finite()) {
        return Err(usage("--zeta must be a finite non-negative number"));
    }
    let trajs = a
        .traj
        .iter()
        .map(|p| read_trajectory_csv(p))
        .collect::<koopgram::Result<Vec<_>>>()?;
    let dict = load_dictionary(&a.dict, trajs[0].state_dim())?;
    let model = match &a.input_dict {
        Some(arg) => {
            let idict = load_input_dictionary(arg, trajs[0].input_dim())?;
            let snaps = build_snapshots(&trajs, &dict, Some(&idict), exec)?;
            fit_koopman_with_input(&snaps, a.zeta)?
        }
        None => fit_koopman(&build_snapshots(&trajs, &dict, None, exec)?, a.zeta)?,
    };
    info!(
        "fitted {}-dimensional model on {} trajectories, residual {:e}",
        model.lifted_dim(),
        trajs.len(),
        model.fit_residual()
    );
    write_json(&a.out, &ModelFile::from_model(&model, seed)?)?;
    Ok(())
}

fn load_model(p: &Path) -> CliResult<koopgram::edmd::KoopmanModel> {
    let file: ModelFile = read_json(p)?;
    file.to_model()
        .map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn gramians(a: &GramianArgs, seed: u64) -> CliResult {
    require_file(&a.model)?;
    require_out(&a.out)?;
    let model = load_model(&a.model)?;
    let mut g = match a.kind {
        KindArg::Obs => observability_gramian(&model, a.horizon)?,
        KindArg::Ctrl => controllability_gramian(&model, a.horizon)?,
    };
    let mut name = None;
    if let Some(ProjectArg::State) = a.project {
        g = project(&g, model.p_x().matrix())?;
        name = Some("state");
    }
    if a.normalize {
        g = g.normalized();
    }
    let file = GramianFile::from_gramian(&g, name, seed);
    info!(
        "{:?} gramian, horizon {}, lambda in [{:e}, {:e}]",
        file.kind, file.horizon, file.lambda_min, file.lambda_max
    );
    write_json(&a.out, &file)?;
    Ok(())
}

fn balance_cmd(a: &BalanceArgs, seed: u64) -> CliResult {
    for p in [&a.model, &a.xc, &a.xo] {
        require_file(p)?;
    }
    require_out(&a.out)?;
    if let Some(eps) = a.eps_reg {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(usage("--eps-reg must be a finite non-negative number"));
        }
    }
    let model = load_model(&a.model)?;
    let load_g = |p: &Path| -> CliResult<_> {
        let f: GramianFile = read_json(p)?;
        f.to_gramian()
            .map_err(|e| usage(format!("{}: {e}", p.display())))
    };
    let (xc, xo) = (load_g(&a.xc)?, load_g(&a.xo)?);
    let bal = balance(&model, &xc, &xo, BalanceOptions { eps_reg: a.eps_reg })?;
    info!(
        "balanced order {} ({} truncated), regularization {:e}",
        bal.order(),
        bal.truncated,
        bal.regularization_used
    );
    write_json(&a.out, &BalancedFile::from_balanced(&bal, seed))?;
    Ok(())
}

fn reduce(a: &ReduceArgs, seed: u64) -> CliResult {
    require_file(&a.bal)?;
    require_out(&a.out)?;
    let file: BalancedFile = read_json(&a.bal)?;
    let bal = file
        .to_balanced()
        .map_err(|e| usage(format!("{}: {e}", a.bal.display())))?;
    let order = a.order as usize;
    if order > bal.order() {
        return Err(usage(format!(
            "--order {order} exceeds the balanced order {}",
            bal.order()
        )));
    }
    let rm = truncate(&bal, order)?;
    if rm.advisory_only {
        log::warn!("balanced model is not stable; the error bound is advisory only");
    }
    info!(
        "order {order}: error bound [{:e}, {:e}]",
        rm.bound_lower, rm.bound_upper
    );
    write_json(&a.out, &ReducedFile::from_reduced(&rm, seed))?;
    Ok(())
}

fn demo(a: &DemoArgs, seed: u64, exec: Exec) -> CliResult {
    if let Some(p) = &a.thresholds {
        require_file(p)?;
    }
    if let Some(p) = &a.out {
        require_out(p)?;
    }
    if let Some(dir) = &a.csv_dir {
        if !dir.is_dir() {
            return Err(usage(format!("{}: not a directory", dir.display())));
        }
    }
    let mut th: DemoThresholds = match &a.thresholds {
        Some(p) => read_json(p)?,
        None => DemoThresholds::default(),
    };
    if let Some(h) = a.obs_horizon {
        th.example1_obs_horizon = h;
    }
    let mut setup = DemoSetup::default();
    if let Some(x0) = &a.x0 {
        setup.x0 = <[f64; 2]>::try_from(x0.as_slice())
            .map_err(|_| usage(format!("--x0 needs 2 entries, got {}", x0.len())))?;
    }
    let outcome = run_demo(a.example, seed, &setup, &th, exec)?;
    let text = to_json_string(&outcome.report);
    match &a.out {
        Some(p) => fs::write(p, &text).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })?,
        None => print!("{text}"),
    }
    if let Some(dir) = &a.csv_dir {
        for s in &outcome.series {
            let p = dir.join(format!("{}.csv", s.name));
            fs::write(&p, s.to_csv()).map_err(|e| Error::Io {
                path: p.display().to_string(),
                source: e,
            })?;
        }
    }
    for c in &outcome.report.checks {
        info!(
            "{} {}: measured {:e} {} {:e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            serde_json::to_value(c.comparison)
                .expect("serializes")
                .as_str()
                .unwrap_or("?"),
            c.threshold
        );
    }
    let failed: Vec<String> = outcome
        .report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}
