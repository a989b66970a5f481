//! Flat key=value configuration shared by every subcommand.
//!
//! Precedence, lowest to highest: built-in defaults, the file named by
//! EPIFLOW_CONFIG, the file given with --config, then --set KEY=VALUE flags
//! and the dedicated flags (--regularizer, --seed).

use std::path::Path;

use epiflow_core::{Error, OptimizerConfig, Regularizer};

/// Applies one key/value pair onto the config. Keys mirror the loss and
/// optimizer field names exactly.
pub fn apply(cfg: &mut OptimizerConfig, key: &str, val: &str) -> Result<(), Error> {
    let bad = |what: &str| Error::BadConfig(format!("bad value '{val}' for {what}"));
    let f = |what: &str| val.parse::<f64>().map_err(|_| bad(what));
    let u = |what: &str| val.parse::<usize>().map_err(|_| bad(what));
    match key {
        "mu1" => cfg.loss.mu1 = f(key)?,
        "mu2" => {
            cfg.loss.mu2 = match val {
                "auto" | "none" => None,
                _ => Some(f(key)?),
            }
        }
        "lambda1" => cfg.loss.lambda1 = f(key)?,
        "lambda2" => cfg.loss.lambda2 = f(key)?,
        "lambda3" => cfg.loss.lambda3 = f(key)?,
        "alpha1" => cfg.loss.alpha1 = f(key)?,
        "alpha2" => cfg.loss.alpha2 = f(key)?,
        "tau" => cfg.loss.tau = f(key)?,
        "lambda_sub" => cfg.loss.lambda_sub = f(key)?,
        "lambda_seg" => cfg.loss.lambda_seg = f(key)?,
        "affinity_keep" => cfg.loss.affinity_keep = u(key)?,
        "sample_count" => cfg.loss.sample_count = u(key)?,
        "charbonnier_eps" => cfg.loss.charbonnier_eps = f(key)?,
        "census_radius" => cfg.loss.census_radius = u(key)?,
        "census_eps" => cfg.loss.census_eps = f(key)?,
        "lift_normalize" => {
            cfg.loss.lift_normalize = val.parse::<bool>().map_err(|_| bad(key))?
        }
        "rng_seed" => cfg.loss.rng_seed = val.parse::<u64>().map_err(|_| bad(key))?,
        "levels" => cfg.levels = u(key)?,
        "iters_per_level" => cfg.iters_per_level = u(key)?,
        "step" => cfg.step = f(key)?,
        "step_decay" => cfg.step_decay = f(key)?,
        "median_interval" => cfg.median_interval = u(key)?,
        "epi_fraction" => cfg.epi_fraction = f(key)?,
        "epi_levels" => cfg.epi_levels = u(key)?,
        "momentum" => cfg.momentum = f(key)?,
        "warmup_iters" => cfg.warmup_iters = u(key)?,
        "f_refresh_interval" => cfg.f_refresh_interval = u(key)?,
        "min_coarse_side" => cfg.min_coarse_side = u(key)?,
        "regularizer" => cfg.regularizer = Regularizer::parse(val)?,
        other => return Err(Error::BadConfig(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

/// Parses a config file: one `key = value` per line, `#` starts a comment,
/// blank lines ignored.
pub fn apply_file(cfg: &mut OptimizerConfig, path: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line.split_once('=').ok_or_else(|| {
            Error::BadConfig(format!("{}:{}: expected key = value", path.display(), lineno + 1))
        })?;
        apply(cfg, key.trim(), val.trim())?;
    }
    Ok(())
}

/// Builds the effective config from all sources for one invocation.
pub fn resolve(
    config_flag: Option<&Path>,
    sets: &[String],
    regularizer: Option<&str>,
    seed: Option<u64>,
) -> Result<OptimizerConfig, Error> {
    let mut cfg = OptimizerConfig::default();
    if let Ok(env_path) = std::env::var("EPIFLOW_CONFIG") {
        if !env_path.is_empty() {
            apply_file(&mut cfg, Path::new(&env_path))?;
        }
    }
    if let Some(p) = config_flag {
        apply_file(&mut cfg, p)?;
    }
    for pair in sets {
        let (key, val) = pair.split_once('=').ok_or_else(|| {
            Error::BadConfig(format!("--set expects KEY=VALUE, got '{pair}'"))
        })?;
        apply(&mut cfg, key.trim(), val.trim())?;
    }
    if let Some(r) = regularizer {
        cfg.regularizer = Regularizer::parse(r)?;
    }
    if let Some(s) = seed {
        cfg.loss.rng_seed = s;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn keys_route_to_their_fields() {
        let mut cfg = OptimizerConfig::default();
        apply(&mut cfg, "mu1", "0.5").unwrap();
        apply(&mut cfg, "mu2", "0.25").unwrap();
        apply(&mut cfg, "iters_per_level", "17").unwrap();
        apply(&mut cfg, "epi_levels", "3").unwrap();
        apply(&mut cfg, "lambda_sub", "42").unwrap();
        apply(&mut cfg, "regularizer", "lowrank").unwrap();
        apply(&mut cfg, "rng_seed", "9").unwrap();
        assert_eq!(cfg.loss.mu1, 0.5);
        assert_eq!(cfg.loss.mu2, Some(0.25));
        assert_eq!(cfg.iters_per_level, 17);
        assert_eq!(cfg.epi_levels, 3);
        assert_eq!(cfg.loss.lambda_sub, 42.0);
        assert!(matches!(cfg.regularizer, Regularizer::LowRank));
        assert_eq!(cfg.loss.rng_seed, 9);
        apply(&mut cfg, "mu2", "auto").unwrap();
        assert_eq!(cfg.loss.mu2, None);
    }

    #[test]
    fn unknown_key_and_bad_value_are_config_errors() {
        let mut cfg = OptimizerConfig::default();
        assert!(matches!(apply(&mut cfg, "does_not_exist", "1"), Err(Error::BadConfig(_))));
        assert!(matches!(apply(&mut cfg, "mu1", "not-a-number"), Err(Error::BadConfig(_))));
        assert!(matches!(apply(&mut cfg, "regularizer", "ransac"), Err(Error::BadConfig(_))));
    }

    #[test]
    fn file_parsing_handles_comments_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comment line").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "mu1 = 0.125   # trailing comment").unwrap();
        writeln!(f, "levels = 2").unwrap();
        drop(f);
        let mut cfg = OptimizerConfig::default();
        apply_file(&mut cfg, &path).unwrap();
        assert_eq!(cfg.loss.mu1, 0.125);
        assert_eq!(cfg.levels, 2);

        let bad = dir.path().join("b.cfg");
        std::fs::write(&bad, "mu1 = 0.1\nno equals sign here\n").unwrap();
        let err = apply_file(&mut cfg, &bad).unwrap_err();
        match err {
            Error::BadConfig(msg) => assert!(msg.contains(":2:"), "message: {msg}"),
            other => panic!("expected BadConfig, got {other:?}"),
        }
    }

    // one test owns every EPIFLOW_CONFIG manipulation: the variable is
    // process-global and the harness runs tests on threads
    #[test]
    fn precedence_env_then_file_then_set_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let env_file = dir.path().join("env.cfg");
        std::fs::write(&env_file, "mu1 = 0.111\niters_per_level = 11\nrng_seed = 1\n").unwrap();
        let flag_file = dir.path().join("flag.cfg");
        std::fs::write(&flag_file, "mu1 = 0.222\nrng_seed = 2\nregularizer = sampson\n")
            .unwrap();

        std::env::set_var("EPIFLOW_CONFIG", &env_file);
        let cfg = resolve(
            Some(&flag_file),
            &["mu1=0.333".into()],
            Some("subspace"),
            Some(7),
        )
        .unwrap();
        std::env::remove_var("EPIFLOW_CONFIG");

        // env applied first: its unshadowed key survives
        assert_eq!(cfg.iters_per_level, 11);
        // file overrides env, --set overrides file, flags override everything
        assert_eq!(cfg.loss.mu1, 0.333);
        assert!(matches!(cfg.regularizer, Regularizer::Subspace));
        assert_eq!(cfg.loss.rng_seed, 7);

        // with the env var absent the defaults stand
        let cfg = resolve(None, &[], None, None).unwrap();
        assert_eq!(cfg.iters_per_level, OptimizerConfig::default().iters_per_level);

        // malformed --set
        let err = resolve(None, &["mu1".into()], None, None).unwrap_err();
        assert!(matches!(err, Error::BadConfig(_)));
    }
}
